#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dac/datagen/scene.hpp"
#include "dac/gradcore/tensor.hpp"

namespace dac::data {

/// 8-bit grayscale PNG; values in [0,1] are rounded to the nearest of 256 levels.
/// Accepts (1, h, w) or (h, w) tensors.
void write_png_gray(const std::filesystem::path& path, const grad::Tensor& image);
/// Any PNG, converted to 8-bit gray, returned as (1, h, w) in [0,1].
grad::Tensor read_png_gray(const std::filesystem::path& path);

/// IDX image (magic 2051) and label (magic 2049) files, e.g. MNIST.
std::vector<ImageSample> load_mnist_idx(const std::filesystem::path& images_path,
                                        const std::filesystem::path& labels_path);

std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);

/// Number of classes for a dataset id: disc-a 2, disc-b 3, mnist 10.
int num_classes_for(const std::string& dataset);

struct DatasetInfo {
  std::string dataset;
  std::size_t image_size = 0;
  int num_classes = 0;
  std::uint64_t seed = 0;
  std::size_t count = 0;
};

struct Dataset {
  DatasetInfo info;
  std::vector<ImageSample> samples;
};

// Directory layout:
//   dataset.json     {"dataset", "image_size", "num_classes", "seed", "count"}
//   manifest.jsonl   one {"id", "label", "path", "scene"?} object per line
//   images/NNNNNN.png
void write_dataset(const std::filesystem::path& dir, const DatasetInfo& info, const std::vector<ImageSample>& samples);
/// Images come back exactly as stored (8-bit quantized).
Dataset load_dataset(const std::filesystem::path& dir);

/// Stacks the images of `samples` into an (N, 1, h, w) batch.
grad::Tensor stack_images(const std::vector<ImageSample>& samples);

}  // namespace dac::data
