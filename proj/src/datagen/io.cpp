#include "dac/datagen/io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "dac/common/error.hpp"

namespace dac::data {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint32_t big_endian_u32(const std::string& bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (std::size_t k = 0; k < 4; ++k) v = (v << 8) | static_cast<unsigned char>(bytes[offset + k]);
  return v;
}

ordered_json scene_json(const Scene& scene) {
  ordered_json shapes = ordered_json::array();
  for (const SceneShape& s : scene.shapes) {
    shapes.push_back({{"kind", to_string(s.kind)},
                      {"cx", s.cx},
                      {"cy", s.cy},
                      {"size", s.size},
                      {"rotation", s.rotation},
                      {"intensity", s.intensity}});
  }
  return {{"image_size", scene.image_size},
          {"shapes", shapes},
          {"noise_seed", scene.noise_seed},
          {"noise_strength", scene.noise_strength},
          {"smoothing_sigma", scene.smoothing_sigma}};
}

Scene scene_from(const nlohmann::json& j) {
  Scene scene;
  scene.image_size = j.at("image_size").get<std::size_t>();
  for (const auto& s : j.at("shapes")) {
    scene.shapes.push_back({shape_kind_from_string(s.at("kind").get<std::string>()), s.at("cx").get<double>(),
                            s.at("cy").get<double>(), s.at("size").get<double>(), s.at("rotation").get<double>(),
                            s.at("intensity").get<double>()});
  }
  scene.noise_seed = j.at("noise_seed").get<std::uint64_t>();
  scene.noise_strength = j.at("noise_strength").get<double>();
  scene.smoothing_sigma = j.at("smoothing_sigma").get<double>();
  return scene;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void write_png_gray(const fs::path& path, const grad::Tensor& image) {
  std::size_t h, w;
  if (image.rank() == 3 && image.dim(0) == 1) {
    h = image.dim(1);
    w = image.dim(2);
  } else if (image.rank() == 2) {
    h = image.dim(0);
    w = image.dim(1);
  } else {
    throw DimensionError("write_png_gray expects (1, h, w) or (h, w), got " + grad::shape_string(image.shape()));
  }
  std::vector<png_byte> pixels(h * w);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double v = image[i];
    if (!std::isfinite(v)) throw NumericError("write_png_gray: non-finite pixel");
    pixels[i] = static_cast<png_byte>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(w);
  png.height = static_cast<png_uint_32>(h);
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw IoError("cannot write PNG " + path.string() + ": " + msg);
  }
}

grad::Tensor read_png_gray(const fs::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    const std::string msg = png.message;
    png_image_free(&png);
    if (!fs::exists(path)) throw IoError("missing image " + path.string());
    throw FormatError("cannot read PNG " + path.string() + ": " + msg);
  }
  png.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> pixels(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw FormatError("cannot decode PNG " + path.string() + ": " + msg);
  }
  grad::Tensor out({1, png.height, png.width});
  for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = pixels[i] / 255.0;
  return out;
}

std::vector<ImageSample> load_mnist_idx(const fs::path& images_path, const fs::path& labels_path) {
  const std::string images = read_file(images_path);
  const std::string labels = read_file(labels_path);
  if (images.size() < 16 || big_endian_u32(images, 0) != 2051) {
    throw FormatError(images_path.string() + ": not an IDX image file (magic 2051)");
  }
  if (labels.size() < 8 || big_endian_u32(labels, 0) != 2049) {
    throw FormatError(labels_path.string() + ": not an IDX label file (magic 2049)");
  }
  const std::size_t n = big_endian_u32(images, 4), rows = big_endian_u32(images, 8), cols = big_endian_u32(images, 12);
  if (big_endian_u32(labels, 4) != n) throw FormatError("IDX image and label counts differ");
  if (images.size() != 16 + n * rows * cols) {
    throw FormatError(images_path.string() + ": payload length " + std::to_string(images.size() - 16) +
                      " does not match " + std::to_string(n) + "x" + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
  if (labels.size() != 8 + n) throw FormatError(labels_path.string() + ": payload length does not match count");
  std::vector<ImageSample> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    grad::Tensor img({1, rows, cols});
    const std::size_t base = 16 + k * rows * cols;
    for (std::size_t i = 0; i < rows * cols; ++i) img[i] = static_cast<unsigned char>(images[base + i]) / 255.0;
    out[k].image = std::move(img);
    out[k].label = static_cast<unsigned char>(labels[8 + k]);
    out[k].source = images_path.string() + "#" + std::to_string(k);
  }
  return out;
}

std::string scene_to_json(const Scene& scene) { return scene_json(scene).dump(); }

Scene scene_from_json(const std::string& text) {
  try {
    return scene_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed scene: ") + e.what());
  }
}

int num_classes_for(const std::string& dataset) {
  if (dataset == "disc-a") return 2;
  if (dataset == "disc-b") return 3;
  if (dataset == "mnist") return 10;
  throw ValueError("unknown dataset '" + dataset + "' (expected disc-a, disc-b or mnist)");
}

void write_dataset(const fs::path& dir, const DatasetInfo& info, const std::vector<ImageSample>& samples) {
  fs::create_directories(dir / "images");
  std::string manifest;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    std::ostringstream id;
    id << std::setw(6) << std::setfill('0') << k;
    const std::string rel = "images/" + id.str() + ".png";
    write_png_gray(dir / rel, samples[k].image);
    ordered_json line = {{"id", id.str()}, {"label", samples[k].label}, {"path", rel}};
    if (samples[k].scene) line["scene"] = scene_json(*samples[k].scene);
    manifest += line.dump() + "\n";
  }
  write_text(dir / "manifest.jsonl", manifest);
  const ordered_json meta = {{"dataset", info.dataset},
                             {"image_size", info.image_size},
                             {"num_classes", info.num_classes},
                             {"seed", info.seed},
                             {"count", samples.size()}};
  write_text(dir / "dataset.json", meta.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  try {
    const auto meta = nlohmann::json::parse(read_file(dir / "dataset.json"));
    ds.info.dataset = meta.at("dataset").get<std::string>();
    ds.info.image_size = meta.at("image_size").get<std::size_t>();
    ds.info.num_classes = meta.at("num_classes").get<int>();
    ds.info.seed = meta.at("seed").get<std::uint64_t>();
    ds.info.count = meta.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "dataset.json").string() + ": " + e.what());
  }
  std::istringstream lines(read_file(dir / "manifest.jsonl"));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty()) continue;
    ImageSample s;
    try {
      const auto j = nlohmann::json::parse(line);
      s.label = j.at("label").get<int>();
      s.source = j.at("path").get<std::string>();
      if (j.contains("scene")) s.scene = scene_from(j.at("scene"));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError((dir / "manifest.jsonl").string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (s.label < 0 || s.label >= ds.info.num_classes) {
      throw FormatError((dir / "manifest.jsonl").string() + ":" + std::to_string(lineno) + ": label out of range");
    }
    s.image = read_png_gray(dir / s.source);
    if (s.image.dim(1) != ds.info.image_size || s.image.dim(2) != ds.info.image_size) {
      throw DimensionError(s.source + " does not match the dataset image size");
    }
    s.seed = ds.info.seed;
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != ds.info.count) throw FormatError("manifest row count differs from dataset.json count");
  return ds;
}

grad::Tensor stack_images(const std::vector<ImageSample>& samples) {
  std::vector<grad::Tensor> images;
  images.reserve(samples.size());
  for (const ImageSample& s : samples) images.push_back(s.image);
  return grad::stack(images);
}

}  // namespace dac::data
