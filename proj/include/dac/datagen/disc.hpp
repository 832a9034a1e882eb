#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dac/datagen/scene.hpp"

namespace dac::data {

// Disc-B classes name the missing shape kind.
enum DiscBClass : int { kNoDisk = 0, kNoSquare = 1, kNoTriangle = 2 };

struct GeneratorConfig {
  std::size_t image_size = 128;
  double max_noise = 20.0;  // noise strength ~ U[0, max_noise]
  double min_sigma = 1.0;   // smoothing sigma ~ U[min_sigma, max_sigma]
  double max_sigma = 2.0;
  double min_coverage = 0.9;  // rejection rule: foreground / expected area
  int max_attempts = 1000;
};

/// Per-sample generator stream, independent of how samples are sharded.
std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index);

int disc_a_label(const Scene& scene);  // 0 for an even triangle count
int disc_b_label(const Scene& scene);  // ValueError unless exactly one kind is missing

ImageSample gen_disc_a_sample(std::uint64_t seed, std::uint64_t index, const GeneratorConfig& config = {});
ImageSample gen_disc_b_sample(std::uint64_t seed, std::uint64_t index, const GeneratorConfig& config = {});

std::vector<ImageSample> gen_disc_a(std::uint64_t seed, std::size_t count, std::size_t image_size = 128);
std::vector<ImageSample> gen_disc_b(std::uint64_t seed, std::size_t count, std::size_t image_size = 128);

/// Removes one uniformly chosen triangle when there are several, otherwise
/// adds one. Noise seed and smoothing are kept, so pixels change only near the edit.
ImageSample make_counterfactual_disc_a(const ImageSample& sample, std::mt19937_64& rng,
                                       const GeneratorConfig& config = {});

/// Replaces the shape of the kind that must vanish by the kind that must
/// appear, keeping centre, size, rotation, intensity and noise.
ImageSample make_counterfactual_disc_b(const ImageSample& sample, int target_class);

}  // namespace dac::data
