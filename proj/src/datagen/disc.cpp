#include "dac/datagen/disc.hpp"

#include <algorithm>
#include <numbers>

#include "dac/common/error.hpp"

namespace dac::data {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

SceneShape draw_shape(ShapeKind kind, std::size_t image_size, std::mt19937_64& rng) {
  const double n = static_cast<double>(image_size);
  SceneShape s;
  s.kind = kind;
  s.size = uniform(rng, kMinSizeFraction * n, kMaxSizeFraction * n);
  s.cx = uniform(rng, s.size / 2.0, n - s.size / 2.0);
  s.cy = uniform(rng, s.size / 2.0, n - s.size / 2.0);
  s.rotation = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  s.intensity = uniform(rng, kMinIntensity, kMaxIntensity);
  return s;
}

// Draws shapes of the given kinds plus the texture parameters until the
// rejection rule accepts the scene.
Scene draw_scene(const std::vector<ShapeKind>& kinds, const GeneratorConfig& config, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    Scene scene;
    scene.image_size = config.image_size;
    for (ShapeKind k : kinds) scene.shapes.push_back(draw_shape(k, config.image_size, rng));
    scene.noise_seed = rng();
    scene.noise_strength = uniform(rng, 0.0, config.max_noise);
    scene.smoothing_sigma = uniform(rng, config.min_sigma, config.max_sigma);
    if (coverage_ratio(scene) >= config.min_coverage) return scene;
  }
  throw GenerationError("no scene passed the coverage rule within " + std::to_string(config.max_attempts) +
                        " attempts");
}

ShapeKind missing_kind(int disc_b_class) {
  switch (disc_b_class) {
    case kNoDisk: return ShapeKind::Disk;
    case kNoSquare: return ShapeKind::Square;
    case kNoTriangle: return ShapeKind::Triangle;
  }
  throw ValueError("Disc-B class must be 0, 1 or 2, got " + std::to_string(disc_b_class));
}

std::size_t count_kind(const Scene& scene, ShapeKind kind) {
  return static_cast<std::size_t>(std::count_if(scene.shapes.begin(), scene.shapes.end(),
                                                [&](const SceneShape& s) { return s.kind == kind; }));
}

const Scene& require_scene(const ImageSample& sample) {
  if (!sample.scene) throw ValueError("counterfactual generation needs the sample's scene");
  return *sample.scene;
}

}  // namespace

std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

int disc_a_label(const Scene& scene) {
  const std::size_t t = count_kind(scene, ShapeKind::Triangle);
  if (t != scene.shapes.size() || t == 0) throw ValueError("Disc-A scenes hold one or more triangles only");
  return static_cast<int>(t % 2);
}

int disc_b_label(const Scene& scene) {
  int label = -1;
  for (int c = 0; c < 3; ++c) {
    const std::size_t n = count_kind(scene, missing_kind(c));
    if (n == 0) {
      if (label >= 0) throw ValueError("Disc-B scene misses more than one shape kind");
      label = c;
    } else if (n != 1) {
      throw ValueError("Disc-B scenes hold at most one shape per kind");
    }
  }
  if (label < 0) throw ValueError("Disc-B scene misses no shape kind");
  return label;
}

ImageSample gen_disc_a_sample(std::uint64_t seed, std::uint64_t index, const GeneratorConfig& config) {
  std::mt19937_64 rng = sample_rng(seed, index);
  const int label = std::uniform_int_distribution<int>(0, 1)(rng);
  const int count = 2 * std::uniform_int_distribution<int>(0, 2)(rng) + (label == 0 ? 2 : 1);
  Scene scene = draw_scene(std::vector<ShapeKind>(static_cast<std::size_t>(count), ShapeKind::Triangle), config, rng);
  return {render_scene(scene), label, seed, std::move(scene), {}};
}

ImageSample gen_disc_b_sample(std::uint64_t seed, std::uint64_t index, const GeneratorConfig& config) {
  std::mt19937_64 rng = sample_rng(seed, index);
  const int label = std::uniform_int_distribution<int>(0, 2)(rng);
  std::vector<ShapeKind> kinds;
  for (int c = 0; c < 3; ++c) {
    if (c != label) kinds.push_back(missing_kind(c));
  }
  Scene scene = draw_scene(kinds, config, rng);
  return {render_scene(scene), label, seed, std::move(scene), {}};
}

std::vector<ImageSample> gen_disc_a(std::uint64_t seed, std::size_t count, std::size_t image_size) {
  if (count == 0) throw ValueError("gen_disc_a: count must be at least 1");
  GeneratorConfig config;
  config.image_size = image_size;
  std::vector<ImageSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(gen_disc_a_sample(seed, i, config));
  return out;
}

std::vector<ImageSample> gen_disc_b(std::uint64_t seed, std::size_t count, std::size_t image_size) {
  if (count == 0) throw ValueError("gen_disc_b: count must be at least 1");
  GeneratorConfig config;
  config.image_size = image_size;
  std::vector<ImageSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(gen_disc_b_sample(seed, i, config));
  return out;
}

ImageSample make_counterfactual_disc_a(const ImageSample& sample, std::mt19937_64& rng,
                                       const GeneratorConfig& config) {
  Scene scene = require_scene(sample);
  disc_a_label(scene);
  if (scene.shapes.size() > 1) {
    const auto victim = std::uniform_int_distribution<std::size_t>(0, scene.shapes.size() - 1)(rng);
    scene.shapes.erase(scene.shapes.begin() + static_cast<std::ptrdiff_t>(victim));
  } else {
    bool placed = false;
    for (int attempt = 0; attempt < config.max_attempts && !placed; ++attempt) {
      scene.shapes.push_back(draw_shape(ShapeKind::Triangle, scene.image_size, rng));
      placed = coverage_ratio(scene) >= config.min_coverage;
      if (!placed) scene.shapes.pop_back();
    }
    if (!placed) {
      throw GenerationError("could not place an extra triangle within " + std::to_string(config.max_attempts) +
                            " attempts");
    }
  }
  ImageSample out{render_scene(scene), disc_a_label(scene), sample.seed, scene, {}};
  return out;
}

ImageSample make_counterfactual_disc_b(const ImageSample& sample, int target_class) {
  Scene scene = require_scene(sample);
  const int source_class = disc_b_label(scene);
  const ShapeKind vanish = missing_kind(target_class);
  if (target_class == source_class) throw ValueError("counterfactual target equals the sample's class");
  for (SceneShape& s : scene.shapes) {
    if (s.kind == vanish) s.kind = missing_kind(source_class);
  }
  ImageSample out{render_scene(scene), disc_b_label(scene), sample.seed, scene, {}};
  return out;
}

}  // namespace dac::data
