#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dac/gradcore/tensor.hpp"

namespace dac::data {

enum class ShapeKind { Triangle, Square, Disk };

std::string to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& name);

/// All kinds share one bounding circle of diameter `size`: disk diameter,
/// square side size/sqrt(2), equilateral triangle with circumradius size/2.
struct SceneShape {
  ShapeKind kind = ShapeKind::Disk;
  double cx = 0.0, cy = 0.0;  // pixel coordinates, x to the right, y down
  double size = 0.0;
  double rotation = 0.0;      // radians
  double intensity = 0.0;     // 0..255 scale

  friend bool operator==(const SceneShape&, const SceneShape&) = default;
};

struct Scene {
  std::size_t image_size = 128;
  std::vector<SceneShape> shapes;  // drawn in order, later shapes on top
  std::uint64_t noise_seed = 0;
  double noise_strength = 0.0;  // std of additive Gaussian pixel noise, 0..255 scale
  double smoothing_sigma = 0.0; // 0 disables smoothing

  friend bool operator==(const Scene&, const Scene&) = default;
};

inline constexpr double kMinSizeFraction = 0.2;
inline constexpr double kMaxSizeFraction = 0.4;
inline constexpr double kMinIntensity = 120.0;
inline constexpr double kMaxIntensity = 200.0;

/// Throws ValueError when a shape leaves the image or breaks the size/intensity ranges.
void validate_scene(const Scene& scene);

double expected_area(const SceneShape& shape);
bool contains(const SceneShape& shape, double x, double y);

/// Pixels whose centre lies inside at least one shape, row-major.
std::vector<std::uint8_t> foreground_mask(const Scene& scene);

/// Foreground pixel count over the summed analytic areas (1 for an empty scene).
double coverage_ratio(const Scene& scene);

/// (1, h, w) image in [0, 1]: shapes over background 0, additive noise,
/// Gaussian smoothing, scaling by 1/255 and clamping.
grad::Tensor render_scene(const Scene& scene);

struct ImageSample {
  grad::Tensor image;  // (1, h, w)
  int label = 0;
  std::uint64_t seed = 0;
  std::optional<Scene> scene;
  std::string source;  // file path for ingested data
};

}  // namespace dac::data
