#include "dac/datagen/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "dac/common/error.hpp"
#include "dac/common/gaussian.hpp"

namespace dac::data {

namespace {

struct Point {
  double x, y;
};

int vertex_count(ShapeKind kind) { return kind == ShapeKind::Triangle ? 3 : 4; }

// Convex polygon vertices in order of increasing angle.
std::array<Point, 4> vertices(const SceneShape& s) {
  const int n = vertex_count(s.kind);
  const double r = s.size / 2.0;
  // Triangle apex points up (negative y) and squares sit axis-aligned at rotation 0.
  const double base = s.kind == ShapeKind::Triangle ? -std::numbers::pi / 2.0 : std::numbers::pi / 4.0;
  std::array<Point, 4> v{};
  for (int k = 0; k < n; ++k) {
    const double a = base + s.rotation + 2.0 * std::numbers::pi * k / n;
    v[static_cast<std::size_t>(k)] = {s.cx + r * std::cos(a), s.cy + r * std::sin(a)};
  }
  return v;
}

// Calls fn(row-major index) for every pixel whose centre lies inside the shape.
template <class Fn>
void for_each_inside(const SceneShape& s, std::size_t n, Fn fn) {
  const double r = s.size / 2.0;
  const double extent = static_cast<double>(n);
  const auto lo_y = static_cast<std::size_t>(std::clamp(std::floor(s.cy - r), 0.0, extent));
  const auto hi_y = static_cast<std::size_t>(std::clamp(std::ceil(s.cy + r), 0.0, extent));
  const auto lo_x = static_cast<std::size_t>(std::clamp(std::floor(s.cx - r), 0.0, extent));
  const auto hi_x = static_cast<std::size_t>(std::clamp(std::ceil(s.cx + r), 0.0, extent));
  for (std::size_t y = lo_y; y < hi_y; ++y) {
    for (std::size_t x = lo_x; x < hi_x; ++x) {
      if (contains(s, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) fn(y * n + x);
    }
  }
}

}  // namespace

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Triangle: return "triangle";
    case ShapeKind::Square: return "square";
    case ShapeKind::Disk: return "disk";
  }
  return "?";
}

ShapeKind shape_kind_from_string(const std::string& name) {
  if (name == "triangle") return ShapeKind::Triangle;
  if (name == "square") return ShapeKind::Square;
  if (name == "disk") return ShapeKind::Disk;
  throw FormatError("unknown shape kind '" + name + "'");
}

void validate_scene(const Scene& scene) {
  const double n = static_cast<double>(scene.image_size);
  if (scene.image_size == 0) throw ValueError("scene image size must be positive");
  if (!(scene.noise_strength >= 0.0) || !(scene.smoothing_sigma >= 0.0)) {
    throw ValueError("scene noise strength and smoothing sigma must be nonnegative");
  }
  for (const SceneShape& s : scene.shapes) {
    const double r = s.size / 2.0;
    if (s.cx - r < 0.0 || s.cx + r > n || s.cy - r < 0.0 || s.cy + r > n) {
      throw ValueError(to_string(s.kind) + " at (" + std::to_string(s.cx) + ", " + std::to_string(s.cy) +
                       ") with size " + std::to_string(s.size) + " leaves the image");
    }
    // Small slack so sizes drawn exactly at the range ends survive the multiplication.
    const double eps = 1e-9 * n;
    if (s.size < kMinSizeFraction * n - eps || s.size > kMaxSizeFraction * n + eps) {
      throw ValueError("shape size " + std::to_string(s.size) + " outside [0.2, 0.4] of the image size");
    }
    if (s.intensity < kMinIntensity || s.intensity > kMaxIntensity) {
      throw ValueError("shape intensity " + std::to_string(s.intensity) + " outside [120, 200]");
    }
  }
}

double expected_area(const SceneShape& s) {
  const double r = s.size / 2.0;
  switch (s.kind) {
    case ShapeKind::Disk: return std::numbers::pi * r * r;
    case ShapeKind::Square: return 2.0 * r * r;
    case ShapeKind::Triangle: return 3.0 * std::sqrt(3.0) / 4.0 * r * r;
  }
  return 0.0;
}

bool contains(const SceneShape& s, double x, double y) {
  if (s.kind == ShapeKind::Disk) {
    const double dx = x - s.cx, dy = y - s.cy, r = s.size / 2.0;
    return dx * dx + dy * dy <= r * r;
  }
  const auto v = vertices(s);
  const int n = vertex_count(s.kind);
  for (int k = 0; k < n; ++k) {
    const Point a = v[static_cast<std::size_t>(k)];
    const Point b = v[static_cast<std::size_t>((k + 1) % n)];
    // Vertices come in increasing angle, so inside points lie left of every edge.
    if ((b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x) < 0.0) return false;
  }
  return true;
}

std::vector<std::uint8_t> foreground_mask(const Scene& scene) {
  const std::size_t n = scene.image_size;
  std::vector<std::uint8_t> mask(n * n, 0);
  for (const SceneShape& s : scene.shapes) {
    for_each_inside(s, n, [&](std::size_t i) { mask[i] = 1; });
  }
  return mask;
}

double coverage_ratio(const Scene& scene) {
  double expected = 0.0;
  for (const SceneShape& s : scene.shapes) expected += expected_area(s);
  if (expected == 0.0) return 1.0;
  const auto mask = foreground_mask(scene);
  const auto fg = std::count(mask.begin(), mask.end(), std::uint8_t{1});
  return static_cast<double>(fg) / expected;
}

grad::Tensor render_scene(const Scene& scene) {
  validate_scene(scene);
  const std::size_t n = scene.image_size;
  std::vector<double> canvas(n * n, 0.0);
  for (const SceneShape& s : scene.shapes) {
    for_each_inside(s, n, [&](std::size_t i) { canvas[i] = s.intensity; });
  }
  if (scene.noise_strength > 0.0) {
    std::mt19937_64 rng(scene.noise_seed);
    std::normal_distribution<double> noise(0.0, scene.noise_strength);
    for (double& v : canvas) v += noise(rng);
  }
  if (scene.smoothing_sigma > 0.0) canvas = gaussian_blur_plane(canvas, n, n, scene.smoothing_sigma);
  grad::Tensor image({1, n, n});
  for (std::size_t i = 0; i < n * n; ++i) image[i] = std::clamp(canvas[i] / 255.0, 0.0, 1.0);
  return image;
}

}  // namespace dac::data
