#include "dac/common/gaussian.hpp"

#include <cmath>

#include "dac/common/error.hpp"

namespace dac {

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValueError("gaussian sigma must be positive");
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(2.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t o = -radius; o <= radius; ++o) {
    const double v = std::exp(-0.5 * static_cast<double>(o * o) / (sigma * sigma));
    k[static_cast<std::size_t>(o + radius)] = v;
    total += v;
  }
  for (double& v : k) v /= total;
  // Re-derive the last tap from the running sum so the left-to-right sum is
  // exactly 1 and constant planes pass through the blur bit for bit. For
  // acc in [0.5, 1], 1 - acc and acc + (1 - acc) are both exact.
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < k.size(); ++i) acc += k[i];
  if (acc >= 0.5) k.back() = 1.0 - acc;
  return k;
}

std::size_t mirror_index(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  const std::ptrdiff_t period = 2 * m;
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < m ? i : period - 1 - i);
}

std::vector<double> gaussian_blur_plane(std::span<const double> plane, std::size_t h, std::size_t w, double sigma) {
  if (plane.size() != h * w) throw DimensionError("gaussian_blur_plane: plane size does not match h*w");
  const std::vector<double> k = gaussian_kernel(sigma);
  const auto r = static_cast<std::ptrdiff_t>(k.size() / 2);
  std::vector<double> tmp(h * w), out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t o = -r; o <= r; ++o) {
        acc += k[static_cast<std::size_t>(o + r)] * plane[y * w + mirror_index(static_cast<std::ptrdiff_t>(x) + o, w)];
      }
      tmp[y * w + x] = acc;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t o = -r; o <= r; ++o) {
        acc += k[static_cast<std::size_t>(o + r)] * tmp[mirror_index(static_cast<std::ptrdiff_t>(y) + o, h) * w + x];
      }
      out[y * w + x] = acc;
    }
  }
  return out;
}

}  // namespace dac
