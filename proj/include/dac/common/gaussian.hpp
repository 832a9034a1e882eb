#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dac {

/// Normalized 1-d Gaussian taps for offsets -radius..radius, radius = ceil(2 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Reflects an out-of-range index back into [0, n) (edge sample repeated: -1 -> 0, n -> n-1).
std::size_t mirror_index(std::ptrdiff_t i, std::size_t n);

/// Separable Gaussian smoothing of a row-major h x w plane, mirror padding.
std::vector<double> gaussian_blur_plane(std::span<const double> plane, std::size_t h, std::size_t w, double sigma);

}  // namespace dac
