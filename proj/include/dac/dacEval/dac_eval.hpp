#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dac/datagen/pairs.hpp"
#include "dac/gradcore/tensor.hpp"
#include "dac/modelzoo/checkpoint.hpp"

namespace dac::eval {

struct BinaryMask {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  BinaryMask() = default;
  BinaryMask(std::size_t rows, std::size_t cols, bool value = false)
      : h(rows), w(cols), bits(rows * cols, value ? 1 : 0) {}

  bool at(std::size_t y, std::size_t x) const { return bits[y * w + x] != 0; }
  std::size_t count() const;
  double fraction() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Pixel true iff map >= t. The map must be (h, w) and nonnegative.
BinaryMask threshold_mask(const grad::Tensor& map, double t);

// Square window x window structuring element with origin (window/2, window/2).
// Outside the image counts as false for dilation and true for erosion.
BinaryMask dilate(const BinaryMask& mask, std::size_t window);
BinaryMask erode(const BinaryMask& mask, std::size_t window);
/// Dilation followed by erosion.
BinaryMask morph_close(const BinaryMask& mask, std::size_t window = 10);

/// Normalized Gaussian of radius ceil(2 sigma), mirror padding, clamped to [0, 1].
grad::Tensor gaussian_blur(const BinaryMask& mask, double sigma = 11.0);

/// m * x_o + (1 - m) * x_c with an (h, w) mask broadcast over channels.
grad::Tensor compose_hybrid(const grad::Tensor& x_o, const grad::Tensor& x_c, const grad::Tensor& soft_mask);

struct CurvePoint {
  double threshold = 0.0;
  double fraction = 0.0;  // of the closed binary mask
  double delta = 0.0;     // f(x_h)_i - f(x_c)_i

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct CurveConfig {
  std::size_t n_thresholds = 100;
  std::size_t window = 10;
  double sigma = 11.0;
};

/// Window 10 and sigma 11 are pixel sizes for 128 px inputs; this scales both
/// by image_size / 128 (window rounded, at least 1).
CurveConfig scaled_curve_config(std::size_t image_size, std::size_t n_thresholds = 100);

/// Thresholds at the quantile levels k/(n+1), k = 1..n, of the map values,
/// plus +inf and 0. Each threshold gives mask -> closing -> blur -> hybrid and
/// the change in f_i; points sharing a fraction are merged (mean change) and
/// the curve is sorted by fraction. f(x_c) and f(x_o) are read off the +inf and
/// 0 hybrids, so the anchors (0, 0) and (1, f(x_o)_i - f(x_c)_i) are exact.
std::vector<CurvePoint> dac_curve(const model::Checkpoint& ck, const data::PairRecord& pair, const grad::Tensor& map,
                                  const CurveConfig& config = {});

/// Trapezoidal area under the curve. Needs sorted fractions starting at 0 and ending at 1.
double dac_score(const std::vector<CurvePoint>& points);

struct MinMask {
  double threshold = 0.0;
  double fraction = 0.0;
  double score = 0.0;  // delta at that point
};

/// Point minimizing fraction - delta; ties go to the smaller fraction.
MinMask min_mask(const std::vector<CurvePoint>& points);

struct DacResult {
  std::string pair_id;
  std::string method;
  int class_i = 0;
  int class_j = 0;
  std::vector<CurvePoint> curve;
  double auc = 0.0;
  MinMask minimal;
};

DacResult evaluate_pair(const model::Checkpoint& ck, const data::PairRecord& pair, const std::string& method,
                        const grad::Tensor& map, const CurveConfig& config = {});

struct AggregateRow {
  std::string method;
  double mean_dac = 0.0;
  std::size_t pairs = 0;
  std::size_t class_pairs = 0;
};

/// Mean DAC per ordered class pair (i -> j), then mean over class pairs, per
/// method. Rows are sorted by method name; independent of input order.
std::vector<AggregateRow> aggregate(const std::vector<DacResult>& results);

/// Linear interpolation of a curve onto the given fractions.
std::vector<double> resample_curve(const std::vector<CurvePoint>& points, const std::vector<double>& fractions);

}  // namespace dac::eval
