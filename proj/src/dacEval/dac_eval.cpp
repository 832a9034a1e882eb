#include "dac/dacEval/dac_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "dac/common/error.hpp"
#include "dac/common/gaussian.hpp"
#include "dac/modelzoo/classifier.hpp"

namespace dac::eval {

namespace {

using grad::Tensor;

// One pass of a 1-d square-window operator along rows (`along_x`) or columns.
// Each output looks at the input window [pos + lo, pos + hi] (inclusive).
// Dilation: any true inside the image. Erosion: every in-image sample true.
BinaryMask sweep(const BinaryMask& in, std::size_t window, bool along_x, bool erosion) {
  const auto c = static_cast<std::ptrdiff_t>(window / 2);
  const auto w = static_cast<std::ptrdiff_t>(window);
  // dilation: out(p) = OR_b in(p - b + c); erosion: out(p) = AND_b in(p + b - c), b in [0, window)
  const std::ptrdiff_t lo = erosion ? -c : c - (w - 1);
  const std::ptrdiff_t hi = erosion ? w - 1 - c : c;
  const std::size_t lines = along_x ? in.h : in.w, len = along_x ? in.w : in.h;
  BinaryMask out(in.h, in.w);
  std::vector<std::size_t> prefix(len + 1);
  for (std::size_t line = 0; line < lines; ++line) {
    auto idx = [&](std::size_t k) { return along_x ? line * in.w + k : k * in.w + line; };
    for (std::size_t k = 0; k < len; ++k) prefix[k + 1] = prefix[k] + in.bits[idx(k)];
    for (std::size_t k = 0; k < len; ++k) {
      const std::ptrdiff_t a = std::max<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(k) + lo, 0);
      const std::ptrdiff_t b = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(k) + hi, static_cast<std::ptrdiff_t>(len) - 1);
      const std::size_t ones = a <= b ? prefix[static_cast<std::size_t>(b) + 1] - prefix[static_cast<std::size_t>(a)] : 0;
      const std::size_t span = a <= b ? static_cast<std::size_t>(b - a + 1) : 0;
      out.bits[idx(k)] = erosion ? (ones == span) : (ones > 0);
    }
  }
  return out;
}

void check_map(const Tensor& map) {
  if (map.rank() != 2) throw DimensionError("attribution map must be (h, w), got " + grad::shape_string(map.shape()));
  for (double v : map.data()) {
    if (!(v >= 0.0)) throw ValueError("attribution map must be nonnegative and finite for thresholding");
  }
}

void check_window(std::size_t window) {
  if (window == 0) throw ValueError("morphology window must be at least 1");
}

}  // namespace

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

double BinaryMask::fraction() const {
  return bits.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(bits.size());
}

BinaryMask threshold_mask(const Tensor& map, double t) {
  check_map(map);
  BinaryMask m(map.dim(0), map.dim(1));
  for (std::size_t i = 0; i < map.size(); ++i) m.bits[i] = map[i] >= t;
  return m;
}

BinaryMask dilate(const BinaryMask& mask, std::size_t window) {
  check_window(window);
  return sweep(sweep(mask, window, true, false), window, false, false);
}

BinaryMask erode(const BinaryMask& mask, std::size_t window) {
  check_window(window);
  return sweep(sweep(mask, window, true, true), window, false, true);
}

BinaryMask morph_close(const BinaryMask& mask, std::size_t window) { return erode(dilate(mask, window), window); }

Tensor gaussian_blur(const BinaryMask& mask, double sigma) {
  std::vector<double> plane(mask.bits.begin(), mask.bits.end());
  std::vector<double> blurred = gaussian_blur_plane(plane, mask.h, mask.w, sigma);
  Tensor out({mask.h, mask.w});
  for (std::size_t i = 0; i < blurred.size(); ++i) out[i] = std::clamp(blurred[i], 0.0, 1.0);
  return out;
}

Tensor compose_hybrid(const Tensor& x_o, const Tensor& x_c, const Tensor& soft_mask) {
  if (!x_o.same_shape(x_c) || x_o.rank() != 3 || soft_mask.rank() != 2 || soft_mask.dim(0) != x_o.dim(1) ||
      soft_mask.dim(1) != x_o.dim(2)) {
    throw DimensionError("compose_hybrid: images " + grad::shape_string(x_o.shape()) + " / " +
                         grad::shape_string(x_c.shape()) + " and mask " + grad::shape_string(soft_mask.shape()) +
                         " do not agree");
  }
  Tensor out(x_o.shape());
  const std::size_t hw = soft_mask.size();
  for (std::size_t c = 0; c < x_o.dim(0); ++c) {
    for (std::size_t i = 0; i < hw; ++i) {
      // Written as x_c + m (x_o - x_c) so equal inputs reproduce themselves bit for bit.
      const double m = soft_mask[i], o = x_o[c * hw + i], b = x_c[c * hw + i];
      out[c * hw + i] = m == 1.0 ? o : b + m * (o - b);
    }
  }
  return out;
}

CurveConfig scaled_curve_config(std::size_t image_size, std::size_t n_thresholds) {
  if (image_size == 0) throw ValueError("scaled_curve_config: image size must be positive");
  const double scale = static_cast<double>(image_size) / 128.0;
  const auto window = static_cast<std::size_t>(std::max(1L, std::lround(10.0 * scale)));
  return {n_thresholds, window, 11.0 * scale};
}

std::vector<CurvePoint> dac_curve(const model::Checkpoint& ck, const data::PairRecord& pair, const Tensor& map,
                                  const CurveConfig& config) {
  if (!pair.accepted) throw ValueError("pair '" + pair.pair_id + "' was not accepted by the filter");
  check_map(map);
  if (pair.real.rank() != 3 || map.dim(0) != pair.real.dim(1) || map.dim(1) != pair.real.dim(2)) {
    throw DimensionError("map " + grad::shape_string(map.shape()) + " does not match image " +
                         grad::shape_string(pair.real.shape()));
  }
  if (config.n_thresholds == 0) throw ValueError("dac_curve needs at least one quantile threshold");

  std::vector<double> sorted(map.data().begin(), map.data().end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = config.n_thresholds;
  std::vector<double> thresholds{std::numeric_limits<double>::infinity()};
  for (std::size_t k = n; k >= 1; --k) {
    const double q = static_cast<double>(k) / static_cast<double>(n + 1);
    const auto idx = std::min(static_cast<std::size_t>(q * static_cast<double>(sorted.size())), sorted.size() - 1);
    thresholds.push_back(sorted[idx]);
  }
  thresholds.push_back(0.0);
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  // Identical closed masks give identical hybrids; evaluate each once.
  std::map<std::vector<std::uint8_t>, std::size_t> unique_index;
  std::vector<BinaryMask> unique_masks;
  std::vector<std::size_t> mask_of(thresholds.size());
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    BinaryMask closed = morph_close(threshold_mask(map, thresholds[t]), config.window);
    auto [it, inserted] = unique_index.emplace(closed.bits, unique_masks.size());
    if (inserted) unique_masks.push_back(std::move(closed));
    mask_of[t] = it->second;
  }
  // Distinct masks can still give bit-identical hybrids (e.g. x_o == x_c); share
  // their forward so equal hybrids always score equal.
  std::map<std::vector<double>, std::size_t> hybrid_index;
  std::vector<Tensor> hybrids;
  std::vector<std::size_t> hybrid_of(unique_masks.size());
  for (std::size_t u = 0; u < unique_masks.size(); ++u) {
    Tensor h = compose_hybrid(pair.real, pair.counterfactual, gaussian_blur(unique_masks[u], config.sigma));
    auto [it, inserted] = hybrid_index.emplace(std::vector<double>(h.data().begin(), h.data().end()), hybrids.size());
    if (inserted) hybrids.push_back(std::move(h));
    hybrid_of[u] = it->second;
  }
  const Tensor probs = model::predict(ck, grad::stack(hybrids));
  const std::size_t k = ck.spec.num_classes, cls = static_cast<std::size_t>(pair.class_i);
  auto score = [&](std::size_t t) { return probs[hybrid_of[mask_of[t]] * k + cls]; };
  const double f_c = score(0);  // +inf threshold: empty mask, hybrid == x_c

  struct Acc {
    double threshold, sum;
    std::size_t count;
  };
  std::map<double, Acc> by_fraction;
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    const BinaryMask& m = unique_masks[mask_of[t]];
    const double delta = score(t) - f_c;
    auto [it, inserted] = by_fraction.emplace(m.fraction(), Acc{thresholds[t], delta, 1});
    if (!inserted) {
      it->second.sum += delta;
      ++it->second.count;
    }
  }
  std::vector<CurvePoint> curve;
  curve.reserve(by_fraction.size());
  for (const auto& [fraction, acc] : by_fraction) {
    curve.push_back({acc.threshold, fraction, acc.sum / static_cast<double>(acc.count)});
  }
  return curve;
}

double dac_score(const std::vector<CurvePoint>& points) {
  if (points.size() < 2 || points.front().fraction != 0.0 || points.back().fraction != 1.0) {
    throw ValueError("dac_score needs a curve anchored at fractions 0 and 1");
  }
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double dx = points[i].fraction - points[i - 1].fraction;
    if (dx < 0.0) throw ValueError("dac_score needs points sorted by fraction");
    area += 0.5 * dx * (points[i].delta + points[i - 1].delta);
  }
  return area;
}

MinMask min_mask(const std::vector<CurvePoint>& points) {
  if (points.empty()) throw ValueError("min_mask needs a nonempty curve");
  const CurvePoint* best = nullptr;
  for (const CurvePoint& p : points) {
    const double cost = p.fraction - p.delta;
    if (!best || cost < best->fraction - best->delta ||
        (cost == best->fraction - best->delta && p.fraction < best->fraction)) {
      best = &p;
    }
  }
  return {best->threshold, best->fraction, best->delta};
}

DacResult evaluate_pair(const model::Checkpoint& ck, const data::PairRecord& pair, const std::string& method,
                        const Tensor& map, const CurveConfig& config) {
  DacResult r;
  r.pair_id = pair.pair_id;
  r.method = method;
  r.class_i = pair.class_i;
  r.class_j = pair.class_j;
  r.curve = dac_curve(ck, pair, map, config);
  r.auc = dac_score(r.curve);
  r.minimal = min_mask(r.curve);
  return r;
}

std::vector<AggregateRow> aggregate(const std::vector<DacResult>& results) {
  if (results.empty()) throw ValueError("aggregate needs at least one result");
  std::map<std::string, std::map<std::pair<int, int>, std::vector<double>>> groups;
  for (const DacResult& r : results) groups[r.method][{r.class_i, r.class_j}].push_back(r.auc);
  std::vector<AggregateRow> rows;
  for (auto& [method, by_pair] : groups) {
    AggregateRow row{method, 0.0, 0, by_pair.size()};
    double total = 0.0;
    for (auto& [classes, aucs] : by_pair) {
      std::sort(aucs.begin(), aucs.end());  // summation order independent of input order
      total += std::accumulate(aucs.begin(), aucs.end(), 0.0) / static_cast<double>(aucs.size());
      row.pairs += aucs.size();
    }
    row.mean_dac = total / static_cast<double>(by_pair.size());
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> resample_curve(const std::vector<CurvePoint>& points, const std::vector<double>& fractions) {
  if (points.empty()) throw ValueError("resample_curve needs a nonempty curve");
  std::vector<double> out;
  out.reserve(fractions.size());
  for (double f : fractions) {
    auto hi = std::lower_bound(points.begin(), points.end(), f,
                               [](const CurvePoint& p, double v) { return p.fraction < v; });
    if (hi == points.begin()) {
      out.push_back(hi->delta);
    } else if (hi == points.end()) {
      out.push_back(points.back().delta);
    } else {
      const CurvePoint& a = *(hi - 1);
      const double t = (f - a.fraction) / (hi->fraction - a.fraction);
      out.push_back(a.delta + t * (hi->delta - a.delta));
    }
  }
  return out;
}

}  // namespace dac::eval
