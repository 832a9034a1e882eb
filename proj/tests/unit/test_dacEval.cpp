#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "dac/common/error.hpp"
#include "dac/common/gaussian.hpp"
#include "dac/dacEval/dac_eval.hpp"
#include "dac/modelzoo/classifier.hpp"
#include "support/finite_diff.hpp"
#include "support/morphology_oracle.hpp"

using namespace dac;
using namespace dac::eval;
using dac::testing::oracle_morph;
using dac::testing::random_tensor;
using grad::Tensor;
using model::LayerKind;

namespace {

BinaryMask random_mask(std::size_t h, std::size_t w, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(density);
  BinaryMask m(h, w);
  for (auto& b : m.bits) b = coin(rng) ? 1 : 0;
  return m;
}

bool subset(const BinaryMask& a, const BinaryMask& b) {
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    if (a.bits[i] && !b.bits[i]) return false;
  }
  return true;
}

std::size_t components(const BinaryMask& m) {
  std::vector<int> seen(m.bits.size(), 0);
  std::size_t count = 0;
  for (std::size_t s = 0; s < m.bits.size(); ++s) {
    if (!m.bits[s] || seen[s]) continue;
    ++count;
    std::vector<std::size_t> stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t y = p / m.w, x = p % m.w;
      const std::size_t nb[4] = {y > 0 ? p - m.w : p, y + 1 < m.h ? p + m.w : p, x > 0 ? p - 1 : p,
                                 x + 1 < m.w ? p + 1 : p};
      for (std::size_t q : nb) {
        if (m.bits[q] && !seen[q]) {
          seen[q] = 1;
          stack.push_back(q);
        }
      }
    }
  }
  return count;
}

constexpr std::size_t kSize = 16;

model::Checkpoint small_cnn(std::uint64_t seed) {
  model::ModelSpec spec{"custom", kSize, 1, 2, {}, "relu1"};
  spec.layers = {{LayerKind::Conv2d, "conv0", 1, 4, 3, 1, 1, 1},
                 {LayerKind::ReLU, "relu1"},
                 {LayerKind::MaxPool2d, "pool2", 0, 0, 2, 2},
                 {LayerKind::Flatten, "flatten3"},
                 {LayerKind::Linear, "fc4", 4 * 8 * 8, 2}};
  model::Checkpoint ck = model::init_checkpoint(spec, seed);
  ck.tensor("fc4.weight") = random_tensor({4 * 8 * 8, 2}, seed + 1, -0.4, 0.4);
  return ck;
}

data::PairRecord make_pair(const Tensor& xo, const Tensor& xc) {
  data::PairRecord p;
  p.pair_id = "p0";
  p.real = xo;
  p.counterfactual = xc;
  p.class_i = 0;
  p.class_j = 1;
  p.accepted = true;
  return p;
}

double prob(const model::Checkpoint& ck, const Tensor& x, std::size_t cls) {
  const Tensor p = model::predict(ck, x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}));
  return p[cls];
}

CurveConfig small_config() { return {100, 4, 2.0}; }

DacResult result(const std::string& method, int i, int j, double auc) {
  DacResult r;
  r.method = method;
  r.class_i = i;
  r.class_j = j;
  r.auc = auc;
  return r;
}

}  // namespace

TEST_CASE("threshold_mask extremes and monotonicity") {
  const Tensor map = random_tensor({12, 9}, 3, 0.0, 1.0);
  CHECK(threshold_mask(map, 0.0).fraction() == 1.0);
  CHECK(threshold_mask(map, 1.5).count() == 0);
  double prev = 1.0;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const double f = threshold_mask(map, t).fraction();
    CHECK(f <= prev);
    prev = f;
  }
  CHECK_THROWS_AS(threshold_mask(random_tensor({12, 9}, 3, -1.0, 0.0), 0.5), ValueError);
  CHECK_THROWS_AS(threshold_mask(random_tensor({1, 12, 9}, 3, 0.0, 1.0), 0.5), DimensionError);
}

TEST_CASE("morphology matches the brute-force set oracle") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> dim(1, 14), win(1, 10);
  std::uniform_real_distribution<double> dens(0.02, 0.6);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t h = dim(rng), w = dim(rng), window = win(rng);
    const BinaryMask m = random_mask(h, w, dens(rng), rng);
    const BinaryMask d = dilate(m, window), e = erode(m, window);
    REQUIRE(d == oracle_morph(m, window, false));
    REQUIRE(e == oracle_morph(m, window, true));
    const BinaryMask c = morph_close(m, window);
    REQUIRE(c == oracle_morph(oracle_morph(m, window, false), window, true));
    REQUIRE(subset(m, c));
    REQUIRE(morph_close(c, window) == c);
  }
  CHECK_THROWS_AS(dilate(BinaryMask(3, 3), 0), ValueError);
}

TEST_CASE("closing joins two blocks across a 4-pixel gap") {
  BinaryMask m(20, 20);
  for (std::size_t y = 8; y < 11; ++y) {
    for (std::size_t x = 3; x < 6; ++x) m.bits[y * 20 + x] = 1;
    for (std::size_t x = 10; x < 13; ++x) m.bits[y * 20 + x] = 1;
  }
  REQUIRE(components(m) == 2);
  const BinaryMask c = morph_close(m, 10);
  CHECK(components(c) == 1);
  CHECK(subset(m, c));
  for (std::size_t x = 6; x < 10; ++x) CHECK(c.at(9, x));
}

TEST_CASE("closing does not erode at the border") {
  BinaryMask full(7, 5, true);
  CHECK(morph_close(full, 10) == full);
  BinaryMask edge(10, 10);
  for (std::size_t x = 0; x < 10; ++x) edge.bits[x] = 1;
  CHECK(subset(edge, morph_close(edge, 4)));
}

TEST_CASE("blur of constant masks and impulse response") {
  const Tensor ones = gaussian_blur(BinaryMask(30, 17, true), 11.0);
  for (double v : ones.data()) CHECK(v == 1.0);
  const Tensor zeros = gaussian_blur(BinaryMask(30, 17, false), 11.0);
  for (double v : zeros.data()) CHECK(v == 0.0);

  const std::vector<double> k = gaussian_kernel(11.0);
  REQUIRE(k.size() == 45);
  double sum = 0.0;
  for (double v : k) sum += v;
  CHECK(std::abs(sum - 1.0) <= 1e-12);

  const std::size_t n = 61, c = 30, r = 22;
  BinaryMask impulse(n, n);
  impulse.bits[c * n + c] = 1;
  const Tensor out = gaussian_blur(impulse, 11.0);
  double worst = 0.0;
  for (std::size_t dy = 0; dy <= 2 * r; ++dy) {
    for (std::size_t dx = 0; dx <= 2 * r; ++dx) {
      const double got = out[(c - r + dy) * n + (c - r + dx)];
      worst = std::max(worst, std::abs(got - k[dy] * k[dx]));
    }
  }
  CHECK(worst <= 1e-15);
  CHECK(out[0] == 0.0);
  for (double v : out.data()) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("mask parameters scale with the input size") {
  const CurveConfig full = scaled_curve_config(128);
  CHECK(full.window == 10);
  CHECK(full.sigma == 11.0);
  CHECK(full.n_thresholds == 100);
  const CurveConfig half = scaled_curve_config(64, 20);
  CHECK(half.window == 5);
  CHECK(half.sigma == 5.5);
  CHECK(half.n_thresholds == 20);
  CHECK(scaled_curve_config(28).window == 2);
  CHECK(scaled_curve_config(4).window == 1);
  CHECK_THROWS_AS(scaled_curve_config(0), ValueError);
}

TEST_CASE("hybrid composition") {
  const Tensor xo = random_tensor({1, 5, 6}, 1, 0.0, 1.0), xc = random_tensor({1, 5, 6}, 2, 0.0, 1.0);
  Tensor m({5, 6});
  m.fill(1.0);
  CHECK(compose_hybrid(xo, xc, m) == xo);
  m.fill(0.0);
  CHECK(compose_hybrid(xo, xc, m) == xc);
  m.fill(0.5);
  const Tensor mid = compose_hybrid(xo, xc, m);
  for (std::size_t i = 0; i < mid.size(); ++i) CHECK(mid[i] == doctest::Approx(0.5 * (xo[i] + xc[i])).epsilon(1e-15));
  CHECK_THROWS_AS(compose_hybrid(xo, random_tensor({1, 6, 5}, 2), m), DimensionError);
  CHECK_THROWS_AS(compose_hybrid(xo, xc, Tensor({6, 5})), DimensionError);
}

TEST_CASE("curve anchors are exact and the curve is sorted") {
  const auto ck = small_cnn(11);
  const Tensor xo = random_tensor({1, kSize, kSize}, 20, 0.0, 1.0);
  const Tensor xc = random_tensor({1, kSize, kSize}, 21, 0.0, 1.0);
  const Tensor map = random_tensor({kSize, kSize}, 22, 0.0, 1.0);
  const auto pair = make_pair(xo, xc);
  const auto curve = dac_curve(ck, pair, map, small_config());
  REQUIRE(curve.size() >= 2);
  CHECK(curve.front().fraction == 0.0);
  CHECK(curve.front().delta == 0.0);
  CHECK(curve.back().fraction == 1.0);
  CHECK(curve.back().delta == doctest::Approx(prob(ck, xo, 0) - prob(ck, xc, 0)).epsilon(1e-12));
  CHECK(std::isinf(curve.front().threshold));
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i - 1].fraction < curve[i].fraction);
    CHECK(curve[i - 1].threshold >= curve[i].threshold);
  }
  for (const auto& p : curve) CHECK((p.delta >= -1.0 && p.delta <= 1.0));

  const DacResult r = evaluate_pair(ck, pair, "random", map, small_config());
  CHECK(r.auc == dac_score(r.curve));
  CHECK(r.curve == curve);
  const DacResult again = evaluate_pair(ck, pair, "random", map, small_config());
  CHECK(again.curve == r.curve);
  CHECK(again.auc == r.auc);
}

TEST_CASE("zero pair gives a flat zero curve") {
  const auto ck = small_cnn(12);
  const Tensor x = random_tensor({1, kSize, kSize}, 30, 0.0, 1.0);
  const auto curve = dac_curve(ck, make_pair(x, x), random_tensor({kSize, kSize}, 31, 0.0, 1.0), small_config());
  for (const auto& p : curve) CHECK(p.delta == 0.0);
  CHECK(dac_score(curve) == 0.0);
}

TEST_CASE("constant map collapses to the two anchors") {
  const auto ck = small_cnn(13);
  const Tensor xo = random_tensor({1, kSize, kSize}, 40, 0.0, 1.0);
  const Tensor xc = random_tensor({1, kSize, kSize}, 41, 0.0, 1.0);
  Tensor map({kSize, kSize});
  map.fill(0.3);
  const auto curve = dac_curve(ck, make_pair(xo, xc), map, small_config());
  REQUIRE(curve.size() == 2);
  CHECK(curve[1].threshold == 0.3);  // highest threshold that yields the full mask
}

TEST_CASE("dac_curve argument errors") {
  const auto ck = small_cnn(14);
  const Tensor x = random_tensor({1, kSize, kSize}, 50, 0.0, 1.0);
  auto pair = make_pair(x, x);
  const Tensor map = random_tensor({kSize, kSize}, 51, 0.0, 1.0);
  CHECK_THROWS_AS(dac_curve(ck, pair, random_tensor({kSize, kSize + 1}, 1, 0.0, 1.0)), DimensionError);
  CHECK_THROWS_AS(dac_curve(ck, pair, random_tensor({kSize, kSize}, 1, -1.0, 1.0)), ValueError);
  pair.accepted = false;
  CHECK_THROWS_AS(dac_curve(ck, pair, map), ValueError);
}

TEST_CASE("AUC agrees with a fine sweep") {
  const auto ck = small_cnn(15);
  for (std::uint64_t s = 0; s < 4; ++s) {
    const Tensor xo = random_tensor({1, kSize, kSize}, 60 + s, 0.0, 1.0);
    const Tensor xc = random_tensor({1, kSize, kSize}, 70 + s, 0.0, 1.0);
    // Smooth map so the closing keeps the sweep gradual.
    Tensor map({kSize, kSize});
    for (std::size_t y = 0; y < kSize; ++y) {
      for (std::size_t x = 0; x < kSize; ++x) {
        const double dy = static_cast<double>(y) - 4.0 - static_cast<double>(s), dx = static_cast<double>(x) - 9.0;
        map[y * kSize + x] = std::exp(-(dx * dx + dy * dy) / 30.0) + 0.01 * static_cast<double>((x * 7 + y * 3) % 5);
      }
    }
    const auto pair = make_pair(xo, xc);
    const double coarse = dac_score(dac_curve(ck, pair, map, small_config()));
    const double fine = dac_score(dac_curve(ck, pair, map, {10000, 4, 2.0}));
    CHECK(std::abs(coarse - fine) <= 0.02);
  }
}

TEST_CASE("dac_score examples and errors") {
  CHECK(dac_score({{0, 0.0, 0.3}, {0, 0.25, 0.3}, {0, 1.0, 0.3}}) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(dac_score({{0, 0.0, 0.0}, {0, 0.5, 1.0}, {0, 1.0, 1.0}}) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(dac_score({{0, 0.0, 0.0}, {0, 0.6, 1.0}, {0, 0.5, 1.0}, {0, 1.0, 1.0}}), ValueError);
  CHECK_THROWS_AS(dac_score({{0, 0.1, 0.0}, {0, 1.0, 1.0}}), ValueError);
  CHECK_THROWS_AS(dac_score({{0, 0.0, 0.0}, {0, 0.9, 1.0}}), ValueError);
  CHECK_THROWS_AS(dac_score({}), ValueError);
}

TEST_CASE("min_mask examples and exhaustive oracle") {
  std::vector<CurvePoint> jump{{9, 0.0, 0.0}, {8, 0.1, 0.9}, {7, 0.5, 0.9}, {6, 1.0, 0.9}};
  const MinMask j = min_mask(jump);
  CHECK(j.fraction == 0.1);
  CHECK(j.threshold == 8);
  CHECK(j.score == 0.9);
  const MinMask flat = min_mask({{3, 0.0, 0.0}, {2, 0.5, 0.5}, {1, 1.0, 1.0}});
  CHECK(flat.fraction == 0.0);
  CHECK_THROWS_AS(min_mask({}), ValueError);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CurvePoint> pts{{100, 0.0, 0.0}};
    for (int k = 1; k < 20; ++k) pts.push_back({100.0 - k, k / 20.0, std::round(u(rng) * 4) / 4});
    pts.push_back({0, 1.0, u(rng)});
    double best = std::numeric_limits<double>::infinity(), best_fraction = 2.0;
    for (const auto& p : pts) {
      const double cost = p.fraction - p.delta;
      if (cost < best || (cost == best && p.fraction < best_fraction)) {
        best = cost;
        best_fraction = p.fraction;
      }
    }
    const MinMask m = min_mask(pts);
    REQUIRE(m.fraction == best_fraction);
    REQUIRE(m.fraction - m.score == best);
  }
}

TEST_CASE("aggregate two-stage mean") {
  const auto single = aggregate({result("gc", 0, 1, 0.42)});
  REQUIRE(single.size() == 1);
  CHECK(single[0].mean_dac == 0.42);

  std::vector<DacResult> rs{result("d-gc", 0, 1, 0.2), result("d-gc", 1, 0, 0.7), result("d-gc", 1, 0, 0.9),
                            result("d-gc", 1, 0, 0.8), result("gc", 0, 1, 0.1)};
  const auto rows = aggregate(rs);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].method == "d-gc");
  CHECK(rows[0].mean_dac == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(rows[0].pairs == 4);
  CHECK(rows[0].class_pairs == 2);
  CHECK(rows[1].method == "gc");
  CHECK_THROWS_AS(aggregate({}), ValueError);
}

TEST_CASE("aggregate is invariant to input order") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<DacResult> rs;
  for (int k = 0; k < 60; ++k) rs.push_back(result(k % 3 ? "ig" : "d-ig", k % 3, (k + 1) % 3, u(rng)));
  const auto base = aggregate(rs);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(rs.begin(), rs.end(), rng);
    const auto rows = aggregate(rs);
    REQUIRE(rows.size() == base.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].method == base[i].method);
      CHECK(rows[i].mean_dac == base[i].mean_dac);
    }
  }
}

TEST_CASE("resample_curve interpolates linearly") {
  const std::vector<CurvePoint> c{{0, 0.0, 0.0}, {0, 0.5, 1.0}, {0, 1.0, 0.0}};
  const auto v = resample_curve(c, {0.0, 0.25, 0.5, 0.75, 1.0});
  CHECK(v == std::vector<double>{0.0, 0.5, 1.0, 0.5, 0.0});
}
