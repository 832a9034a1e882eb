#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>

#include "dac/common/error.hpp"
#include "dac/common/gaussian.hpp"
#include "dac/datagen/disc.hpp"
#include "dac/datagen/io.hpp"
#include "dac/datagen/pairs.hpp"
#include "dac/modelzoo/checkpoint.hpp"

using namespace dac;
using namespace dac::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("dac_datagen_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::size_t count_kind(const Scene& s, ShapeKind k) {
  std::size_t n = 0;
  for (const auto& shape : s.shapes) n += shape.kind == k;
  return n;
}

// Raster support of `shapes`, grown by `radius` pixels in every direction.
std::vector<bool> dilated_support(const std::vector<SceneShape>& shapes, std::size_t n, std::size_t radius) {
  Scene scene;
  scene.image_size = n;
  scene.shapes = shapes;
  const auto mask = foreground_mask(scene);
  std::vector<bool> out(n * n, false);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      if (!mask[y * n + x]) continue;
      for (std::ptrdiff_t dy = -r; dy <= r; ++dy)
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
          const auto yy = static_cast<std::ptrdiff_t>(y) + dy, xx = static_cast<std::ptrdiff_t>(x) + dx;
          if (yy >= 0 && xx >= 0 && yy < static_cast<std::ptrdiff_t>(n) && xx < static_cast<std::ptrdiff_t>(n)) {
            out[static_cast<std::size_t>(yy) * n + static_cast<std::size_t>(xx)] = true;
          }
        }
    }
  return out;
}

std::size_t smoothing_radius(double sigma) { return static_cast<std::size_t>(std::ceil(2.0 * sigma)); }

// Linear model whose logits ignore the input: softmax gives `p` for class 1.
model::Checkpoint constant_model(std::size_t size, double p) {
  model::ModelSpec spec{"custom", size, 1, 2, {}, "input"};
  spec.layers = {{model::LayerKind::Flatten, "flatten0"}, {model::LayerKind::Linear, "fc1", size * size, 2}};
  model::Checkpoint ck = model::init_checkpoint(spec, 1);
  ck.tensor("fc1.weight").fill(0.0);
  ck.tensor("fc1.bias")[1] = std::log(p / (1.0 - p));
  return ck;
}

PairRecord flat_pair(const std::string& id, std::size_t size, int i, int j) {
  PairRecord r;
  r.pair_id = id;
  r.class_i = i;
  r.class_j = j;
  r.real = grad::Tensor({1, size, size}, 0.2);
  r.counterfactual = grad::Tensor({1, size, size}, 0.6);
  return r;
}

}  // namespace

TEST_CASE("empty scene without noise renders black") {
  Scene scene;
  scene.image_size = 32;
  const grad::Tensor img = render_scene(scene);
  CHECK(img.shape() == grad::Shape{1, 32, 32});
  CHECK(max_abs(img) == 0.0);
}

TEST_CASE("disk rasterization area matches pi r^2") {
  Scene scene;
  scene.image_size = 128;
  scene.shapes = {{ShapeKind::Disk, 64.0, 64.0, 40.0, 0.0, 200.0}};
  const grad::Tensor img = render_scene(scene);
  std::size_t fg = 0;
  for (double v : img.data()) fg += v > 0.0;
  const double area = std::numbers::pi * 20.0 * 20.0;
  CHECK(std::abs(static_cast<double>(fg) - area) <= 0.02 * area);
  for (double v : img.data()) CHECK((v == 0.0 || v == doctest::Approx(200.0 / 255.0)));
}

TEST_CASE("polygon rasterization areas match their analytic areas") {
  for (ShapeKind kind : {ShapeKind::Square, ShapeKind::Triangle}) {
    for (double rot : {0.0, 0.3, 1.1}) {
      Scene scene;
      scene.image_size = 128;
      scene.shapes = {{kind, 64.3, 63.8, 50.0, rot, 150.0}};
      CHECK(coverage_ratio(scene) == doctest::Approx(1.0).epsilon(0.02));
    }
  }
}

TEST_CASE("rendering is deterministic and validates bounds") {
  Scene scene;
  scene.image_size = 64;
  scene.shapes = {{ShapeKind::Triangle, 30.0, 30.0, 20.0, 0.7, 160.0}};
  scene.noise_seed = 42;
  scene.noise_strength = 10.0;
  scene.smoothing_sigma = 1.5;
  CHECK(render_scene(scene) == render_scene(scene));
  const grad::Tensor img = render_scene(scene);
  for (double v : img.data()) CHECK((v >= 0.0 && v <= 1.0));

  scene.shapes[0].cx = 5.0;
  CHECK_THROWS_AS(render_scene(scene), ValueError);
  scene.shapes[0].cx = 30.0;
  scene.shapes[0].intensity = 250.0;
  CHECK_THROWS_AS(render_scene(scene), ValueError);
}

TEST_CASE("Disc-A samples obey parity, coverage and determinism") {
  const auto a = gen_disc_a(11, 40, 128);
  const auto b = gen_disc_a(11, 40, 128);
  for (std::size_t k = 0; k < a.size(); ++k) {
    REQUIRE(a[k].scene);
    const std::size_t t = count_kind(*a[k].scene, ShapeKind::Triangle);
    CHECK(t == a[k].scene->shapes.size());
    CHECK((t >= 1 && t <= 6));
    CHECK(a[k].label == static_cast<int>(t % 2));
    CHECK(coverage_ratio(*a[k].scene) >= 0.9);
    CHECK(a[k].image == b[k].image);
    validate_scene(*a[k].scene);
  }
  // Sharding by index reproduces the same samples.
  CHECK(gen_disc_a_sample(11, 17, {}).image == a[17].image);
}

TEST_CASE("Disc-B samples hold one shape of each present kind") {
  const auto s = gen_disc_b(5, 60, 64);
  for (const auto& x : s) {
    REQUIRE(x.scene);
    CHECK(x.scene->shapes.size() == 2);
    CHECK(coverage_ratio(*x.scene) >= 0.9);
    CHECK(disc_b_label(*x.scene) == x.label);
    if (x.label == kNoDisk) {
      CHECK(count_kind(*x.scene, ShapeKind::Triangle) == 1);
      CHECK(count_kind(*x.scene, ShapeKind::Square) == 1);
    }
  }
}

TEST_CASE("Disc-B class frequencies are balanced") {
  GeneratorConfig config;
  config.image_size = 64;
  std::map<int, int> freq;
  for (std::uint64_t i = 0; i < 3000; ++i) ++freq[gen_disc_b_sample(99, i, config).label];
  for (int c = 0; c < 3; ++c) CHECK(std::abs(freq[c] / 3000.0 - 1.0 / 3.0) <= 0.05);
}

TEST_CASE("over-constrained rejection rule raises a generation error") {
  GeneratorConfig config;
  config.image_size = 64;
  config.min_coverage = 1.5;
  config.max_attempts = 20;
  CHECK_THROWS_AS(gen_disc_b_sample(1, 0, config), GenerationError);
  CHECK_THROWS_AS(gen_disc_a(1, 0), ValueError);
}

TEST_CASE("Disc-A counterfactual flips parity with a local edit") {
  GeneratorConfig config;
  config.image_size = 64;
  int seen_single = 0, seen_multi = 0;
  for (std::uint64_t i = 0; i < 40; ++i) {
    const ImageSample s = gen_disc_a_sample(3, i, config);
    std::mt19937_64 rng(i);
    const ImageSample c = make_counterfactual_disc_a(s, rng, config);
    const std::size_t before = s.scene->shapes.size(), after = c.scene->shapes.size();
    CHECK(c.label == 1 - s.label);
    CHECK(c.scene->noise_seed == s.scene->noise_seed);
    CHECK(c.scene->smoothing_sigma == s.scene->smoothing_sigma);
    std::vector<SceneShape> edited;
    if (before == 1) {
      ++seen_single;
      CHECK(after == 2);
      CHECK(c.scene->shapes[0] == s.scene->shapes[0]);
      edited = {c.scene->shapes[1]};
    } else {
      ++seen_multi;
      CHECK(after == before - 1);
      for (const auto& shape : s.scene->shapes) {
        if (std::find(c.scene->shapes.begin(), c.scene->shapes.end(), shape) == c.scene->shapes.end()) {
          edited.push_back(shape);
        }
      }
      CHECK(edited.size() == 1);
    }
    const auto support = dilated_support(edited, 64, smoothing_radius(s.scene->smoothing_sigma));
    for (std::size_t p = 0; p < support.size(); ++p) {
      if (!support[p]) CHECK(c.image[p] == s.image[p]);
    }
  }
  CHECK(seen_single > 0);
  CHECK(seen_multi > 0);
}

TEST_CASE("Disc-B counterfactual substitutes the shape in place") {
  Scene scene;
  scene.image_size = 64;
  scene.shapes = {{ShapeKind::Triangle, 20.0, 20.0, 20.0, 0.4, 150.0}, {ShapeKind::Square, 42.0, 40.0, 22.0, 1.0, 180.0}};
  scene.noise_seed = 9;
  scene.noise_strength = 12.0;
  scene.smoothing_sigma = 1.3;
  const ImageSample s{render_scene(scene), kNoDisk, 0, scene, {}};
  const ImageSample c = make_counterfactual_disc_b(s, kNoSquare);
  CHECK(c.label == kNoSquare);
  CHECK(c.scene->shapes[0] == scene.shapes[0]);
  SceneShape expect = scene.shapes[1];
  expect.kind = ShapeKind::Disk;
  CHECK(c.scene->shapes[1] == expect);
  const auto support = dilated_support({scene.shapes[1], expect}, 64, smoothing_radius(1.3));
  bool changed = false;
  for (std::size_t p = 0; p < support.size(); ++p) {
    if (!support[p]) CHECK(c.image[p] == s.image[p]);
    changed |= c.image[p] != s.image[p];
  }
  CHECK(changed);
  CHECK_THROWS_AS(make_counterfactual_disc_b(s, kNoDisk), ValueError);
  CHECK_THROWS_AS(make_counterfactual_disc_b(s, 3), ValueError);
}

TEST_CASE("PNG round trip keeps 8-bit levels exactly") {
  const fs::path dir = scratch("png");
  grad::Tensor img({1, 5, 7});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>((i * 37) % 256) / 255.0;
  write_png_gray(dir / "a.png", img);
  CHECK(read_png_gray(dir / "a.png") == img);
  CHECK_THROWS_AS(read_png_gray(dir / "missing.png"), IoError);
}

TEST_CASE("IDX loader parses, checks magic and length") {
  const fs::path dir = scratch("idx");
  auto be32 = [](std::string& s, std::uint32_t v) {
    for (int k = 3; k >= 0; --k) s.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
  };
  std::string images, labels;
  be32(images, 2051);
  be32(images, 3);
  be32(images, 2);
  be32(images, 2);
  for (int i = 0; i < 12; ++i) images.push_back(static_cast<char>(i * 20));
  be32(labels, 2049);
  be32(labels, 3);
  labels += std::string{char(7), char(0), char(9)};
  auto put = [&](const std::string& name, const std::string& bytes) {
    std::ofstream(dir / name, std::ios::binary) << bytes;
  };
  put("img", images);
  put("lbl", labels);
  const auto s = load_mnist_idx(dir / "img", dir / "lbl");
  REQUIRE(s.size() == 3);
  CHECK(s[2].label == 9);
  CHECK(s[1].image.shape() == grad::Shape{1, 2, 2});
  CHECK(s[1].image[0] == doctest::Approx(80.0 / 255.0));

  put("img_trunc", images.substr(0, images.size() - 1));
  CHECK_THROWS_AS(load_mnist_idx(dir / "img_trunc", dir / "lbl"), FormatError);
  CHECK_THROWS_AS(load_mnist_idx(dir / "lbl", dir / "img"), FormatError);
}

TEST_CASE("dataset directory round trip") {
  const fs::path dir = scratch("dataset");
  const auto samples = gen_disc_b(2, 6, 64);
  write_dataset(dir, {"disc-b", 64, 3, 2, 6}, samples);
  const Dataset ds = load_dataset(dir);
  REQUIRE(ds.samples.size() == 6);
  CHECK(ds.info.dataset == "disc-b");
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(ds.samples[k].label == samples[k].label);
    CHECK(ds.samples[k].scene == samples[k].scene);
    CHECK(max_abs(ds.samples[k].image - samples[k].image) <= 0.5 / 255.0 + 1e-12);
  }
  CHECK(stack_images(ds.samples).shape() == grad::Shape{6, 1, 64, 64});
}

TEST_CASE("pair manifest round trip and validation") {
  const fs::path dir = scratch("pairs");
  std::ofstream(dir / "empty.jsonl").close();
  CHECK(load_pair_manifest(dir / "empty.jsonl").empty());

  std::vector<PairRecord> records = {flat_pair("p0", 8, 0, 1), flat_pair("p1", 8, 1, 0)};
  save_pairs(dir, "pairs.jsonl", records);
  const auto back = load_pair_manifest(dir / "pairs.jsonl", 2);
  REQUIRE(back.size() == 2);
  CHECK(back[0].pair_id == "p0");
  CHECK(back[1].class_i == 1);
  CHECK(back[1].real == records[1].real);

  std::ofstream(dir / "same.jsonl") << R"({"pair_id":"x","class_i":1,"class_j":1,"path_real":"pairs/p0_real.png","path_counterfactual":"pairs/p0_cf.png"})"
                                    << "\n";
  CHECK_THROWS_AS(load_pair_manifest(dir / "same.jsonl"), FormatError);
  CHECK_THROWS_AS(load_pair_manifest(dir / "pairs.jsonl", 1), FormatError);
  std::ofstream(dir / "bad.jsonl") << "{not json\n";
  CHECK_THROWS_AS(load_pair_manifest(dir / "bad.jsonl"), FormatError);
  CHECK_THROWS_AS(load_pair_manifest(dir / "nope.jsonl"), IoError);
}

TEST_CASE("pair filter thresholds the counterfactual confidence") {
  std::vector<PairRecord> pairs = {flat_pair("a", 8, 0, 1), flat_pair("b", 8, 0, 1)};
  const auto low = constant_model(8, 0.79);
  CHECK(filter_pairs(pairs, low, 0.8).empty());
  CHECK(filter_pairs(pairs, low, 0.0).size() == 2);
  const auto kept = filter_pairs(pairs, constant_model(8, 0.81), 0.8);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].accepted);
  CHECK(*kept[0].confidence == doctest::Approx(0.81).epsilon(1e-12));

  auto bad = pairs;
  bad[0].counterfactual = grad::Tensor({1, 9, 9});
  bad[1].counterfactual = grad::Tensor({1, 9, 9});
  CHECK_THROWS_AS(filter_pairs(bad, low, 0.5), DimensionError);
}

TEST_CASE("accepted set shrinks as theta grows") {
  std::vector<PairRecord> pairs;
  for (int k = 0; k < 20; ++k) {
    PairRecord r = flat_pair("p" + std::to_string(k), 4, 0, 1);
    r.confidence = k / 19.0;
    pairs.push_back(r);
  }
  std::size_t previous = pairs.size() + 1;
  for (double theta : {0.0, 0.3, 0.5, 0.8, 0.9, 0.99, 1.0}) {
    const auto kept = select_pairs(pairs, theta);
    CHECK(kept.size() <= previous);
    for (const auto& r : kept) CHECK(*r.confidence >= theta);
    previous = kept.size();
  }
}

TEST_CASE("gaussian kernel is normalized and preserves constants") {
  for (double sigma : {0.5, 1.0, 1.7, 11.0}) {
    const auto k = gaussian_kernel(sigma);
    CHECK(k.size() == 2 * static_cast<std::size_t>(std::ceil(2 * sigma)) + 1);
    double s = 0.0;
    for (double v : k) s += v;
    CHECK(s == 1.0);
    std::vector<double> ones(30 * 20, 1.0);
    for (double v : gaussian_blur_plane(ones, 30, 20, sigma)) CHECK(v == 1.0);
  }
  CHECK(mirror_index(-1, 5) == 0);
  CHECK(mirror_index(5, 5) == 4);
  CHECK(mirror_index(-7, 5) == 3);
}
