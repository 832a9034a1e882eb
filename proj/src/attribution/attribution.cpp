#include "dac/attribution/attribution.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <tuple>

#include "dac/common/error.hpp"
#include "dac/modelzoo/classifier.hpp"

namespace dac::attr {

namespace {

using grad::Tensor;

struct MethodInfo {
  Method method;
  const char* id;
  bool discriminative;
  bool is_signed;
  Method counterpart;
};

constexpr std::array<MethodInfo, 12> kMethods = {{
    {Method::Ingrads, "ingrads", false, false, Method::DIngrads},
    {Method::DIngrads, "d-ingrads", true, false, Method::Ingrads},
    {Method::IG, "ig", false, true, Method::DIG},
    {Method::DIG, "d-ig", true, true, Method::IG},
    {Method::DL, "dl", false, true, Method::DDL},
    {Method::DDL, "d-dl", true, true, Method::DL},
    {Method::GC, "gc", false, false, Method::DGC},
    {Method::DGC, "d-gc", true, false, Method::GC},
    {Method::GGC, "ggc", false, true, Method::DGGC},
    {Method::DGGC, "d-ggc", true, true, Method::GGC},
    {Method::Residual, "residual", true, false, Method::Residual},
    {Method::Random, "random", false, false, Method::Random},
}};

const MethodInfo& info(Method m) {
  for (const MethodInfo& i : kMethods) {
    if (i.method == m) return i;
  }
  throw ValueError("unknown attribution method");
}

void check_input(const model::Checkpoint& ck, const Tensor& x, const char* what) {
  const model::ModelSpec& s = ck.spec;
  if (x.shape() != grad::Shape{s.input_channels, s.input_size, s.input_size}) {
    throw DimensionError(std::string(what) + " has shape " + grad::shape_string(x.shape()) +
                         ", the model expects (" + std::to_string(s.input_channels) + ", " +
                         std::to_string(s.input_size) + ", " + std::to_string(s.input_size) + ")");
  }
}

void check_class(const model::Checkpoint& ck, int cls) {
  if (cls < 0 || cls >= static_cast<int>(ck.spec.num_classes)) {
    throw ValueError("class " + std::to_string(cls) + " outside [0, " + std::to_string(ck.spec.num_classes) + ")");
  }
}

void check_pair(const model::Checkpoint& ck, const data::PairRecord& pair) {
  check_input(ck, pair.real, "real image");
  check_input(ck, pair.counterfactual, "counterfactual");
  check_class(ck, pair.class_i);
  check_class(ck, pair.class_j);
}

Tensor as_batch(const Tensor& x) {
  grad::Shape s{1};
  s.insert(s.end(), x.shape().begin(), x.shape().end());
  return x.reshaped(s);
}

// Sums a (C, H, W) tensor over channels.
Tensor channel_sum(const Tensor& t) {
  const std::size_t c = t.dim(0), hw = t.dim(1) * t.dim(2);
  Tensor out({t.dim(1), t.dim(2)});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < hw; ++i) out[i] += t[k * hw + i];
  return out;
}

grad::Var target_output(const model::ForwardResult& r, Target target) {
  return target == Target::Probability ? r.probabilities : r.logits;
}

AttributionMap make(Method m, int target, Tensor values) {
  if (!values.all_finite()) throw NumericError("attribution map for " + method_id(m) + " is not finite");
  return {std::move(values), m, target, is_signed(m)};
}

// Per-channel weights and activations of the gradcam layer at x, with the
// gradient of output `cls` at that layer.
struct LayerGrad {
  Tensor activation;  // (K, h, w)
  Tensor gradient;    // (K, h, w)
};

LayerGrad layer_gradient(const model::Checkpoint& ck, const Tensor& x, int cls) {
  const std::string& layer = ck.spec.gradcam_layer;
  if (layer.empty()) throw ValueError("checkpoint designates no gradcam layer");
  grad::Tape tape;
  grad::Var in = tape.leaf(as_batch(x));
  const model::ForwardResult r = model::forward(tape, ck, in, {.captures = {layer}});
  const grad::Var c = r.captures.at(layer);
  if (c.shape().size() != 4) throw DimensionError("gradcam layer '" + layer + "' is not a spatial feature map");
  const grad::Gradients g = tape.backward_component(r.probabilities, static_cast<std::size_t>(cls));
  const grad::Shape s(c.shape().begin() + 1, c.shape().end());
  return {c.value().reshaped(s), g.or_zeros(c).reshaped(s)};
}

Tensor project(const Tensor& cam, const model::Checkpoint& ck) {
  return bilinear_resize(cam, ck.spec.input_size, ck.spec.input_size);
}

}  // namespace

std::string method_id(Method m) { return info(m).id; }

Method method_from_id(const std::string& id) {
  for (const MethodInfo& i : kMethods) {
    if (id == i.id) return i.method;
  }
  throw ValueError("unknown attribution method '" + id + "'");
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = [] {
    std::vector<Method> v;
    for (const MethodInfo& i : kMethods) v.push_back(i.method);
    return v;
  }();
  return methods;
}

bool is_discriminative(Method m) { return info(m).discriminative; }
bool is_signed(Method m) { return info(m).is_signed; }
Method counterpart(Method m) { return info(m).counterpart; }

Tensor magnitude(const AttributionMap& map) { return abs(map.values); }

Tensor input_gradients(const model::Checkpoint& ck, const Tensor& batch, int cls, grad::ReluMode relu_mode,
                       Target target) {
  check_class(ck, cls);
  if (batch.rank() != 4) throw DimensionError("input_gradients expects an (N, C, H, W) batch");
  constexpr std::size_t kChunk = 32;
  Tensor out(batch.shape());
  const std::size_t n = batch.dim(0), per = batch.size() / std::max<std::size_t>(n, 1);
  for (std::size_t first = 0; first < n; first += kChunk) {
    const std::size_t count = std::min(kChunk, n - first);
    grad::Tape tape;
    grad::Var in = tape.leaf(batch.slice_batch(first, count));
    const model::ForwardResult r = model::forward(tape, ck, in, {.relu_mode = relu_mode});
    const Tensor g = tape.backward_component(target_output(r, target), static_cast<std::size_t>(cls)).or_zeros(in);
    std::copy(g.data().begin(), g.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(first * per));
  }
  return out;
}

AttributionMap ingrads(const model::Checkpoint& ck, const Tensor& x, int cls) {
  check_input(ck, x, "input");
  const Tensor g = input_gradients(ck, as_batch(x), cls).reshaped(x.shape());
  return make(Method::Ingrads, cls, abs(channel_sum(g * x)));
}

AttributionMap d_ingrads(const model::Checkpoint& ck, const data::PairRecord& pair) {
  check_pair(ck, pair);
  const Tensor& xc = pair.counterfactual;
  const Tensor g = input_gradients(ck, as_batch(xc), pair.class_j).reshaped(xc.shape());
  return make(Method::DIngrads, pair.class_j, abs(channel_sum(g * (xc - pair.real))));
}

AttributionMap integrated_gradients(const model::Checkpoint& ck, const Tensor& x, const Tensor& baseline, int cls,
                                    std::size_t steps, Target target) {
  check_input(ck, x, "input");
  check_input(ck, baseline, "baseline");
  if (steps == 0) throw ValueError("integrated gradients needs at least one step");
  const Tensor delta = x - baseline;
  std::vector<Tensor> points;
  points.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const double alpha = (static_cast<double>(t) + 0.5) / static_cast<double>(steps);
    points.push_back(baseline + delta * alpha);
  }
  const Tensor g = input_gradients(ck, grad::stack(points), cls, grad::ReluMode::Standard, target);
  Tensor mean(x.shape());
  const std::size_t per = x.size();
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i < per; ++i) mean[i] += g[t * per + i];
  mean = mean * (1.0 / static_cast<double>(steps));
  return make(Method::IG, cls, channel_sum(delta * mean));
}

AttributionMap d_integrated_gradients(const model::Checkpoint& ck, const data::PairRecord& pair, std::size_t steps) {
  check_pair(ck, pair);
  AttributionMap m = integrated_gradients(ck, pair.counterfactual, pair.real, pair.class_j, steps);
  m.method = Method::DIG;
  return m;
}

AttributionMap deeplift(const model::Checkpoint& ck, const Tensor& x, const Tensor& baseline, int cls, Target target) {
  check_input(ck, x, "input");
  check_input(ck, baseline, "baseline");
  check_class(ck, cls);
  std::vector<Tensor> reference;
  {
    grad::Tape tape;
    reference = model::forward(tape, ck, tape.constant(as_batch(baseline)), {.record_relu_inputs = true}).relu_inputs;
  }
  grad::Tape tape;
  grad::Var in = tape.leaf(as_batch(x));
  const model::ForwardResult r = model::forward(tape, ck, in, {.rescale_reference = &reference});
  const Tensor g =
      tape.backward_component(target_output(r, target), static_cast<std::size_t>(cls)).or_zeros(in).reshaped(x.shape());
  return make(Method::DL, cls, channel_sum((x - baseline) * g));
}

AttributionMap d_deeplift(const model::Checkpoint& ck, const data::PairRecord& pair, Target target) {
  check_pair(ck, pair);
  AttributionMap m = deeplift(ck, pair.counterfactual, pair.real, pair.class_j, target);
  m.method = Method::DDL;
  return m;
}

AttributionMap gradcam(const model::Checkpoint& ck, const Tensor& x, int cls) {
  check_input(ck, x, "input");
  check_class(ck, cls);
  const LayerGrad lg = layer_gradient(ck, x, cls);
  const std::size_t k = lg.activation.dim(0), h = lg.activation.dim(1), w = lg.activation.dim(2);
  Tensor cam({h, w});
  for (std::size_t c = 0; c < k; ++c) {
    double alpha = 0.0;
    for (std::size_t i = 0; i < h * w; ++i) alpha += lg.gradient[c * h * w + i];
    alpha /= static_cast<double>(h * w);
    for (std::size_t i = 0; i < h * w; ++i) cam[i] += alpha * lg.activation[c * h * w + i];
  }
  for (double& v : cam.data()) v = std::max(v, 0.0);
  return make(Method::GC, cls, project(cam, ck));
}

AttributionMap d_gradcam(const model::Checkpoint& ck, const data::PairRecord& pair) {
  check_pair(ck, pair);
  const LayerGrad at_c = layer_gradient(ck, pair.counterfactual, pair.class_j);
  Tensor act_o;
  {
    grad::Tape tape;
    const std::string& layer = ck.spec.gradcam_layer;
    const auto r = model::forward(tape, ck, tape.constant(as_batch(pair.real)), {.captures = {layer}});
    act_o = r.captures.at(layer).value().reshaped(at_c.activation.shape());
  }
  const Tensor cam = abs(channel_sum(at_c.gradient * (at_c.activation - act_o)));
  return make(Method::DGC, pair.class_j, project(cam, ck));
}

Tensor guided_backprop(const model::Checkpoint& ck, const Tensor& x, int cls) {
  check_input(ck, x, "input");
  return channel_sum(input_gradients(ck, as_batch(x), cls, grad::ReluMode::Guided).reshaped(x.shape()));
}

AttributionMap guided_gradcam(const model::Checkpoint& ck, const Tensor& x, int cls) {
  const AttributionMap gc = gradcam(ck, x, cls);
  return make(Method::GGC, cls, gc.values * guided_backprop(ck, x, cls));
}

AttributionMap d_guided_gradcam(const model::Checkpoint& ck, const data::PairRecord& pair) {
  const AttributionMap dgc = d_gradcam(ck, pair);
  return make(Method::DGGC, pair.class_j, dgc.values * guided_backprop(ck, pair.real, pair.class_i));
}

AttributionMap residual_map(const data::PairRecord& pair) {
  if (!pair.real.same_shape(pair.counterfactual) || pair.real.rank() != 3) {
    throw DimensionError("residual map needs two (C, H, W) images of equal shape");
  }
  return make(Method::Residual, pair.class_j, channel_sum(abs(pair.counterfactual - pair.real)));
}

AttributionMap random_map(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor values({h, w});
  for (double& v : values.data()) v = u(rng);
  return make(Method::Random, 0, std::move(values));
}

Tensor bilinear_resize(const Tensor& map, std::size_t out_h, std::size_t out_w) {
  if (map.rank() != 2 || map.size() == 0) throw DimensionError("bilinear_resize expects a nonempty (h, w) map");
  const std::size_t h = map.dim(0), w = map.dim(1);
  auto axis = [](std::size_t o, std::size_t in, std::size_t out) {
    const double s = std::clamp((static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5,
                                0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(s));
    return std::tuple{lo, std::min(lo + 1, in - 1), s - static_cast<double>(lo)};
  };
  Tensor out({out_h, out_w});
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto [y0, y1, fy] = axis(y, h, out_h);
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto [x0, x1, fx] = axis(x, w, out_w);
      const double top = (1.0 - fx) * map[y0 * w + x0] + fx * map[y0 * w + x1];
      const double bottom = (1.0 - fx) * map[y1 * w + x0] + fx * map[y1 * w + x1];
      out[y * out_w + x] = (1.0 - fy) * top + fy * bottom;
    }
  }
  return out;
}

AttributionMap compute(Method m, const model::Checkpoint& ck, const data::PairRecord& pair,
                       const ComputeOptions& options) {
  const Tensor& xo = pair.real;
  switch (m) {
    case Method::Ingrads: return ingrads(ck, xo, pair.class_i);
    case Method::DIngrads: return d_ingrads(ck, pair);
    case Method::IG: return integrated_gradients(ck, xo, Tensor(xo.shape()), pair.class_i, options.ig_steps);
    case Method::DIG: return d_integrated_gradients(ck, pair, options.ig_steps);
    case Method::DL: return deeplift(ck, xo, Tensor(xo.shape()), pair.class_i);
    case Method::DDL: return d_deeplift(ck, pair);
    case Method::GC: return gradcam(ck, xo, pair.class_i);
    case Method::DGC: return d_gradcam(ck, pair);
    case Method::GGC: return guided_gradcam(ck, xo, pair.class_i);
    case Method::DGGC: return d_guided_gradcam(ck, pair);
    case Method::Residual: return residual_map(pair);
    case Method::Random: {
      check_input(ck, xo, "real image");
      return random_map(xo.dim(1), xo.dim(2), options.random_seed);
    }
  }
  throw ValueError("unhandled attribution method");
}

}  // namespace dac::attr
