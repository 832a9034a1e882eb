#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dac/datagen/pairs.hpp"
#include "dac/gradcore/ops.hpp"
#include "dac/gradcore/tensor.hpp"
#include "dac/modelzoo/checkpoint.hpp"

namespace dac::attr {

enum class Method { Ingrads, DIngrads, IG, DIG, DL, DDL, GC, DGC, GGC, DGGC, Residual, Random };

/// Lower-case CLI ids: ingrads, d-ingrads, ig, d-ig, dl, d-dl, gc, d-gc, ggc, d-ggc, residual, random.
std::string method_id(Method m);
Method method_from_id(const std::string& id);  // ValueError for unknown ids
const std::vector<Method>& all_methods();

bool is_discriminative(Method m);  // D-variants and residual: the map depends on x_c
bool is_signed(Method m);
/// D-variant for a standard method and vice versa; Residual/Random map to themselves.
Method counterpart(Method m);

/// Per-pixel map over the input's spatial extent (h, w). Multi-channel inputs
/// are summed over channels.
struct AttributionMap {
  grad::Tensor values;
  Method method = Method::Random;
  int target = 0;
  bool is_signed = false;
};

/// Magnitude used for mask thresholding: |values|.
grad::Tensor magnitude(const AttributionMap& map);

enum class Target { Probability, Logit };

/// Gradient of output `cls` for every image of an (N, C, H, W) batch.
grad::Tensor input_gradients(const model::Checkpoint& ck, const grad::Tensor& batch, int cls,
                             grad::ReluMode relu_mode = grad::ReluMode::Standard,
                             Target target = Target::Probability);

// Images below are single (C, H, W) inputs.

AttributionMap ingrads(const model::Checkpoint& ck, const grad::Tensor& x, int cls);
AttributionMap d_ingrads(const model::Checkpoint& ck, const data::PairRecord& pair);

/// Midpoint rule with alpha_t = (t + 0.5) / steps along baseline -> x.
AttributionMap integrated_gradients(const model::Checkpoint& ck, const grad::Tensor& x, const grad::Tensor& baseline,
                                    int cls, std::size_t steps = 50, Target target = Target::Probability);
/// Path x_o -> x_c, class j.
AttributionMap d_integrated_gradients(const model::Checkpoint& ck, const data::PairRecord& pair,
                                      std::size_t steps = 50);

/// Rescale rule: each ReLU passes (relu(z) - relu(z0)) / (z - z0) with z0 taken
/// from the baseline's forward pass. Max-pool follows the input's switches and
/// softmax uses its exact gradient at the input.
AttributionMap deeplift(const model::Checkpoint& ck, const grad::Tensor& x, const grad::Tensor& baseline, int cls,
                        Target target = Target::Probability);
/// Baseline x_o, input x_c, class j.
AttributionMap d_deeplift(const model::Checkpoint& ck, const data::PairRecord& pair,
                          Target target = Target::Probability);

/// ReLU(sum_k alpha_k C_k) with alpha_k the spatial mean of dp_i/dC_k, at the
/// checkpoint's gradcam layer, projected bilinearly to the input size.
AttributionMap gradcam(const model::Checkpoint& ck, const grad::Tensor& x, int cls);
/// |sum_k dp_j/dC_k (x_c) * (C_k(x_c) - C_k(x_o))|, projected to the input size.
AttributionMap d_gradcam(const model::Checkpoint& ck, const data::PairRecord& pair);

/// Signed (h, w) input gradient with guided ReLUs.
grad::Tensor guided_backprop(const model::Checkpoint& ck, const grad::Tensor& x, int cls);
/// GC(x) * GBP(x).
AttributionMap guided_gradcam(const model::Checkpoint& ck, const grad::Tensor& x, int cls);
/// D-GC(x_o, x_c) * GBP(x_o) for class i.
AttributionMap d_guided_gradcam(const model::Checkpoint& ck, const data::PairRecord& pair);

/// |x_c - x_o|.
AttributionMap residual_map(const data::PairRecord& pair);
/// Uniform [0, 1) values from a seeded generator.
AttributionMap random_map(std::size_t h, std::size_t w, std::uint64_t seed);

/// Bilinear resampling of an (h, w) map with half-pixel centres and edge clamping.
grad::Tensor bilinear_resize(const grad::Tensor& map, std::size_t out_h, std::size_t out_w);

struct ComputeOptions {
  std::size_t ig_steps = 50;
  std::uint64_t random_seed = 0;
};

/// Dispatch: standard methods use x_o and class i, D-variants the whole pair.
AttributionMap compute(Method m, const model::Checkpoint& ck, const data::PairRecord& pair,
                       const ComputeOptions& options = {});

}  // namespace dac::attr
