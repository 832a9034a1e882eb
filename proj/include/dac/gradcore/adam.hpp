#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dac/gradcore/tensor.hpp"

namespace dac::grad {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for an ordered parameter list. The same ordering must be
/// used on every call to adam_step.
struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

/// One bias-corrected Adam update applied in place to `params`.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state);

}  // namespace dac::grad
