#pragma once

#include <cstddef>
#include <random>
#include <span>

#include "dac/gradcore/tape.hpp"
#include "dac/gradcore/tensor.hpp"

namespace dac::grad {

enum class Mode { Train, Eval };

/// Backward rule used at ReLU units. Guided drops negative upstream gradients
/// and is only meant for attribution passes.
enum class ReluMode { Standard, Guided };

/// Spatial geometry of a convolution. `pad_end` may differ from `pad_begin`
/// (and may be negative, which drops trailing input rows/cols).
struct ConvGeometry {
  std::size_t stride = 1;
  int pad_begin = 0;
  int pad_end = 0;

  static ConvGeometry symmetric(std::size_t stride, int pad) { return {stride, pad, pad}; }
};

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, const ConvGeometry& g);

/// input (N,C,H,W), weight (O,C,K,K), bias (O) or an invalid Var for no bias.
Var conv2d(Var input, Var weight, Var bias, const ConvGeometry& geometry);
inline Var conv2d(Var input, Var weight, Var bias, std::size_t stride, int pad) {
  return conv2d(input, weight, bias, ConvGeometry::symmetric(stride, pad));
}

/// Max pooling; ties go to the first element in row-major scan order.
Var maxpool2d(Var input, std::size_t window = 2, std::size_t stride = 2);

struct BatchNormConfig {
  Mode mode = Mode::Eval;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Running statistics after a train-mode pass.
struct BatchNormUpdate {
  Tensor running_mean;
  Tensor running_var;
};

Var batchnorm2d(Var input, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var,
                const BatchNormConfig& config, BatchNormUpdate* update = nullptr);

Var relu(Var input, ReluMode mode = ReluMode::Standard);

/// ReLU whose backward pass uses the rescale multiplier
/// (relu(z) - relu(z0)) / (z - z0) against a reference pre-activation z0,
/// falling back to the local derivative when |z - z0| <= guard.
Var relu_rescale(Var input, const Tensor& reference, double guard = 1e-7);

/// input (N,D), weight (D,M), bias (M).
Var linear(Var input, Var weight, Var bias);

/// (N, ...) -> (N, prod(...)).
Var flatten(Var input);

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var sum(Var a);

Var dropout(Var input, double p, Mode mode, std::mt19937_64* rng);

/// Row-wise softmax over the last axis of an (N,K) tensor.
Var softmax(Var logits);

/// Mean negative log-likelihood of `labels` under softmax(logits).
Var cross_entropy(Var logits, std::span<const std::size_t> labels);

}  // namespace dac::grad
