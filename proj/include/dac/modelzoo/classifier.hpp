#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "dac/gradcore/ops.hpp"
#include "dac/gradcore/tape.hpp"
#include "dac/modelzoo/checkpoint.hpp"

namespace dac::model {

/// Capture name that refers to the network input itself.
inline constexpr const char* kInputCapture = "input";

struct ForwardOptions {
  grad::Mode mode = grad::Mode::Eval;
  grad::ReluMode relu_mode = grad::ReluMode::Standard;
  std::vector<std::string> captures;  // layer names (or "input") to retain on the tape
  std::mt19937_64* rng = nullptr;     // dropout randomness, train mode only
  bool parameter_grads = false;       // record parameters as gradient-requiring leaves
  // DeepLift: per-ReLU reference pre-activations in execution order. When set,
  // every ReLU uses the rescale multiplier against its reference.
  const std::vector<grad::Tensor>* rescale_reference = nullptr;
  bool record_relu_inputs = false;
};

struct ForwardResult {
  grad::Var logits;
  grad::Var probabilities;
  std::map<std::string, grad::Var> captures;
  std::map<std::string, grad::Var> parameters;
  std::map<std::string, grad::BatchNormUpdate> batchnorm_updates;  // train mode only
  std::vector<grad::Tensor> relu_inputs;                           // when record_relu_inputs
};

/// Runs the network on `input` (N, C, H, W). The checkpoint must outlive the tape.
ForwardResult forward(grad::Tape& tape, const Checkpoint& checkpoint, grad::Var input,
                      const ForwardOptions& options = {});

/// Eval-mode class probabilities (N, k), evaluated in chunks of `chunk` images.
grad::Tensor predict(const Checkpoint& checkpoint, const grad::Tensor& batch, std::size_t chunk = 32);

/// Stores train-mode running statistics back into the checkpoint.
void apply_batchnorm_updates(Checkpoint& checkpoint, const std::map<std::string, grad::BatchNormUpdate>& updates);

}  // namespace dac::model
