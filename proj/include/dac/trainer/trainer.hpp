#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dac/datagen/scene.hpp"
#include "dac/gradcore/adam.hpp"
#include "dac/modelzoo/checkpoint.hpp"
#include "dac/modelzoo/model_spec.hpp"

namespace dac::train {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  double split = 0.9;  // train fraction when the validation set is carved from one dataset
  std::string dataset;
  std::string model = "vgg";  // "vgg" or "resnet"
  model::HeadConfig head;
};

void validate(const TrainConfig& config);

/// Architecture for `config.model` at the given input size.
model::ModelSpec build_model(const TrainConfig& config, std::size_t image_size, std::size_t num_classes);

struct EpochLog {
  std::size_t epoch = 0;  // 0-based
  double train_loss = 0.0;  // mean over the epoch's batches
  double val_accuracy = 0.0;
};

struct TrainResult {
  model::Checkpoint best;  // highest validation accuracy, earliest on ties
  std::size_t best_epoch = 0;
  std::vector<EpochLog> history;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Deterministic shuffle of [0, n) by seed, cut at round(split * n). Both parts
/// are nonempty.
struct SplitIndices {
  std::vector<std::size_t> train, val;
};
SplitIndices split_indices(std::size_t n, double split, std::uint64_t seed);

/// Carves the validation set from `samples` with `config.split`.
TrainResult train_classifier(const TrainConfig& config, const std::vector<data::ImageSample>& samples,
                             const EpochCallback& on_epoch = {});

/// Explicit train and validation sets.
TrainResult train_classifier(const TrainConfig& config, const std::vector<data::ImageSample>& train_set,
                             const std::vector<data::ImageSample>& val_set, const EpochCallback& on_epoch = {});

/// Trainable tensors of the model spec, in slot order.
std::vector<std::string> trainable_names(const model::ModelSpec& spec);

/// One train-mode forward, cross-entropy backward and Adam update; also stores
/// the batchnorm running statistics. Returns the loss before the update.
double train_step(model::Checkpoint& checkpoint, grad::AdamState& adam, const grad::Tensor& batch,
                  const std::vector<std::size_t>& labels, std::mt19937_64& rng);

/// Fraction of samples whose argmax probability equals the label.
double evaluate_accuracy(const model::Checkpoint& checkpoint, const std::vector<data::ImageSample>& samples);

}  // namespace dac::train
