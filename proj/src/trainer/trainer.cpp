#include "dac/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dac/common/error.hpp"
#include "dac/datagen/io.hpp"
#include "dac/gradcore/ops.hpp"
#include "dac/modelzoo/classifier.hpp"

namespace dac::train {

namespace {

std::vector<data::ImageSample> subset(const std::vector<data::ImageSample>& samples,
                                      const std::vector<std::size_t>& idx) {
  std::vector<data::ImageSample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(samples[i]);
  return out;
}

void check_samples(const std::vector<data::ImageSample>& samples, const char* what) {
  if (samples.empty()) throw ValueError(std::string(what) + " set is empty");
  const grad::Shape& shape = samples.front().image.shape();
  for (const auto& s : samples) {
    if (s.image.shape() != shape) throw DimensionError(std::string(what) + " images differ in shape");
    if (s.label < 0) throw ValueError(std::string(what) + " set has a negative label");
  }
}

}  // namespace

void validate(const TrainConfig& config) {
  if (config.epochs < 1) throw ValueError("epochs must be at least 1");
  if (config.batch_size < 1) throw ValueError("batch size must be at least 1");
  if (!(config.split > 0.0 && config.split < 1.0)) throw ValueError("split must lie in (0, 1)");
  if (!(config.learning_rate > 0.0)) throw ValueError("learning rate must be positive");
  if (config.model != "vgg" && config.model != "resnet") throw ValueError("unknown model kind '" + config.model + "'");
}

model::ModelSpec build_model(const TrainConfig& config, std::size_t image_size, std::size_t num_classes) {
  return config.model == "resnet" ? model::build_resnet(image_size, num_classes, config.head)
                                  : model::build_vgg(image_size, num_classes, config.head);
}

SplitIndices split_indices(std::size_t n, double split, std::uint64_t seed) {
  if (n < 2) throw ValueError("need at least two samples to split");
  if (!(split > 0.0 && split < 1.0)) throw ValueError("split must lie in (0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(order.begin(), order.end(), rng);
  const auto cut = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(split * static_cast<double>(n))), 1, n - 1);
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
  return s;
}

std::vector<std::string> trainable_names(const model::ModelSpec& spec) {
  std::vector<std::string> names;
  for (const auto& slot : model::tensor_slots(spec)) {
    if (slot.trainable) names.push_back(slot.name);
  }
  return names;
}

double train_step(model::Checkpoint& checkpoint, grad::AdamState& adam, const grad::Tensor& batch,
                  const std::vector<std::size_t>& labels, std::mt19937_64& rng) {
  const std::vector<std::string> names = trainable_names(checkpoint.spec);
  std::vector<grad::Tensor> grads;
  double loss_value = 0.0;
  {
    grad::Tape tape;
    model::ForwardOptions opt;
    opt.mode = grad::Mode::Train;
    opt.rng = &rng;
    opt.parameter_grads = true;
    const model::ForwardResult r = model::forward(tape, checkpoint, tape.constant(batch), opt);
    const grad::Var loss = grad::cross_entropy(r.logits, labels);
    loss_value = loss.value()[0];
    if (!std::isfinite(loss_value)) throw NumericError("non-finite training loss");
    const grad::Gradients g = tape.backward(loss, grad::Tensor(loss.shape(), 1.0));
    grads.reserve(names.size());
    for (const auto& name : names) grads.push_back(g.or_zeros(r.parameters.at(name)));
    model::apply_batchnorm_updates(checkpoint, r.batchnorm_updates);
  }
  std::vector<grad::Tensor*> params;
  std::vector<const grad::Tensor*> grad_ptrs;
  for (std::size_t i = 0; i < names.size(); ++i) {
    params.push_back(&checkpoint.tensor(names[i]));
    grad_ptrs.push_back(&grads[i]);
  }
  grad::adam_step(params, grad_ptrs, adam);
  return loss_value;
}

double evaluate_accuracy(const model::Checkpoint& checkpoint, const std::vector<data::ImageSample>& samples) {
  if (samples.empty()) throw ValueError("cannot evaluate accuracy on an empty set");
  const std::size_t k = checkpoint.spec.num_classes;
  for (const auto& s : samples) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= k) {
      throw ValueError("label " + std::to_string(s.label) + " outside the model's " + std::to_string(k) + " classes");
    }
    const grad::Shape expected{checkpoint.spec.input_channels, checkpoint.spec.input_size, checkpoint.spec.input_size};
    if (s.image.shape() != expected) {
      throw DimensionError("image " + grad::shape_string(s.image.shape()) + " does not match model input " +
                           grad::shape_string(expected));
    }
  }
  const grad::Tensor probs = model::predict(checkpoint, data::stack_images(samples));
  std::size_t correct = 0;
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const double* row = probs.raw() + n * k;
    const auto arg = static_cast<std::size_t>(std::max_element(row, row + k) - row);
    correct += arg == static_cast<std::size_t>(samples[n].label);
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

TrainResult train_classifier(const TrainConfig& config, const std::vector<data::ImageSample>& samples,
                             const EpochCallback& on_epoch) {
  validate(config);
  if (samples.empty()) throw ValueError("training dataset is empty");
  if (samples.size() < 2 * config.batch_size) {
    throw ValueError("dataset needs at least two batches of samples, got " + std::to_string(samples.size()));
  }
  const SplitIndices s = split_indices(samples.size(), config.split, config.seed);
  return train_classifier(config, subset(samples, s.train), subset(samples, s.val), on_epoch);
}

TrainResult train_classifier(const TrainConfig& config, const std::vector<data::ImageSample>& train_set,
                             const std::vector<data::ImageSample>& val_set, const EpochCallback& on_epoch) {
  validate(config);
  check_samples(train_set, "training");
  check_samples(val_set, "validation");
  int max_label = 0;
  for (const auto& s : train_set) max_label = std::max(max_label, s.label);
  for (const auto& s : val_set) max_label = std::max(max_label, s.label);
  const std::size_t num_classes = static_cast<std::size_t>(max_label) + 1;
  const std::size_t classes = config.dataset.empty() ? num_classes
                                                     : static_cast<std::size_t>(data::num_classes_for(config.dataset));
  if (classes < num_classes) throw ValueError("labels exceed the class count of dataset '" + config.dataset + "'");
  if (classes < 2) throw ValueError("training needs at least two classes");
  const grad::Shape& shape = train_set.front().image.shape();
  if (shape.size() != 3 || shape[0] != 1 || shape[1] != shape[2]) {
    throw DimensionError("expected square single-channel images, got " + grad::shape_string(shape));
  }
  if (val_set.front().image.shape() != shape) throw DimensionError("train and validation images differ in shape");

  model::Checkpoint ck = model::init_checkpoint(build_model(config, shape[1], classes), config.seed);
  ck.metadata.seed = config.seed;
  ck.metadata.dataset = config.dataset;
  grad::AdamState adam(grad::AdamConfig{config.learning_rate});
  std::mt19937_64 rng(config.seed);

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  bool have_best = false;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<data::ImageSample> chunk;
      std::vector<std::size_t> labels;
      for (std::size_t i = start; i < end; ++i) {
        chunk.push_back(train_set[order[i]]);
        labels.push_back(static_cast<std::size_t>(train_set[order[i]].label));
      }
      try {
        loss_sum += train_step(ck, adam, data::stack_images(chunk), labels, rng);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches));
      }
      ++batches;
    }
    EpochLog log{epoch, loss_sum / static_cast<double>(batches), evaluate_accuracy(ck, val_set)};
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
    if (!have_best || log.val_accuracy > result.best.metadata.val_accuracy) {
      have_best = true;
      result.best = ck;
      result.best.metadata.epoch = static_cast<std::int64_t>(epoch);
      result.best.metadata.val_accuracy = log.val_accuracy;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace dac::train
