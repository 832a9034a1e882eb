#include "dac/modelzoo/classifier.hpp"

#include <algorithm>
#include <set>

#include "dac/common/error.hpp"

namespace dac::model {

namespace {

using grad::Var;

class Runner {
 public:
  Runner(grad::Tape& tape, const Checkpoint& ck, const ForwardOptions& opt, ForwardResult& result)
      : tape_(tape), ck_(ck), opt_(opt), result_(result) {}

  Var param(const std::string& name) {
    auto it = result_.parameters.find(name);
    if (it != result_.parameters.end()) return it->second;
    Var v = tape_.borrow(ck_.tensor(name), opt_.parameter_grads);
    result_.parameters.emplace(name, v);
    return v;
  }

  Var conv(Var x, const std::string& prefix, const grad::ConvGeometry& g) {
    return grad::conv2d(x, param(prefix + ".weight"), param(prefix + ".bias"), g);
  }

  Var batchnorm(Var x, const std::string& prefix) {
    const grad::BatchNormConfig config{opt_.mode, 0.1, 1e-5};
    grad::BatchNormUpdate update;
    Var y = grad::batchnorm2d(x, param(prefix + ".gamma"), param(prefix + ".beta"),
                              ck_.tensor(prefix + ".running_mean"), ck_.tensor(prefix + ".running_var"), config,
                              opt_.mode == grad::Mode::Train ? &update : nullptr);
    if (opt_.mode == grad::Mode::Train) result_.batchnorm_updates[prefix] = std::move(update);
    return y;
  }

  Var relu(Var x) {
    if (opt_.record_relu_inputs) result_.relu_inputs.push_back(x.value());
    if (opt_.rescale_reference) {
      if (relu_index_ >= opt_.rescale_reference->size()) {
        throw ValueError("rescale reference has fewer entries than the network has ReLU layers");
      }
      return grad::relu_rescale(x, (*opt_.rescale_reference)[relu_index_++]);
    }
    return grad::relu(x, opt_.relu_mode);
  }

  Var resblock(Var x, const LayerSpec& l) {
    const bool strided = l.stride == 2;
    const grad::ConvGeometry g3 = strided ? grad::ConvGeometry{2, 1, 0} : grad::ConvGeometry{1, 1, 1};
    Var h = relu(batchnorm(conv(x, l.name + ".conv1", g3), l.name + ".bn1"));
    h = batchnorm(conv(h, l.name + ".conv2", {1, 1, 1}), l.name + ".bn2");
    Var skip = x;
    if (strided || l.in_channels != l.out_channels) {
      const grad::ConvGeometry g1 = strided ? grad::ConvGeometry{2, 0, -1} : grad::ConvGeometry{1, 0, 0};
      skip = conv(x, l.name + ".proj", g1);
    }
    return relu(grad::add(h, skip));
  }

  Var layer(Var x, const LayerSpec& l) {
    switch (l.kind) {
      case LayerKind::Conv2d: return conv(x, l.name, {l.stride, l.pad_begin, l.pad_end});
      case LayerKind::BatchNorm2d: return batchnorm(x, l.name);
      case LayerKind::ReLU: return relu(x);
      case LayerKind::MaxPool2d: return grad::maxpool2d(x, l.kernel, l.stride);
      case LayerKind::ResBlock: return resblock(x, l);
      case LayerKind::Flatten: return grad::flatten(x);
      case LayerKind::Linear: return grad::linear(x, param(l.name + ".weight"), param(l.name + ".bias"));
      case LayerKind::Dropout: return grad::dropout(x, l.dropout, opt_.mode, opt_.rng);
    }
    throw ValueError("unhandled layer kind");
  }

  void finish() const {
    if (opt_.rescale_reference && relu_index_ != opt_.rescale_reference->size()) {
      throw ValueError("rescale reference has more entries than the network has ReLU layers");
    }
  }

 private:
  grad::Tape& tape_;
  const Checkpoint& ck_;
  const ForwardOptions& opt_;
  ForwardResult& result_;
  std::size_t relu_index_ = 0;
};

}  // namespace

ForwardResult forward(grad::Tape& tape, const Checkpoint& checkpoint, grad::Var input, const ForwardOptions& options) {
  const ModelSpec& spec = checkpoint.spec;
  const grad::Shape& s = input.shape();
  if (s.size() != 4 || s[1] != spec.input_channels || s[2] != spec.input_size || s[3] != spec.input_size) {
    throw DimensionError("forward: batch shape " + grad::shape_string(s) + " does not match model input (N, " +
                         std::to_string(spec.input_channels) + ", " + std::to_string(spec.input_size) + ", " +
                         std::to_string(spec.input_size) + ")");
  }
  std::set<std::string> wanted(options.captures.begin(), options.captures.end());
  for (const std::string& name : wanted) {
    const bool known = name == kInputCapture || std::any_of(spec.layers.begin(), spec.layers.end(),
                                                            [&](const LayerSpec& l) { return l.name == name; });
    if (!known) throw ValueError("unknown capture name '" + name + "'");
  }

  ForwardResult result;
  Runner runner(tape, checkpoint, options, result);
  if (wanted.count(kInputCapture)) {
    result.captures[kInputCapture] = input;
    tape.capture(kInputCapture, input);
  }
  Var x = input;
  for (const LayerSpec& l : spec.layers) {
    x = runner.layer(x, l);
    if (wanted.count(l.name)) {
      result.captures[l.name] = x;
      tape.capture(l.name, x);
    }
  }
  runner.finish();
  result.logits = x;
  result.probabilities = grad::softmax(x);
  return result;
}

grad::Tensor predict(const Checkpoint& checkpoint, const grad::Tensor& batch, std::size_t chunk) {
  if (batch.rank() != 4) throw DimensionError("predict: expects an (N, C, H, W) batch");
  const std::size_t n = batch.dim(0), k = checkpoint.spec.num_classes;
  grad::Tensor out({n, k});
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t first = 0; first < n; first += chunk) {
    const std::size_t count = std::min(chunk, n - first);
    grad::Tape tape;
    Var in = tape.leaf(batch.slice_batch(first, count), false);
    const grad::Tensor& p = forward(tape, checkpoint, in).probabilities.value();
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(first * k));
  }
  return out;
}

void apply_batchnorm_updates(Checkpoint& checkpoint, const std::map<std::string, grad::BatchNormUpdate>& updates) {
  for (const auto& [prefix, u] : updates) {
    checkpoint.tensor(prefix + ".running_mean") = u.running_mean;
    checkpoint.tensor(prefix + ".running_var") = u.running_var;
  }
}

}  // namespace dac::model
