#include "dac/gradcore/tape.hpp"

#include "dac/common/error.hpp"

namespace dac::grad {

const Tensor& Var::value() const { return tape_->value(*this); }

const Tensor& Gradients::of(Var v) const {
  if (!has(v)) throw ValueError("no gradient recorded for node " + std::to_string(v.id()));
  return *grads_[v.id()];
}

Tensor Gradients::or_zeros(Var v) const { return has(v) ? *grads_[v.id()] : Tensor(v.shape()); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.owned = std::move(value);
  node.requires_grad = requires_grad;
  node.op = "leaf";
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::borrow(const Tensor& value, bool requires_grad) {
  Node node;
  node.borrowed = &value;
  node.requires_grad = requires_grad;
  node.op = "borrow";
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string_view op) {
  if (!value.all_finite()) throw NumericError("non-finite values produced by " + std::string(op));
  Node node;
  node.owned = std::move(value);
  node.op = op;
  for (const Var& in : inputs) {
    if (!owns(in)) throw ValueError(std::string(op) + ": input is not recorded on this tape");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const {
  if (!owns(v)) throw ValueError("variable does not belong to this tape");
  return nodes_[v.id()].value();
}

const Tensor& Tape::value(std::size_t id) const { return nodes_.at(id).value(); }

void Tape::capture(const std::string& name, Var v) {
  if (!owns(v)) throw ValueError("capture '" + name + "' refers to a foreign variable");
  captures_[name] = v;
}

std::optional<Var> Tape::find_capture(const std::string& name) const {
  auto it = captures_.find(name);
  if (it == captures_.end()) return std::nullopt;
  return it->second;
}

Gradients Tape::backward(Var output, const Tensor& seed) const {
  if (!owns(output)) throw ValueError("backward: output is not recorded on this tape");
  if (seed.shape() != value(output).shape()) {
    throw DimensionError("backward: seed shape " + shape_string(seed.shape()) + " differs from output " +
                         shape_string(value(output).shape()));
  }
  Gradients g(nodes_.size());
  if (!nodes_[output.id()].requires_grad) return g;
  g.grads_[output.id()] = seed;

  std::vector<Tensor*> input_grads;
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!g.grads_[id] || !node.backward) continue;
    input_grads.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (!g.grads_[in]) g.grads_[in] = Tensor(nodes_[in].value().shape());
      input_grads[k] = &*g.grads_[in];
    }
    // Inputs always precede their consumers, so no pointer above aliases grads_[id].
    node.backward(*this, *g.grads_[id], input_grads);
  }
  return g;
}

Gradients Tape::backward_component(Var output, std::size_t component) const {
  const Tensor& out = value(output);
  if (out.rank() != 2 || component >= out.dim(1)) {
    throw ValueError("backward_component: component " + std::to_string(component) + " out of range for " +
                     shape_string(out.shape()));
  }
  Tensor seed(out.shape());
  for (std::size_t n = 0; n < out.dim(0); ++n) seed[n * out.dim(1) + component] = 1.0;
  return backward(output, seed);
}

}  // namespace dac::grad
