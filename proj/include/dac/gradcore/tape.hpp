#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dac/gradcore/tensor.hpp"

namespace dac::grad {

class Tape;

/// Handle to a tensor recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = std::numeric_limits<std::size_t>::max();
};

/// Result of one backward traversal. Holds a gradient for every node that was
/// reached from the seed and requires a gradient.
class Gradients {
 public:
  explicit Gradients(std::size_t nodes) : grads_(nodes) {}

  bool has(Var v) const { return v.id() < grads_.size() && grads_[v.id()].has_value(); }
  /// Throws ValueError when the node received no gradient.
  const Tensor& of(Var v) const;
  /// Gradient, or a zero tensor of the node's shape when unreached.
  Tensor or_zeros(Var v) const;

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> grads_;
};

/// Propagates the upstream gradient of one node into its inputs. Entries of
/// `input_grads` are null for inputs that do not require a gradient.
using BackwardFn =
    std::function<void(const Tape& tape, const Tensor& grad_out, std::span<Tensor* const> input_grads)>;

/// Records primitive ops in execution order, which is already a topological
/// order. Single-threaded; use one tape per worker.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf owned by the tape.
  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  /// Leaf that borrows an external tensor, which must outlive the tape.
  Var borrow(const Tensor& value, bool requires_grad);

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string_view op);

  const Tensor& value(Var v) const;
  const Tensor& value(std::size_t id) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  std::string_view op_name(Var v) const { return nodes_.at(v.id()).op; }
  std::size_t size() const { return nodes_.size(); }
  bool owns(Var v) const { return &v.tape() == this && v.id() < nodes_.size(); }

  void capture(const std::string& name, Var v);
  std::optional<Var> find_capture(const std::string& name) const;
  const std::map<std::string, Var>& captures() const { return captures_; }

  /// Reverse sweep from `output` seeded with `seed` (same shape as output).
  /// Pure: the tape is not modified, so repeated calls give identical results.
  Gradients backward(Var output, const Tensor& seed) const;
  /// Seeds 1 at column `component` of every row of a (batch, k) output.
  Gradients backward_component(Var output, std::size_t component) const;

 private:
  struct Node {
    std::optional<Tensor> owned;
    const Tensor* borrowed = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string op;

    const Tensor& value() const { return owned ? *owned : *borrowed; }
  };

  std::deque<Node> nodes_;  // deque: references stay valid as nodes are appended
  std::map<std::string, Var> captures_;
};

}  // namespace dac::grad
