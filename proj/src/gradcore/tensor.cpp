#include "dac/gradcore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dac/common/error.hpp"

namespace dac::grad {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

Tensor Tensor::slice_batch(std::size_t first, std::size_t count) const {
  if (shape_.empty() || first + count > shape_[0]) {
    throw DimensionError("batch slice out of range for " + shape_string(shape_));
  }
  const std::size_t row = data_.size() / shape_[0];
  Shape s = shape_;
  s[0] = count;
  Tensor out(std::move(s));
  std::copy(data_.begin() + static_cast<std::ptrdiff_t>(first * row),
            data_.begin() + static_cast<std::ptrdiff_t>((first + count) * row), out.data_.begin());
  return out;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw DimensionError("stack of zero tensors");
  Shape s{items.size()};
  s.insert(s.end(), items[0].shape().begin(), items[0].shape().end());
  std::vector<double> v;
  v.reserve(shape_size(s));
  for (const auto& t : items) {
    if (t.shape() != items[0].shape()) throw DimensionError("stack: mismatched shapes");
    v.insert(v.end(), t.data().begin(), t.data().end());
  }
  return Tensor(std::move(s), std::move(v));
}

namespace {
template <typename Op>
Tensor zip(const Tensor& a, const Tensor& b, Op op, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i], b[i]);
  return out;
}
}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) { return zip(a, b, std::plus<>(), "add"); }
Tensor operator-(const Tensor& a, const Tensor& b) { return zip(a, b, std::minus<>(), "subtract"); }
Tensor operator*(const Tensor& a, const Tensor& b) { return zip(a, b, std::multiplies<>(), "multiply"); }

Tensor operator*(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

Tensor abs(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::abs(a[i]);
  return out;
}

double sum(const Tensor& a) { return std::accumulate(a.data().begin(), a.data().end(), 0.0); }

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace dac::grad
