#include "cfin/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cfin {

std::size_t numel(const Shape& s) { return s[0] * s[1] * s[2] * s[3]; }

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '(' << s[0] << ',' << s[1] << ',' << s[2] << ',' << s[3] << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(numel(shape), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != numel(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(shape, data_);
}

void Tensor::check_finite(const char* what) const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + what);
    }
  }
}

void Tensor::add_inplace(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw ShapeError("add_inplace: " + to_string(shape_) + " vs " + to_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

}  // namespace cfin
