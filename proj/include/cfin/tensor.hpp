#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfin {

/// Batch x channels x height x width.
using Shape = std::array<std::size_t, 4>;

std::size_t numel(const Shape& s);
std::string to_string(const Shape& s);

/// Raised when an operation receives operands whose shapes do not satisfy its contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a NaN or Inf would be produced.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense rank-4 tensor stored contiguously in row-major (NCHW) order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(shape, 0.0); }
  static Tensor ones(Shape shape) { return Tensor(shape, 1.0); }

  const Shape& shape() const { return shape_; }
  std::size_t batch() const { return shape_[0]; }
  std::size_t channels() const { return shape_[1]; }
  std::size_t height() const { return shape_[2]; }
  std::size_t width() const { return shape_[3]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::size_t index(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
    return ((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }
  double at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[index(b, c, h, w)];
  }
  double& at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) {
    return data_[index(b, c, h, w)];
  }

  /// Same data, new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  /// Throws NumericError naming `what` if any element is NaN or Inf.
  void check_finite(const char* what) const;

  /// Adds `other` elementwise in place. Shapes must match.
  void add_inplace(const Tensor& other);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& a);

}  // namespace cfin
