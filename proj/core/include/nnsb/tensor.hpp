#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace nnsb {

/// Row-major 2-D shape. Scalars are 1x1, column vectors are n x 1.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense row-major array of 64-bit floats. A plain value: it does not know
/// about computation records (see Var for that).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
  static Tensor column(std::vector<double> v);
  static Tensor row(std::vector<double> v);

  const Shape& shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t size() const { return values_.size(); }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const std::vector<double>& data() const { return values_; }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * shape_.cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * shape_.cols + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * shape_.cols, shape_.cols);
  }
  std::span<double> row_span(std::size_t r) {
    return std::span<double>(values_).subspan(r * shape_.cols, shape_.cols);
  }

  /// Value of a 1x1 tensor.
  double item() const;

  /// Rows selected by index, in the given order.
  Tensor select_rows(std::span<const std::size_t> rows) const;
  /// Single column as an n x 1 tensor.
  Tensor column_at(std::size_t c) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

}  // namespace nnsb
