#include "nnsb/tensor.hpp"

#include <utility>

#include "nnsb/error.hpp"

namespace nnsb {

Tensor::Tensor(Shape shape, double fill) : shape_(shape), values_(shape.size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), values_(std::move(values)) {
  require(values_.size() == shape_.size(), "Tensor: value count does not match shape");
}

Tensor Tensor::column(std::vector<double> v) {
  const Shape s{v.size(), 1};
  return Tensor(s, std::move(v));
}

Tensor Tensor::row(std::vector<double> v) {
  const Shape s{1, v.size()};
  return Tensor(s, std::move(v));
}

double Tensor::item() const {
  require(shape_.rows == 1 && shape_.cols == 1, "Tensor::item on non-scalar");
  return values_[0];
}

Tensor Tensor::select_rows(std::span<const std::size_t> rows) const {
  Tensor out({rows.size(), shape_.cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < shape_.rows, "Tensor::select_rows: index out of range");
    const auto src = row_span(rows[i]);
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  return out;
}

Tensor Tensor::column_at(std::size_t c) const {
  require(c < shape_.cols, "Tensor::column_at: column out of range");
  Tensor out({shape_.rows, 1});
  for (std::size_t r = 0; r < shape_.rows; ++r) out[r] = (*this)(r, c);
  return out;
}

}  // namespace nnsb
