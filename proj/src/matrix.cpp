#include "xquant/matrix.hpp"

#include <algorithm>

#include "xquant/errors.hpp"

namespace xquant {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ArgumentError("matrix data size does not match " + std::to_string(rows_) + "x" +
                        std::to_string(cols_));
  }
}

Matrix Matrix::slice_rows(std::size_t first, std::size_t count) const {
  if (first + count > rows_) {
    throw ArgumentError("row slice out of range");
  }
  auto begin = data_.begin() + static_cast<std::ptrdiff_t>(first * cols_);
  return Matrix(count, cols_,
                std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(count * cols_)));
}

void Matrix::append_rows(const Matrix& other) {
  if (other.rows_ == 0) {
    return;
  }
  if (rows_ == 0 && cols_ == 0) {
    cols_ = other.cols_;
  }
  if (other.cols_ != cols_) {
    throw ArgumentError("cannot append rows with " + std::to_string(other.cols_) +
                        " columns to a matrix with " + std::to_string(cols_));
  }
  data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  rows_ += other.rows_;
}

void Matrix::drop_front_rows(std::size_t count) {
  count = std::min(count, rows_);
  data_.erase(data_.begin(), data_.begin() + static_cast<std::ptrdiff_t>(count * cols_));
  rows_ -= count;
}

Matrix Matrix::transposed() const {
  Matrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) {
      out(c, r) = (*this)(r, c);
    }
  }
  return out;
}

}  // namespace xquant
