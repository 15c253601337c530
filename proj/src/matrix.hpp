#pragma once

#include <cstddef>
#include <vector>

#include "errors.hpp"

namespace fedlab {

// Dense row-major double matrix. Deliberately minimal: training math spells
// out its loops so the summation order is pinned (bitwise reproducibility).
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(size_t(rows) * size_t(cols), fill) {
    if (rows < 0 || cols < 0) fail(ErrorCode::InvalidArgument, "negative matrix shape");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[size_t(r) * size_t(cols_) + size_t(c)]; }
  double operator()(int r, int c) const { return data_[size_t(r) * size_t(cols_) + size_t(c)]; }

  double* row(int r) { return data_.data() + size_t(r) * size_t(cols_); }
  const double* row(int r) const { return data_.data() + size_t(r) * size_t(cols_); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

}  // namespace fedlab
