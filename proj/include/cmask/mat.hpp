#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "cmask/errors.hpp"

namespace cmask {

// Dense row-major matrix. Time-frequency data is stored frames x bins, so
// m(t, k) is bin k of frame t and a frame is a contiguous row.
template <class T>
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), v_(static_cast<size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw ParamError("Mat: negative dimension");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return v_.size(); }

  T& operator()(int r, int c) { return v_[static_cast<size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return v_[static_cast<size_t>(r) * cols_ + c]; }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }

  T* row(int r) { return v_.data() + static_cast<size_t>(r) * cols_; }
  const T* row(int r) const { return v_.data() + static_cast<size_t>(r) * cols_; }

  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> v_;
};

using RealMat = Mat<double>;
using ComplexMat = Mat<std::complex<double>>;

}  // namespace cmask
