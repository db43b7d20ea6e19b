#ifndef MIXER_TENSOR_HPP_
#define MIXER_TENSOR_HPP_

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "mixer/error.hpp"

namespace mixer {

// Dense row-major 2-D array of doubles. The value carrier for autodiff.
class Tensor {
 public:
  Tensor() = default;

  Tensor(int rows, int cols)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {
    if (rows < 0 || cols < 0) throw DimensionError("tensor: negative shape");
  }

  static Tensor from(int rows, int cols, std::initializer_list<double> v) {
    Tensor t(rows, cols);
    if (v.size() != t.data_.size())
      throw DimensionError("tensor: initializer size mismatch");
    size_t i = 0;
    for (double x : v) t.data_[i++] = x;
    return t;
  }

  static Tensor row_vector(const std::vector<double>& v) {
    Tensor t(1, static_cast<int>(v.size()));
    t.data_ = v;
    return t;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double at(int r, int c) const {
    return data_[static_cast<size_t>(r) * cols_ + c];
  }

  double* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
  const double* row(int r) const {
    return data_.data() + static_cast<size_t>(r) * cols_;
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  void fill(double v) {
    for (double& x : data_) x = v;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

}  // namespace mixer

#endif  // MIXER_TENSOR_HPP_
