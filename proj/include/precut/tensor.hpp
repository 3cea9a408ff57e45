#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "precut/rng.hpp"

namespace precut {

// Dense row-major f64 tensor. Shapes are small vectors of extents; most ops
// below treat tensors as 2-D matrices ([rows x cols]) and grid data is kept
// flattened as [h*w x channels] with the grid extents passed alongside.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0);

  const std::vector<int>& shape() const { return shape_; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // 2-D accessors; throw unless the tensor has exactly two axes.
  int rows() const;
  int cols() const;
  double& at(int r, int c) { return data_[static_cast<int64_t>(r) * cols_cached_ + c]; }
  double at(int r, int c) const { return data_[static_cast<int64_t>(r) * cols_cached_ + c]; }

  double& operator[](int64_t i) { return data_[i]; }
  double operator[](int64_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  // Same data, new extents (product must match).
  Tensor reshaped(std::vector<int> shape) const;

  std::string shape_str() const;

  // Throws std::runtime_error naming `what` if any element is NaN or Inf.
  void ensure_finite(const char* what) const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
  int cols_cached_ = 0;  // last extent, for at()
};

int64_t shape_numel(const std::vector<int>& shape);

// ---- eager kernels -------------------------------------------------------
// All kernels validate shapes and surface non-finite results as errors.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transposed(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
// Broadcast a length-n vector across the rows of [m x n].
Tensor add_rowvec(const Tensor& a, const Tensor& v);
Tensor mul_rowvec(const Tensor& a, const Tensor& v);

Tensor softmax_rows(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor gelu_tanh(const Tensor& a);
Tensor exp_elem(const Tensor& a);
Tensor log_elem(const Tensor& a);  // errors on inputs <= 0
Tensor abs_elem(const Tensor& a);
Tensor clamp_elem(const Tensor& a, double lo, double hi);
Tensor layer_norm_rows(const Tensor& a, double eps = 1e-5);

Tensor sum_all(const Tensor& a);   // -> [1]
Tensor mean_all(const Tensor& a);  // -> [1]

Tensor slice_rows(const Tensor& a, int start, int len);
Tensor slice_cols(const Tensor& a, int start, int len);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& a, const std::vector<int>& idx);

// Depthwise 3x3 convolution over an [h*w x C] grid, zero padding 1.
// Kernels are [C x 9] in (dy, dx) row-major tap order.
Tensor depthwise3x3(const Tensor& x, const Tensor& k, int h, int w);

// Forward spatial differences over an [h*w x C] grid; the far edge (where no
// next neighbor exists) is zero.
Tensor grad_x(const Tensor& x, int h, int w);
Tensor grad_y(const Tensor& x, int h, int w);

Tensor huber_elem(const Tensor& a, double delta);

// Largest element and its flat index (first occurrence on ties).
std::pair<double, int64_t> max_with_index(const Tensor& a);

double dot(const std::vector<double>& a, const std::vector<double>& b);

// ceil/floor with a tiny guard so grid-exact products of a ratio and an
// integer count do not tip over an integer boundary from rounding.
int guarded_ceil(double x);
int guarded_floor(double x);

}  // namespace precut
