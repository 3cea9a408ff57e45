#include "precut/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace precut {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

}  // namespace

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int e : shape) {
    if (e < 0) fail("tensor: negative extent");
    n *= e;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(shape_numel(shape_), 0.0);
  cols_cached_ = shape_.empty() ? 0 : shape_.back();
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  require(shape_numel(shape_) == static_cast<int64_t>(data_.size()), "tensor: data does not match shape");
  cols_cached_ = shape_.empty() ? 0 : shape_.back();
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = v;
  return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = rng.normal() * stddev;
  return t;
}

int Tensor::rows() const {
  require(shape_.size() == 2, "tensor: rows() needs a 2-D tensor, got " + shape_str());
  return shape_[0];
}

int Tensor::cols() const {
  require(shape_.size() == 2, "tensor: cols() needs a 2-D tensor, got " + shape_str());
  return shape_[1];
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  require(shape_numel(shape) == numel(), "tensor: reshape element count mismatch");
  return Tensor(std::move(shape), data_);
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

void Tensor::ensure_finite(const char* what) const {
  for (double v : data_) {
    if (!std::isfinite(v)) fail(std::string("non-finite value produced by ") + what);
  }
}

namespace {

void require_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) fail(std::string(op) + ": expected 2-D tensor, got " + t.shape_str());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) fail(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) fail("matmul: inner extents differ, " + a.shape_str() + " vs " + b.shape_str());
  Tensor c({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (int i = 0; i < m; ++i) {
    double* crow = pc + static_cast<int64_t>(i) * n;
    const double* arow = pa + static_cast<int64_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = pb + static_cast<int64_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  c.ensure_finite("matmul");
  return c;
}

Tensor transposed(const Tensor& a) {
  require_2d(a, "transpose");
  const int m = a.rows(), n = a.cols();
  Tensor t({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

namespace {

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = f(a[i], b[i]);
  out.ensure_finite(op);
  return out;
}

template <class F>
Tensor map(const Tensor& a, const char* op, F f) {
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = f(a[i]);
  out.ensure_finite(op);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return zip(a, b, "add", [](double x, double y) { return x + y; }); }
Tensor sub(const Tensor& a, const Tensor& b) { return zip(a, b, "sub", [](double x, double y) { return x - y; }); }
Tensor mul(const Tensor& a, const Tensor& b) { return zip(a, b, "mul", [](double x, double y) { return x * y; }); }
Tensor scale(const Tensor& a, double c) { return map(a, "scale", [c](double x) { return x * c; }); }
Tensor add_const(const Tensor& a, double c) { return map(a, "add_const", [c](double x) { return x + c; }); }

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  require_2d(a, "add_rowvec");
  if (v.numel() != a.cols()) fail("add_rowvec: vector length " + v.shape_str() + " vs " + a.shape_str());
  Tensor out = a;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out.at(i, j) += v[j];
  out.ensure_finite("add_rowvec");
  return out;
}

Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
  require_2d(a, "mul_rowvec");
  if (v.numel() != a.cols()) fail("mul_rowvec: vector length " + v.shape_str() + " vs " + a.shape_str());
  Tensor out = a;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out.at(i, j) *= v[j];
  out.ensure_finite("mul_rowvec");
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  require_2d(a, "softmax_rows");
  Tensor out = a;
  const int m = a.rows(), n = a.cols();
  if (n == 0) fail("softmax_rows: empty rows");
  for (int i = 0; i < m; ++i) {
    double mx = a.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      double e = std::exp(a.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < n; ++j) out.at(i, j) /= sum;
  }
  out.ensure_finite("softmax_rows");
  return out;
}

Tensor sigmoid(const Tensor& a) {
  return map(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor gelu_tanh(const Tensor& a) {
  // tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
  constexpr double kAlpha = 0.7978845608028653558798921198687;
  return map(a, "gelu", [](double x) {
    double inner = kAlpha * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(inner));
  });
}

Tensor exp_elem(const Tensor& a) { return map(a, "exp", [](double x) { return std::exp(x); }); }

Tensor log_elem(const Tensor& a) {
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a[i] <= 0.0) fail("log: non-positive input");
  return map(a, "log", [](double x) { return std::log(x); });
}

Tensor abs_elem(const Tensor& a) { return map(a, "abs", [](double x) { return std::fabs(x); }); }

Tensor clamp_elem(const Tensor& a, double lo, double hi) {
  if (lo > hi) fail("clamp: lo > hi");
  return map(a, "clamp", [lo, hi](double x) { return std::min(hi, std::max(lo, x)); });
}

Tensor layer_norm_rows(const Tensor& a, double eps) {
  require_2d(a, "layer_norm");
  const int m = a.rows(), n = a.cols();
  if (n == 0) fail("layer_norm: empty rows");
  Tensor out = a;
  for (int i = 0; i < m; ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += a.at(i, j);
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      double d = a.at(i, j) - mean;
      var += d * d;
    }
    var /= n;
    double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) out.at(i, j) = (a.at(i, j) - mean) * inv;
  }
  out.ensure_finite("layer_norm");
  return out;
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a[i];
  Tensor out = Tensor::scalar(s);
  out.ensure_finite("sum");
  return out;
}

Tensor mean_all(const Tensor& a) {
  if (a.numel() == 0) fail("mean: empty tensor");
  Tensor out = Tensor::scalar(sum_all(a)[0] / static_cast<double>(a.numel()));
  out.ensure_finite("mean");
  return out;
}

Tensor slice_rows(const Tensor& a, int start, int len) {
  require_2d(a, "slice_rows");
  if (start < 0 || len < 0 || start + len > a.rows()) fail("slice_rows: out of range");
  Tensor out({len, a.cols()});
  for (int i = 0; i < len; ++i)
    for (int j = 0; j < a.cols(); ++j) out.at(i, j) = a.at(start + i, j);
  return out;
}

Tensor slice_cols(const Tensor& a, int start, int len) {
  require_2d(a, "slice_cols");
  if (start < 0 || len < 0 || start + len > a.cols()) fail("slice_cols: out of range");
  Tensor out({a.rows(), len});
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < len; ++j) out.at(i, j) = a.at(i, start + j);
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail("concat_rows: no parts");
  int cols = parts[0].cols();
  int rows = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_rows");
    if (p.cols() != cols) fail("concat_rows: column mismatch");
    rows += p.rows();
  }
  Tensor out({rows, cols});
  int r = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < p.rows(); ++i, ++r)
      for (int j = 0; j < cols; ++j) out.at(r, j) = p.at(i, j);
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail("concat_cols: no parts");
  int rows = parts[0].rows();
  int cols = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != rows) fail("concat_cols: row mismatch");
    cols += p.cols();
  }
  Tensor out({rows, cols});
  int c0 = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < p.cols(); ++j) out.at(i, c0 + j) = p.at(i, j);
    c0 += p.cols();
  }
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& idx) {
  require_2d(a, "gather_rows");
  Tensor out({static_cast<int>(idx.size()), a.cols()});
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows()) fail("gather_rows: index out of range");
    for (int j = 0; j < a.cols(); ++j) out.at(static_cast<int>(i), j) = a.at(idx[i], j);
  }
  return out;
}

Tensor depthwise3x3(const Tensor& x, const Tensor& k, int h, int w) {
  require_2d(x, "depthwise3x3");
  require_2d(k, "depthwise3x3");
  const int c = x.cols();
  if (x.rows() != h * w) fail("depthwise3x3: grid extents do not match rows");
  if (k.rows() != c || k.cols() != 9) fail("depthwise3x3: kernel must be [C x 9]");
  Tensor out({h * w, c});
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      for (int dy = -1; dy <= 1; ++dy) {
        const int sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int sx = xx + dx;
          if (sx < 0 || sx >= w) continue;
          const int tap = (dy + 1) * 3 + (dx + 1);
          const int po = y * w + xx;
          const int pi = sy * w + sx;
          for (int ch = 0; ch < c; ++ch) out.at(po, ch) += x.at(pi, ch) * k.at(ch, tap);
        }
      }
    }
  }
  out.ensure_finite("depthwise3x3");
  return out;
}

Tensor grad_x(const Tensor& x, int h, int w) {
  require_2d(x, "grad_x");
  if (x.rows() != h * w) fail("grad_x: grid extents do not match rows");
  Tensor out({h * w, x.cols()});
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx + 1 < w; ++xx)
      for (int c = 0; c < x.cols(); ++c) out.at(y * w + xx, c) = x.at(y * w + xx + 1, c) - x.at(y * w + xx, c);
  return out;
}

Tensor grad_y(const Tensor& x, int h, int w) {
  require_2d(x, "grad_y");
  if (x.rows() != h * w) fail("grad_y: grid extents do not match rows");
  Tensor out({h * w, x.cols()});
  for (int y = 0; y + 1 < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int c = 0; c < x.cols(); ++c) out.at(y * w + xx, c) = x.at((y + 1) * w + xx, c) - x.at(y * w + xx, c);
  return out;
}

Tensor huber_elem(const Tensor& a, double delta) {
  if (delta <= 0.0) fail("huber: delta must be positive");
  return map(a, "huber", [delta](double x) {
    double ax = std::fabs(x);
    return ax <= delta ? 0.5 * x * x : delta * (ax - 0.5 * delta);
  });
}

std::pair<double, int64_t> max_with_index(const Tensor& a) {
  if (a.numel() == 0) fail("max_with_index: empty tensor");
  double best = a[0];
  int64_t at = 0;
  for (int64_t i = 1; i < a.numel(); ++i) {
    if (a[i] > best) {
      best = a[i];
      at = i;
    }
  }
  return {best, at};
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

int guarded_ceil(double x) { return static_cast<int>(std::ceil(x - 1e-9)); }
int guarded_floor(double x) { return static_cast<int>(std::floor(x + 1e-9)); }

}  // namespace precut
