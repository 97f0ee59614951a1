// SPDX-License-Identifier: Apache-2.0
#include "myq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "myq/error.hpp"

namespace myq {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

double cast_to(DType dtype, double v) noexcept {
  return dtype == DType::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimension sizes must be >= 1, got " + shape_str(shape));
}

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2)
    throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
}

}  // namespace

Tensor::Tensor(Shape shape, DType dtype)
    : shape_(std::move(shape)), dtype_(dtype) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data, DType dtype)
    : shape_(std::move(shape)), data_(std::move(data)), dtype_(dtype) {
  check_shape(shape_);
  if (shape_numel(shape_) != data_.size())
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
  if (dtype_ == DType::f32)
    for (auto& v : data_) v = cast_to(DType::f32, v);
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return Tensor(std::move(shape), dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), dtype);
}

Tensor Tensor::vector(std::initializer_list<double> values, DType dtype) {
  return Tensor({values.size()}, std::vector<double>(values), dtype);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, DType dtype) {
  std::vector<double> data;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data), dtype);
}

void Tensor::set(std::size_t i, double v) { data_.at(i) = cast_to(dtype_, v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel())
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::as(DType dtype) const { return Tensor(shape_, data_, dtype); }

bool Tensor::bit_equal(const Tensor& other) const noexcept {
  return dtype_ == other.dtype_ && shape_ == other.shape_ &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
    }
  return Tensor({m, n}, std::move(out), a.dtype());
}

Tensor transpose(const Tensor& x) {
  require_2d(x, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return Tensor({c, r}, std::move(out), x.dtype());
}

namespace {

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
  return Tensor(a.shape(), std::move(out), a.dtype());
}

template <class F>
Tensor map(const Tensor& x, F f) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return Tensor(x.shape(), std::move(out), x.dtype());
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& x, double s) {
  return map(x, [s](double v) { return v * s; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.shape().back();
  if (bias.numel() != n)
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
  std::vector<double> out(x.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % n];
  return Tensor(x.shape(), std::move(out), x.dtype());
}

double gelu_scalar(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

Tensor gelu(const Tensor& x) { return map(x, gelu_scalar); }

Tensor softmax(const Tensor& x, int axis) {
  const int nd = static_cast<int>(x.ndim());
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw DimensionError("softmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < nd; ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      auto idx = [&](std::size_t j) { return (o * len + j) * inner + in; };
      double mx = x[idx(0)];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, x[idx(j)]);
      double sum = 0.0;
      for (std::size_t j = 0; j < len; ++j) sum += (out[idx(j)] = std::exp(x[idx(j)] - mx));
      for (std::size_t j = 0; j < len; ++j) out[idx(j)] /= sum;
    }
  return Tensor(x.shape(), std::move(out), x.dtype());
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t n = x.shape().back();
  if (gamma.numel() != n || beta.numel() != n)
    throw DimensionError("layernorm: affine parameters do not match " + shape_str(x.shape()));
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < x.numel() / n; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x[r * n + j];
    mean /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) var += (x[r * n + j] - mean) * (x[r * n + j] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j)
      out[r * n + j] = (x[r * n + j] - mean) * inv * gamma[j] + beta[j];
  }
  return Tensor(x.shape(), std::move(out), x.dtype());
}

Tensor im2col(const Tensor& x, std::size_t kernel, std::size_t stride) {
  require_2d(x, "im2col");
  if (stride == 0) throw DimensionError("im2col: stride must be positive");
  const std::size_t c_in = x.dim(0), t = x.dim(1);
  if (kernel == 0 || kernel > t)
    throw DimensionError("conv1d: kernel length " + std::to_string(kernel) +
                         " exceeds input length " + std::to_string(t));
  const std::size_t t_out = (t - kernel) / stride + 1;
  const std::size_t cols = c_in * kernel;
  std::vector<double> out(t_out * cols);
  for (std::size_t p = 0; p < t_out; ++p)
    for (std::size_t c = 0; c < c_in; ++c)
      for (std::size_t j = 0; j < kernel; ++j)
        out[p * cols + c * kernel + j] = x[c * t + p * stride + j];
  return Tensor({t_out, cols}, std::move(out), x.dtype());
}

Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride) {
  if (w.ndim() != 3) throw DimensionError("conv1d: weight must be c_out x c_in x k");
  require_2d(x, "conv1d");
  if (w.dim(1) != x.dim(0))
    throw DimensionError("conv1d: channel mismatch " + shape_str(x.shape()) + " vs weight " +
                         shape_str(w.shape()));
  const Tensor cols = im2col(x, w.dim(2), stride);
  const Tensor w2 = w.reshaped({w.dim(0), w.dim(1) * w.dim(2)});
  return transpose(linear(cols, w2, nullptr));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias) {
  require_2d(x, "linear");
  require_2d(w, "linear");
  const std::size_t n = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (w.dim(1) != in)
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  if (bias && bias->numel() != out)
    throw DimensionError("linear: bias " + shape_str(bias->shape()) + " does not match weight " +
                         shape_str(w.shape()));
  std::vector<double> y(n * out);
  auto X = x.data();
  auto W = w.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bias ? (*bias)[o] : 0.0;
      for (std::size_t p = 0; p < in; ++p) acc += X[i * in + p] * W[o * in + p];
      y[i * out + o] = acc;
    }
  return Tensor({n, out}, std::move(y), x.dtype());
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_2d(x, "slice_cols");
  if (begin >= end || end > x.dim(1)) throw DimensionError("slice_cols: bad column range");
  const std::size_t r = x.dim(0), c = x.dim(1), w = end - begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x[i * c + begin + j];
  return Tensor({r, w}, std::move(out), x.dtype());
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts.front().dim(0);
  std::size_t c = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.dim(0) != r) throw DimensionError("concat_cols: row count mismatch");
    c += p.dim(1);
  }
  std::vector<double> out(r * c);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * c + off + j] = p[i * w + j];
    off += w;
  }
  return Tensor({r, c}, std::move(out), parts.front().dtype());
}

double max_abs(const Tensor& x) noexcept {
  double m = 0.0;
  for (double v : x.data()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace myq
