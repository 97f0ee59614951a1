// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace myq {

enum class DType : unsigned char { f32 = 0, f64 = 1 };

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major tensor. Values are held as doubles; an f32 tensor stores
/// only values exactly representable as float, so every op on f32 inputs
/// rounds its results to single precision.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, DType dtype = DType::f64);
  Tensor(Shape shape, std::vector<double> data, DType dtype = DType::f64);

  static Tensor zeros(Shape shape, DType dtype = DType::f64);
  static Tensor full(Shape shape, double value, DType dtype = DType::f64);
  static Tensor vector(std::initializer_list<double> values, DType dtype = DType::f64);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       DType dtype = DType::f64);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }
  DType dtype() const noexcept { return dtype_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }

  // Mutable access is for construction; the stored value is re-rounded
  // on read-back via set().
  void set(std::size_t i, double v);

  Tensor reshaped(Shape shape) const;
  Tensor as(DType dtype) const;

  bool bit_equal(const Tensor& other) const noexcept;

 private:
  Shape shape_;
  std::vector<double> data_;
  DType dtype_ = DType::f64;
};

double cast_to(DType dtype, double v) noexcept;

// Forward ops. Results take the dtype of the first operand.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // bias over last axis
Tensor gelu(const Tensor& x);
double gelu_scalar(double x) noexcept;
Tensor softmax(const Tensor& x, int axis = -1);
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Unfold x[c_in x t] into patches[t' x (c_in*k)], column index ci*k + j.
Tensor im2col(const Tensor& x, std::size_t kernel, std::size_t stride);
/// Valid cross-correlation: x[c_in x t], w[c_out x c_in x k] -> [c_out x t'].
Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride);

/// Y = X W^T (+ bias), X[n x in], W[out x in].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias);

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);

double max_abs(const Tensor& x) noexcept;

}  // namespace myq
