// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "myq/calibration.hpp"
#include "myq/error.hpp"

namespace myq::calib {

namespace {

void same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.numel() != b.numel())
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <class F>
double weighted_sum(const Tensor& q, const Tensor& o, const char* what, F term) {
  same_shape(q, o, what);
  double s = 0.0;
  for (std::size_t i = 0; i < o.numel(); ++i) s += term(q[i] - o[i], o[i], i);
  return s;
}

}  // namespace

double objective_l1(const Tensor& q, const Tensor& o) {
  return weighted_sum(q, o, "l1", [](double d, double, std::size_t) { return std::abs(d); });
}

double objective_l2(const Tensor& q, const Tensor& o) {
  return weighted_sum(q, o, "l2", [](double d, double, std::size_t) { return d * d; });
}

double objective_linw_l2(const Tensor& q, const Tensor& o) {
  return weighted_sum(q, o, "linw_l2", [](double d, double ov, std::size_t) { return std::abs(ov) * d * d; });
}

double objective_sqw_l2(const Tensor& q, const Tensor& o) {
  return weighted_sum(q, o, "sqw_l2", [](double d, double ov, std::size_t) { return ov * ov * d * d; });
}

double objective_hessian(const Tensor& q, const Tensor& o, const Tensor& grad) {
  same_shape(o, grad, "hessian");
  return weighted_sum(q, o, "hessian", [&](double d, double, std::size_t i) { return grad[i] * grad[i] * d * d; });
}

double objective_cosine(const Tensor& q, const Tensor& o) {
  same_shape(q, o, "cosine");
  double dot = 0.0, nq = 0.0, no = 0.0;
  for (std::size_t i = 0; i < o.numel(); ++i) {
    dot += q[i] * o[i];
    nq += q[i] * q[i];
    no += o[i] * o[i];
  }
  if (no == 0.0) throw ValidationError("cosine objective: reference output has zero norm");
  if (nq == 0.0) return 1.0;
  return 1.0 - dot / std::sqrt(nq * no);
}

}  // namespace myq::calib
