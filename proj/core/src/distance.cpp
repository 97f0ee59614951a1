// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <random>

#include "myq/error.hpp"
#include "myq/parallel.hpp"
#include "myq/quantizer.hpp"
#include "myq/sensitivity.hpp"

namespace myq::sens {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("distance: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Rows are all leading axes flattened; columns the last axis.
std::pair<std::size_t, std::size_t> as_matrix(const Tensor& x) {
  const std::size_t cols = x.shape().back();
  return {x.numel() / cols, cols};
}

}  // namespace

double spectral_norm(const Tensor& x, int max_iters, double rel_tol) {
  const auto [rows, cols] = as_matrix(x);
  std::vector<double> v(cols), u(rows);
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  for (auto& e : v) e = dist(rng);
  double sigma = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    double vn = 0.0;
    for (double e : v) vn += e * e;
    vn = std::sqrt(vn);
    if (vn == 0.0) return 0.0;
    for (auto& e : v) e /= vn;
    // u = A v
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += x[r * cols + c] * v[c];
      u[r] = acc;
    }
    double un = 0.0;
    for (double e : u) un += e * e;
    const double next = std::sqrt(un);
    // v = A^T u
    for (std::size_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < rows; ++r) acc += x[r * cols + c] * u[r];
      v[c] = acc;
    }
    const bool converged = it > 0 && std::abs(next - sigma) <= rel_tol * std::max(next, 1e-300);
    sigma = next;
    if (converged) break;
  }
  return sigma;
}

double kl_histogram(const Tensor& reference, const Tensor& quantized, std::size_t bins, double eps) {
  require_same_shape(reference, quantized);
  double lo = reference[0], hi = reference[0];
  for (const Tensor* t : {&reference, &quantized})
    for (double v : t->data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(hi > lo)) return 0.0;
  auto histogram = [&](const Tensor& t) {
    std::vector<double> h(bins, 0.0);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (double v : t.data()) {
      auto b = static_cast<std::size_t>((v - lo) / width);
      h[std::min(b, bins - 1)] += 1.0;
    }
    double total = 0.0;
    for (auto& c : h) total += (c += eps);
    for (auto& c : h) c /= total;
    return h;
  };
  const auto p = histogram(reference);
  const auto q = histogram(quantized);
  double kl = 0.0;
  for (std::size_t i = 0; i < bins; ++i) kl += p[i] * std::log(p[i] / q[i]);
  return kl;
}

double distance(DistanceMetric metric, const Tensor& quantized, const Tensor& reference) {
  require_same_shape(quantized, reference);
  const std::size_t n = reference.numel();
  switch (metric) {
    case DistanceMetric::l1: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::abs(quantized[i] - reference[i]);
      return s;
    }
    case DistanceMetric::l2: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += (quantized[i] - reference[i]) * (quantized[i] - reference[i]);
      return std::sqrt(s);
    }
    case DistanceMetric::frobenius: {
      const auto [rows, cols] = as_matrix(reference);
      double s = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        double row = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          const double d = quantized[r * cols + c] - reference[r * cols + c];
          row += d * d;
        }
        s += row;
      }
      return std::sqrt(s);
    }
    case DistanceMetric::sn: {
      std::vector<double> d(n);
      for (std::size_t i = 0; i < n; ++i) d[i] = quantized[i] - reference[i];
      return spectral_norm(Tensor(reference.shape(), std::move(d)));
    }
    case DistanceMetric::kl:
      return kl_histogram(reference, quantized);
  }
  return 0.0;
}

SensitivityRank rank_by_distance(const ModelGraph& model, std::span<const Tensor> calib_set, int probe_bits,
                                 DistanceMetric metric, RankOrder order) {
  if (probe_bits < 2 || probe_bits > 16)
    throw ConfigError("probe bits must be in [2, 16], got " + std::to_string(probe_bits));
  if (calib_set.empty()) throw UsageError("rank_by_distance: calibration set is empty");
  const std::size_t L = model.num_layers();
  std::vector<std::vector<Tensor>> outs(calib_set.size()), ins(calib_set.size());
  parallel_for(calib_set.size(), [&](std::size_t i) {
    auto r = forward_with_tape(model, calib_set[i]);
    outs[i] = std::move(r.layer_outputs);
    ins[i] = std::move(r.layer_inputs);
  });
  std::vector<double> values(L, 0.0);
  parallel_for(L, [&](std::size_t l) {
    const auto& layer = model.layers[l];
    const Tensor w = quant::dequantized_weight(layer, probe_bits);
    const auto b = quant::dequantized_bias(layer, probe_bits);
    double acc = 0.0;
    for (std::size_t i = 0; i < calib_set.size(); ++i) {
      const Tensor probe = linear(ins[i][l], w, b ? &*b : nullptr);
      acc += distance(metric, probe, outs[i][l]);
    }
    values[l] = acc / static_cast<double>(calib_set.size());
  });
  return rank_values(values, to_string(metric), order);
}

}  // namespace myq::sens
