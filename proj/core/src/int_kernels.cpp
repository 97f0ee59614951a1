// SPDX-License-Identifier: Apache-2.0
#include "myq/int_kernels.hpp"

#include <cmath>

#include "myq/error.hpp"
#include "myq/rounding.hpp"

namespace myq::quant {

RequantMultiplier make_requant_multiplier(double m) {
  if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("requantization multiplier must be positive");
  int exp = 0;
  const double frac = std::frexp(m, &exp);  // m = frac * 2^exp, frac in [0.5, 1)
  std::int64_t m0 = round_half_away_to_int(std::ldexp(frac, 31));
  int shift = 31 - exp;
  if (m0 == (std::int64_t{1} << 31)) {
    m0 >>= 1;
    --shift;
  }
  return {m0, shift};
}

std::vector<std::int64_t> bias_to_accumulator(const Tensor& bias, double input_scale, double weight_scale) {
  std::vector<std::int64_t> out(bias.numel());
  const double s = input_scale * weight_scale;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double r = round_half_away(bias[i] / s);
    if (!(std::abs(r) < 0x1p62)) throw AssemblyError("bias does not fit a 64-bit accumulator code");
    out[i] = static_cast<std::int64_t>(r);
  }
  return out;
}

namespace {

void check_matmul(const IntTensor& x_q, const IntTensor& w_q, std::span<const std::int64_t> bias_acc) {
  if (x_q.shape.size() != 2 || w_q.shape.size() != 2)
    throw DimensionError("int matmul: operands must be 2-D");
  if (x_q.shape[1] != w_q.shape[1])
    throw DimensionError("int matmul: inner dimensions differ: " + shape_str(x_q.shape) + " vs " +
                         shape_str(w_q.shape));
  if (!bias_acc.empty() && bias_acc.size() != w_q.shape[0])
    throw DimensionError("int matmul: bias length does not match output features");
}

}  // namespace

IntTensor int_matmul_requant(const IntTensor& x_q, const IntTensor& w_q, const AffineParams& p_x,
                             const AffineParams& p_w, const AffineParams& p_out,
                             std::span<const std::int64_t> bias_acc) {
  check_matmul(x_q, w_q, bias_acc);
  validate(p_x);
  validate(p_w);
  validate(p_out);
  if (p_w.zero_point != 0) throw ConfigError("int matmul: weight zero point must be 0");
  const auto mult = make_requant_multiplier(p_x.scale * p_w.scale / p_out.scale);
  const std::size_t rows = x_q.shape[0], inner = x_q.shape[1], out = w_q.shape[0];
  return {{rows, out},
          int_linear_requant_kernel(std::span(x_q.data), std::span(w_q.data), bias_acc, rows, inner, out,
                                    p_x.zero_point, mult, p_out.zero_point, code_min(p_out.bits),
                                    code_max(p_out.bits))};
}

IntTensor simulated_matmul_requant(const IntTensor& x_q, const IntTensor& w_q, const AffineParams& p_x,
                                   const AffineParams& p_w, const AffineParams& p_out,
                                   std::span<const std::int64_t> bias_acc) {
  check_matmul(x_q, w_q, bias_acc);
  const std::size_t rows = x_q.shape[0], inner = x_q.shape[1], out = w_q.shape[0];
  std::vector<double> v(rows * out);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bias_acc.empty() ? 0.0 : bias_acc[o] * p_x.scale * p_w.scale;
      for (std::size_t p = 0; p < inner; ++p)
        acc += dequantize_value(x_q.data[i * inner + p], p_x) * dequantize_value(w_q.data[o * inner + p], p_w);
      v[i * out + o] = acc;
    }
  return quantize(Tensor({rows, out}, std::move(v)), p_out);
}

SplitAccumulators int_linear_accumulate(std::span<const std::int32_t> x, std::span<const std::int32_t> w,
                                        std::size_t rows, std::size_t inner, std::size_t out,
                                        std::int64_t zero_x, bool split_by_sign) {
  SplitAccumulators acc{std::vector<std::int64_t>(rows * out, 0), std::vector<std::int64_t>(rows * out, 0)};
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t o = 0; o < out; ++o) {
      std::int64_t neg = 0, pos = 0;
      for (std::size_t p = 0; p < inner; ++p) {
        const std::int64_t xv = static_cast<std::int64_t>(x[i * inner + p]) - zero_x;
        const std::int64_t term = xv * w[o * inner + p];
        if (split_by_sign && xv < 0) neg += term;
        else pos += term;
      }
      acc.neg[i * out + o] = neg;
      acc.pos[i * out + o] = pos;
    }
  return acc;
}

}  // namespace myq::quant
