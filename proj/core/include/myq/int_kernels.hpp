// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "myq/quantizer.hpp"
#include "myq/rounding.hpp"

namespace myq::quant {

/// Real multiplier M approximated as m0 * 2^-shift with 2^30 <= m0 < 2^31.
/// shift may be negative (left shift) when M >= 1.
struct RequantMultiplier {
  std::int64_t m0 = 0;
  int shift = 0;
};

/// Parameter preparation; the only place where the requantization path
/// touches floating point.
RequantMultiplier make_requant_multiplier(double m);

/// Bias in accumulator units: round(bias / (S_x * S_w)).
std::vector<std::int64_t> bias_to_accumulator(const Tensor& bias, double input_scale, double weight_scale);

/// Integer-only Y = requant((X_q - Z_x) W_q^T + bias_acc) + Z_out, clamped to
/// [lo, hi]. X_q is [rows x inner], W_q is [out x inner] (weight zero point 0).
/// `Acc` must hold a 64x31-bit product; the default is a 128-bit integer. Tests
/// instantiate it with a counting shim to prove the path is float-free.
template <class Acc = int128>
std::vector<std::int32_t> int_linear_requant_kernel(std::span<const std::int32_t> x,
                                                    std::span<const std::int32_t> w,
                                                    std::span<const std::int64_t> bias_acc, std::size_t rows,
                                                    std::size_t inner, std::size_t out, std::int64_t zero_x,
                                                    RequantMultiplier mult, std::int64_t zero_out,
                                                    std::int64_t lo, std::int64_t hi) {
  std::vector<std::int32_t> y(rows * out);
  const Acc zx(zero_x);
  const Acc m0(mult.m0);
  const Acc lo_a(lo), hi_a(hi), zo(zero_out);
  const Acc zero(0), one(1);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t o = 0; o < out; ++o) {
      Acc acc = bias_acc.empty() ? zero : Acc(bias_acc[o]);
      for (std::size_t p = 0; p < inner; ++p)
        acc = acc + (Acc(x[i * inner + p]) - zx) * Acc(w[o * inner + p]);
      Acc prod = acc * m0;
      Acc r;
      if (mult.shift <= 0) {
        r = prod << -mult.shift;
      } else {
        const Acc half = one << (mult.shift - 1);
        r = prod < zero ? zero - ((zero - prod + half) >> mult.shift) : (prod + half) >> mult.shift;
      }
      r = r + zo;
      if (r < lo_a) r = lo_a;
      if (r > hi_a) r = hi_a;
      y[i * out + o] = static_cast<std::int32_t>(static_cast<std::int64_t>(r));
    }
  }
  return y;
}

/// Quantized matmul with dyadic requantization to the output grid.
/// x_q [rows x inner] under p_x, w_q [out x inner] under p_w (Z_w = 0),
/// optional bias codes in accumulator units, result codes under p_out.
IntTensor int_matmul_requant(const IntTensor& x_q, const IntTensor& w_q, const AffineParams& p_x,
                             const AffineParams& p_w, const AffineParams& p_out,
                             std::span<const std::int64_t> bias_acc = {});

/// Float-simulated reference: dequantize, multiply in f64, requantize.
IntTensor simulated_matmul_requant(const IntTensor& x_q, const IntTensor& w_q, const AffineParams& p_x,
                                   const AffineParams& p_w, const AffineParams& p_out,
                                   std::span<const std::int64_t> bias_acc = {});

/// Raw integer accumulators split by the sign of the input code:
/// acc_neg sums terms with negative codes, acc_pos the rest (after zero-point
/// removal). Affine inputs land entirely in acc_pos when split is false.
struct SplitAccumulators {
  std::vector<std::int64_t> neg;
  std::vector<std::int64_t> pos;
};

SplitAccumulators int_linear_accumulate(std::span<const std::int32_t> x, std::span<const std::int32_t> w,
                                        std::size_t rows, std::size_t inner, std::size_t out,
                                        std::int64_t zero_x, bool split_by_sign);

}  // namespace myq::quant
