// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "myq/model.hpp"
#include "myq/tensor.hpp"

namespace myq::quant {

/// b-bit signed code range [-2^(b-1), 2^(b-1) - 1].
std::int64_t code_min(int bits);
std::int64_t code_max(int bits);

/// Bit depth that leaves a layer in floating point (the allocator starts here).
inline constexpr int kFloatBits = 32;

/// Denominator of the min-max activation scale.
///   pow2_bm1       : S = (max - min) / 2^(b-1)   (default)
///   pow2_b_minus_1 : S = (max - min) / (2^b - 1)
enum class ScaleDenominator { pow2_bm1, pow2_b_minus_1 };
std::string to_string(ScaleDenominator d);
ScaleDenominator scale_denominator_from_string(const std::string& s);

struct AffineParams {
  double scale = 1.0;
  std::int64_t zero_point = 0;
  int bits = 8;
  bool operator==(const AffineParams&) const = default;
};

/// Separate scales for the negative and non-negative halves (zero point 0).
struct TwoRangeParams {
  double scale_neg = 1.0;
  double scale_pos = 1.0;
  int bits = 8;
  bool operator==(const TwoRangeParams&) const = default;
};

/// Activation left in floating point.
struct FloatPassthrough {
  bool operator==(const FloatPassthrough&) const = default;
};

using ActParams = std::variant<FloatPassthrough, AffineParams, TwoRangeParams>;

void validate(const AffineParams& p);
void validate(const TwoRangeParams& p);

/// Integer codes of b-bit semantics held in 32-bit containers.
struct IntTensor {
  Shape shape;
  std::vector<std::int32_t> data;
  std::size_t numel() const noexcept { return data.size(); }
  bool operator==(const IntTensor&) const = default;
};

/// q = clamp(round(x / S) + Z), round half away from zero.
std::int32_t quantize_value(double x, const AffineParams& p);
double dequantize_value(std::int32_t q, const AffineParams& p);
IntTensor quantize(const Tensor& x, const AffineParams& p);
/// x_hat = (q - Z) * S
Tensor dequantize(const IntTensor& q, const AffineParams& p, DType dtype = DType::f64);

/// Min-max observer parameters:
///   S = (X^M - X^m) / 2^(b-1),  Z = -2^(b-1) - round(X^m / S)
AffineParams activation_params_minmax(double min, double max, int bits,
                                      ScaleDenominator denom = ScaleDenominator::pow2_bm1);

/// Symmetric weight parameters: S = max|W| / 2^(b-1), Z = 0. All-zero W
/// yields S = 1 (every code 0).
AffineParams weight_params_symmetric(const Tensor& w, int bits);

struct TwoRangeCodes {
  IntTensor codes;
  std::vector<std::uint8_t> negative;  // 1 where the input was < 0
};

TwoRangeCodes two_range_quantize(const Tensor& x, const TwoRangeParams& p);
std::int32_t two_range_quantize_value(double x, const TwoRangeParams& p);
double two_range_dequantize_value(std::int32_t q, const TwoRangeParams& p);
Tensor two_range_dequantize(const IntTensor& codes, const TwoRangeParams& p, DType dtype = DType::f64);

/// quantize followed by dequantize; FloatPassthrough returns x unchanged.
Tensor fake_quantize(const Tensor& x, const ActParams& p);

/// Weight (and bias) codes of one layer at a given bit depth. Bias uses its
/// own symmetric scale at the same bit depth as the weights.
struct LayerWeightCodes {
  int bits = kFloatBits;
  IntTensor weight;  // [out x fan_in]
  AffineParams weight_params;
  std::optional<IntTensor> bias;
  AffineParams bias_params;
};

LayerWeightCodes quantize_layer_weights(const LayerSpec& layer, int bits);
/// Dequantized [out x fan_in] weight matrix; the FP matrix when bits == 32.
Tensor dequantized_weight(const LayerSpec& layer, int bits);
std::optional<Tensor> dequantized_bias(const LayerSpec& layer, int bits);

}  // namespace myq::quant
