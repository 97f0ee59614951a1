// SPDX-License-Identifier: Apache-2.0
#include "myq/quantizer.hpp"

#include <algorithm>
#include <cmath>

#include "myq/error.hpp"
#include "myq/rounding.hpp"

namespace myq::quant {

namespace {

void check_bits(int bits) {
  if (bits < 1 || bits > kFloatBits)
    throw ConfigError("bit depth must be in [1, 32], got " + std::to_string(bits));
}

std::int32_t clamp_code(double rounded, std::int64_t lo, std::int64_t hi) {
  // Compare in double so that huge values do not overflow before clamping.
  if (!(rounded >= static_cast<double>(lo))) return static_cast<std::int32_t>(lo);
  if (rounded > static_cast<double>(hi)) return static_cast<std::int32_t>(hi);
  return static_cast<std::int32_t>(rounded);
}

}  // namespace

std::int64_t code_min(int bits) {
  check_bits(bits);
  return -(std::int64_t{1} << (bits - 1));
}

std::int64_t code_max(int bits) {
  check_bits(bits);
  return (std::int64_t{1} << (bits - 1)) - 1;
}

std::string to_string(ScaleDenominator d) {
  return d == ScaleDenominator::pow2_bm1 ? "pow2_bm1" : "pow2_b_minus_1";
}

ScaleDenominator scale_denominator_from_string(const std::string& s) {
  if (s == "pow2_bm1") return ScaleDenominator::pow2_bm1;
  if (s == "pow2_b_minus_1") return ScaleDenominator::pow2_b_minus_1;
  throw ConfigError("unknown scale denominator '" + s + "'");
}

void validate(const AffineParams& p) {
  check_bits(p.bits);
  if (!(p.scale > 0.0) || !std::isfinite(p.scale))
    throw ConfigError("affine scale must be positive and finite");
}

void validate(const TwoRangeParams& p) {
  check_bits(p.bits);
  if (!(p.scale_neg > 0.0) || !(p.scale_pos > 0.0) || !std::isfinite(p.scale_neg) ||
      !std::isfinite(p.scale_pos))
    throw ConfigError("two-range scales must be positive and finite");
}

std::int32_t quantize_value(double x, const AffineParams& p) {
  const double r = round_half_away(x / p.scale) + static_cast<double>(p.zero_point);
  return clamp_code(r, code_min(p.bits), code_max(p.bits));
}

double dequantize_value(std::int32_t q, const AffineParams& p) {
  return static_cast<double>(static_cast<std::int64_t>(q) - p.zero_point) * p.scale;
}

IntTensor quantize(const Tensor& x, const AffineParams& p) {
  validate(p);
  IntTensor out{x.shape(), std::vector<std::int32_t>(x.numel())};
  for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = quantize_value(x[i], p);
  return out;
}

Tensor dequantize(const IntTensor& q, const AffineParams& p, DType dtype) {
  std::vector<double> v(q.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = dequantize_value(q.data[i], p);
  return Tensor(q.shape, std::move(v), dtype);
}

AffineParams activation_params_minmax(double min, double max, int bits, ScaleDenominator denom) {
  check_bits(bits);
  if (!(max > min))
    throw DegenerateRangeError("degenerate activation range [" + std::to_string(min) + ", " +
                               std::to_string(max) + "]");
  const double half = std::ldexp(1.0, bits - 1);
  const double d = denom == ScaleDenominator::pow2_bm1 ? half : std::ldexp(1.0, bits) - 1.0;
  AffineParams p;
  p.bits = bits;
  p.scale = (max - min) / d;
  p.zero_point = static_cast<std::int64_t>(-half) - round_half_away_to_int(min / p.scale);
  return p;
}

AffineParams weight_params_symmetric(const Tensor& w, int bits) {
  check_bits(bits);
  const double m = max_abs(w);
  AffineParams p;
  p.bits = bits;
  p.zero_point = 0;
  p.scale = m > 0.0 ? m / std::ldexp(1.0, bits - 1) : 1.0;
  return p;
}

std::int32_t two_range_quantize_value(double x, const TwoRangeParams& p) {
  if (x < 0.0) return clamp_code(round_half_away(x / p.scale_neg), code_min(p.bits), 0);
  return clamp_code(round_half_away(x / p.scale_pos), 0, code_max(p.bits));
}

double two_range_dequantize_value(std::int32_t q, const TwoRangeParams& p) {
  return q < 0 ? q * p.scale_neg : q * p.scale_pos;
}

TwoRangeCodes two_range_quantize(const Tensor& x, const TwoRangeParams& p) {
  validate(p);
  TwoRangeCodes out;
  out.codes = {x.shape(), std::vector<std::int32_t>(x.numel())};
  out.negative.resize(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    out.codes.data[i] = two_range_quantize_value(x[i], p);
    out.negative[i] = x[i] < 0.0;
  }
  return out;
}

Tensor two_range_dequantize(const IntTensor& codes, const TwoRangeParams& p, DType dtype) {
  std::vector<double> v(codes.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = two_range_dequantize_value(codes.data[i], p);
  return Tensor(codes.shape, std::move(v), dtype);
}

Tensor fake_quantize(const Tensor& x, const ActParams& p) {
  return std::visit(
      [&](const auto& params) -> Tensor {
        using T = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<T, FloatPassthrough>) {
          return x;
        } else if constexpr (std::is_same_v<T, AffineParams>) {
          validate(params);
          std::vector<double> v(x.numel());
          for (std::size_t i = 0; i < v.size(); ++i) v[i] = dequantize_value(quantize_value(x[i], params), params);
          return Tensor(x.shape(), std::move(v), x.dtype());
        } else {
          validate(params);
          std::vector<double> v(x.numel());
          for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = two_range_dequantize_value(two_range_quantize_value(x[i], params), params);
          return Tensor(x.shape(), std::move(v), x.dtype());
        }
      },
      p);
}

LayerWeightCodes quantize_layer_weights(const LayerSpec& layer, int bits) {
  check_bits(bits);
  LayerWeightCodes out;
  out.bits = bits;
  const Tensor w = layer.weight_matrix();
  out.weight_params = weight_params_symmetric(w, bits);
  out.weight = quantize(w, out.weight_params);
  if (layer.bias) {
    out.bias_params = weight_params_symmetric(*layer.bias, bits);
    out.bias = quantize(*layer.bias, out.bias_params);
  }
  return out;
}

Tensor dequantized_weight(const LayerSpec& layer, int bits) {
  if (bits == kFloatBits) return layer.weight_matrix();
  const auto c = quantize_layer_weights(layer, bits);
  return dequantize(c.weight, c.weight_params, layer.weight.dtype());
}

std::optional<Tensor> dequantized_bias(const LayerSpec& layer, int bits) {
  if (!layer.bias) return std::nullopt;
  if (bits == kFloatBits) return *layer.bias;
  const auto p = weight_params_symmetric(*layer.bias, bits);
  return dequantize(quantize(*layer.bias, p), p, layer.bias->dtype());
}

}  // namespace myq::quant
