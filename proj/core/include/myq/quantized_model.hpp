// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "myq/model.hpp"
#include "myq/quantizer.hpp"
#include "myq/sensitivity.hpp"

namespace myq::quant {

/// One layer with its weights on the integer grid.
///
/// A layer at 32 bits stays in floating point (weights and activations).
/// Otherwise the output is computed from integer accumulators:
///   affine input    : y = S_x S_w (sum (q_x - Z_x) q_w + bias_acc)
///   two-range input : y = S_w (S_R1 acc_neg + S_R2 acc_pos + S_R2 bias_acc)
///   float input     : y = X W_hat^T + b_hat
class QuantLayerExec {
 public:
  QuantLayerExec(const LayerSpec& layer, int bits);
  /// Uses existing codes (bits taken from codes.bits).
  QuantLayerExec(const LayerSpec& layer, LayerWeightCodes codes);

  int bits() const noexcept { return bits_; }
  bool is_float() const noexcept { return bits_ == kFloatBits; }
  const LayerWeightCodes& codes() const noexcept { return codes_; }
  const Tensor& dequantized_weight() const noexcept { return w_hat_; }
  const std::optional<Tensor>& dequantized_bias() const noexcept { return b_hat_; }

  /// Bias in accumulator units for an input scale (empty without bias).
  std::vector<std::int64_t> bias_accumulator(double input_scale) const;

  /// Output rows [n x out] for input rows X [n x fan_in].
  Tensor run(const ActParams& act, const Tensor& x) const;

 private:
  const LayerSpec* layer_;
  int bits_;
  LayerWeightCodes codes_;
  std::vector<double> w_codes_;  // integer codes held exactly in doubles
  Tensor w_hat_;
  std::optional<Tensor> b_hat_;
};

struct QuantizedLayer {
  int index = 0;
  int bits = kFloatBits;
  LayerWeightCodes codes;          // empty codes when bits == 32
  ActParams act;
  std::vector<std::int64_t> bias_acc;  // derived at assembly, not serialized
};

struct QuantizedModel {
  /// Structure, layernorms and FP weights of 32-bit layers. Quantized layers
  /// carry their dequantized weights here.
  ModelGraph graph;
  std::string source_fingerprint;
  sens::BitPlan plan;
  std::vector<QuantizedLayer> layers;

  /// Exact weight payload in bits: sum_l b_l * |W_l|.
  std::uint64_t weight_payload_bits() const;
};

/// Assembles a quantized model. act_params must have one entry per layer;
/// layers at 32 bits ignore theirs and stay in floating point.
QuantizedModel quantize_model(const ModelGraph& model, const sens::BitPlan& plan,
                              const std::vector<ActParams>& act_params);

/// Recomputes derived fields (dequantized weights, bias accumulators).
void finalize_quantized_model(QuantizedModel& qm);

/// Simulated-quantized inference: matmuls on the integer grid, GELU,
/// softmax and layernorm in floating point on dequantized values.
ForwardResult run_quantized(const QuantizedModel& qm, const Tensor& x);

/// True when layer l consumes a GELU output (two-range candidates).
bool input_is_post_gelu(const ModelGraph& model, std::size_t layer);

}  // namespace myq::quant
