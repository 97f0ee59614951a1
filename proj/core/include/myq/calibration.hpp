// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "myq/model.hpp"
#include "myq/quantizer.hpp"
#include "myq/sensitivity.hpp"

namespace myq::calib {

enum class Method { none, minmax, l1, l2, linw_l2, sqw_l2, hess, cosine };
std::string to_string(Method m);
Method method_from_string(const std::string& s);
bool is_search_method(Method m);

struct CalibConfig {
  Method method = Method::minmax;
  int candidates = 100;  // t
  int rounds = 3;        // alternating two-range rounds
  double grid_lo = 0.1;
  double grid_hi = 1.2;
  int act_bits = 8;
  quant::ScaleDenominator denominator = quant::ScaleDenominator::pow2_bm1;

  void validate() const;
};

struct LayerCalib {
  quant::ActParams params;
  double objective = 0.0;       // at the chosen parameters
  double base_objective = 0.0;  // at the min-max starting point
  std::vector<double> round_objectives;  // best-so-far after each half-round
};

struct CalibResult {
  Method method = Method::minmax;
  std::vector<LayerCalib> layers;
  double seconds = 0.0;

  std::vector<quant::ActParams> params() const;
};

/// Min-max affine parameters from each layer's observed input range. A constant input raises
/// DegenerateRangeError carrying the layer index.
CalibResult calibrate_minmax(std::span<const sens::LayerStats> stats, int bits,
                             quant::ScaleDenominator denom = quant::ScaleDenominator::pow2_bm1);

struct GridPoint {
  double multiplier;
  double scale;
};

/// t multipliers evenly spaced on [lo, hi] times the base scale; multiplier
/// 1.0 is always present (inserted when the spacing misses it).
std::vector<GridPoint> candidate_grid(double base_scale, const CalibConfig& cfg);

// Per-sample objectives between a quantized output and the FP output.
double objective_l1(const Tensor& q, const Tensor& o);
double objective_l2(const Tensor& q, const Tensor& o);
double objective_linw_l2(const Tensor& q, const Tensor& o);  // sum |o| d^2
double objective_sqw_l2(const Tensor& q, const Tensor& o);   // sum o^2 d^2
double objective_hessian(const Tensor& q, const Tensor& o, const Tensor& grad);  // sum g^2 d^2
double objective_cosine(const Tensor& q, const Tensor& o);   // 1 - cos(q, o)

/// FP per-layer inputs/outputs (and task-loss gradients for the Hessian
/// objective) of every calibration sample.
struct CalibrationData {
  std::vector<std::vector<Tensor>> inputs;   // [sample][layer]
  std::vector<std::vector<Tensor>> outputs;  // [sample][layer]
  std::vector<std::vector<Tensor>> grads;    // [sample][layer], empty unless requested
  std::size_t samples() const { return outputs.size(); }
};

CalibrationData collect_calibration_data(const ModelGraph& model, std::span<const Tensor> calib_set,
                                         bool with_grads);

/// dL/do_l for every layer, where L is the mean per-frame cross-entropy of
/// the FP logits against their own argmax.
std::vector<Tensor> pseudo_label_grads(const ModelGraph& model, const Tensor& x);

/// Mean objective of one layer over the calibration set for given
/// activation parameters (inputs are FP, per the parallel protocol).
double layer_objective(const ModelGraph& model, const CalibrationData& data, std::size_t layer, int weight_bits,
                       const quant::ActParams& act, Method method);

/// Scale search for every layer under `plan`. Layers consuming GELU outputs
/// use two-range parameters searched alternately for cfg.rounds rounds.
CalibResult calibrate_search(const ModelGraph& model, const CalibrationData& data,
                             std::span<const sens::LayerStats> stats, const sens::BitPlan& plan,
                             const CalibConfig& cfg);

/// Dispatches on cfg.method (none keeps activations in floating point).
CalibResult calibrate(const ModelGraph& model, std::span<const Tensor> calib_set,
                      std::span<const sens::LayerStats> stats, const sens::BitPlan& plan, const CalibConfig& cfg);

}  // namespace myq::calib
