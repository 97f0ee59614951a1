// SPDX-License-Identifier: Apache-2.0
#include "myq/calibration.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "myq/error.hpp"
#include "myq/parallel.hpp"
#include "myq/quantized_model.hpp"
#include "myq/rounding.hpp"

namespace myq::calib {

using quant::ActParams;
using quant::AffineParams;
using quant::TwoRangeParams;

std::string to_string(Method m) {
  switch (m) {
    case Method::none: return "none";
    case Method::minmax: return "minmax";
    case Method::l1: return "l1";
    case Method::l2: return "l2";
    case Method::linw_l2: return "linw_l2";
    case Method::sqw_l2: return "sqw_l2";
    case Method::hess: return "hess";
    case Method::cosine: return "cosine";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (auto m : {Method::none, Method::minmax, Method::l1, Method::l2, Method::linw_l2, Method::sqw_l2,
                 Method::hess, Method::cosine})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown calibration method '" + s + "'");
}

bool is_search_method(Method m) { return m != Method::none && m != Method::minmax; }

void CalibConfig::validate() const {
  if (candidates < 2) throw ConfigError("calibration needs at least 2 candidates");
  if (rounds < 1) throw ConfigError("calibration needs at least 1 round");
  if (!(grid_lo > 0.0) || !(grid_hi > grid_lo)) throw ConfigError("grid must satisfy 0 < lo < hi");
  if (act_bits < 1 || act_bits > quant::kFloatBits) throw ConfigError("activation bits must be in [1, 32]");
}

std::vector<ActParams> CalibResult::params() const {
  std::vector<ActParams> p;
  p.reserve(layers.size());
  for (const auto& l : layers) p.push_back(l.params);
  return p;
}

CalibResult calibrate_minmax(std::span<const sens::LayerStats> stats, int bits, quant::ScaleDenominator denom) {
  const auto t0 = std::chrono::steady_clock::now();
  CalibResult r;
  r.method = Method::minmax;
  for (const auto& s : stats) {
    LayerCalib lc;
    try {
      lc.params = quant::activation_params_minmax(s.input_min, s.input_max, bits, denom);
    } catch (const DegenerateRangeError& e) {
      throw DegenerateRangeError("layer " + std::to_string(s.layer) + ": " + e.what(), s.layer);
    }
    r.layers.push_back(std::move(lc));
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<GridPoint> candidate_grid(double base_scale, const CalibConfig& cfg) {
  cfg.validate();
  std::vector<GridPoint> grid;
  bool has_one = false;
  const int t = cfg.candidates;
  for (int i = 0; i < t; ++i) {
    double m = cfg.grid_lo + (cfg.grid_hi - cfg.grid_lo) * static_cast<double>(i) / static_cast<double>(t - 1);
    if (std::abs(m - 1.0) < 1e-9) {
      m = 1.0;
      has_one = true;
    }
    grid.push_back({m, m * base_scale});
  }
  if (!has_one) grid.push_back({1.0, base_scale});
  return grid;
}

std::vector<Tensor> pseudo_label_grads(const ModelGraph& model, const Tensor& x) {
  auto fwd = forward_with_tape(model, x);
  const auto labels = argmax_rows(fwd.logits_value());
  const NodeId loss = fwd.tape.cross_entropy(fwd.logits, labels);
  auto grads = fwd.tape.backward(loss, Tensor({1}, {1.0}));
  std::vector<Tensor> out;
  out.reserve(model.num_layers());
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    auto it = grads.layers.find(static_cast<int>(l));
    if (it != grads.layers.end())
      out.push_back(std::move(it->second));
    else
      out.push_back(Tensor::zeros(fwd.layer_outputs[l].shape(), DType::f64));
  }
  return out;
}

CalibrationData collect_calibration_data(const ModelGraph& model, std::span<const Tensor> calib_set,
                                         bool with_grads) {
  if (calib_set.empty()) throw UsageError("calibration set is empty");
  CalibrationData d;
  const std::size_t n = calib_set.size();
  d.inputs.resize(n);
  d.outputs.resize(n);
  if (with_grads) d.grads.resize(n);
  parallel_for(n, [&](std::size_t i) {
    auto r = forward_with_tape(model, calib_set[i]);
    d.inputs[i] = std::move(r.layer_inputs);
    d.outputs[i] = std::move(r.layer_outputs);
    if (with_grads) d.grads[i] = pseudo_label_grads(model, calib_set[i]);
  });
  return d;
}

namespace {

double sample_objective(Method m, const Tensor& q, const Tensor& o, const Tensor* g) {
  switch (m) {
    case Method::l1: return objective_l1(q, o);
    case Method::l2: return objective_l2(q, o);
    case Method::linw_l2: return objective_linw_l2(q, o);
    case Method::sqw_l2: return objective_sqw_l2(q, o);
    case Method::hess:
      if (!g) throw CalibrationError("hessian objective requires cached gradients");
      return objective_hessian(q, o, *g);
    case Method::cosine: return objective_cosine(q, o);
    default: throw CalibrationError("method '" + to_string(m) + "' has no search objective");
  }
}

double mean_objective(const quant::QuantLayerExec& exec, const CalibrationData& data, std::size_t layer,
                      const ActParams& act, Method method) {
  double acc = 0.0;
  for (std::size_t i = 0; i < data.samples(); ++i) {
    const Tensor q = exec.run(act, data.inputs[i][layer]);
    const Tensor* g = data.grads.empty() ? nullptr : &data.grads[i][layer];
    acc += sample_objective(method, q, data.outputs[i][layer], g);
  }
  return acc / static_cast<double>(data.samples());
}

// Lower objective wins; ties go to the multiplier nearest 1.0, then the
// smaller multiplier.
bool better(double obj, double mult, double best_obj, double best_mult) {
  if (obj != best_obj) return obj < best_obj;
  const double da = std::abs(mult - 1.0), db = std::abs(best_mult - 1.0);
  if (da != db) return da < db;
  return mult < best_mult;
}

template <class MakeParams>
std::pair<GridPoint, double> search_grid(const std::vector<GridPoint>& grid, MakeParams make,
                                         const quant::QuantLayerExec& exec, const CalibrationData& data,
                                         std::size_t layer, Method method) {
  GridPoint best{0.0, 0.0};
  double best_obj = std::numeric_limits<double>::infinity();
  bool found = false;
  for (const auto& gp : grid) {
    const double obj = mean_objective(exec, data, layer, make(gp.scale), method);
    if (!std::isfinite(obj)) continue;
    if (!found || better(obj, gp.multiplier, best_obj, best.multiplier)) {
      best = gp;
      best_obj = obj;
      found = true;
    }
  }
  if (!found) throw CalibrationError("layer " + std::to_string(layer) + ": every candidate scale gave a non-finite objective");
  return {best, best_obj};
}

}  // namespace

double layer_objective(const ModelGraph& model, const CalibrationData& data, std::size_t layer, int weight_bits,
                       const ActParams& act, Method method) {
  const quant::QuantLayerExec exec(model.layers.at(layer), weight_bits);
  return mean_objective(exec, data, layer, act, method);
}

CalibResult calibrate_search(const ModelGraph& model, const CalibrationData& data,
                             std::span<const sens::LayerStats> stats, const sens::BitPlan& plan,
                             const CalibConfig& cfg) {
  cfg.validate();
  if (!is_search_method(cfg.method))
    throw ConfigError("calibrate_search needs a search method, got '" + to_string(cfg.method) + "'");
  const std::size_t L = model.num_layers();
  if (stats.size() != L || plan.bits.size() != L) throw DimensionError("stats and plan must cover every layer");
  if (cfg.method == Method::hess && data.grads.empty())
    throw CalibrationError("hessian calibration requires gradients in the calibration data");

  const auto t0 = std::chrono::steady_clock::now();
  CalibResult r;
  r.method = cfg.method;
  r.layers.resize(L);
  const int b = cfg.act_bits;
  parallel_for(L, [&](std::size_t l) {
    LayerCalib& lc = r.layers[l];
    const int wbits = model.layers[l].quantizable ? plan.bits[l] : quant::kFloatBits;
    if (wbits == quant::kFloatBits || b == quant::kFloatBits) {
      lc.params = quant::FloatPassthrough{};
      return;
    }
    const quant::QuantLayerExec exec(model.layers[l], wbits);
    const auto& s = stats[l];

    if (quant::input_is_post_gelu(model, l)) {
      if (!(s.input_max_abs > 0.0))
        throw DegenerateRangeError("layer " + std::to_string(l) + ": all-zero input", static_cast<int>(l));
      const double base = s.input_max_abs / std::ldexp(1.0, b - 1);
      TwoRangeParams cur{base, base, b};
      lc.base_objective = mean_objective(exec, data, l, cur, cfg.method);
      const auto grid = candidate_grid(base, cfg);
      double best = lc.base_objective;
      for (int round = 0; round < cfg.rounds; ++round) {
        auto [neg, neg_obj] = search_grid(
            grid, [&](double sc) { return TwoRangeParams{sc, cur.scale_pos, b}; }, exec, data, l, cfg.method);
        cur.scale_neg = neg.scale;
        best = neg_obj;
        lc.round_objectives.push_back(best);
        auto [pos, pos_obj] = search_grid(
            grid, [&](double sc) { return TwoRangeParams{cur.scale_neg, sc, b}; }, exec, data, l, cfg.method);
        cur.scale_pos = pos.scale;
        best = pos_obj;
        lc.round_objectives.push_back(best);
      }
      lc.params = cur;
      lc.objective = best;
    } else {
      AffineParams base;
      try {
        base = quant::activation_params_minmax(s.input_min, s.input_max, b, cfg.denominator);
      } catch (const DegenerateRangeError& e) {
        throw DegenerateRangeError("layer " + std::to_string(l) + ": " + e.what(), static_cast<int>(l));
      }
      auto make = [&](double sc) {
        return AffineParams{sc, static_cast<std::int64_t>(-std::ldexp(1.0, b - 1)) - round_half_away_to_int(s.input_min / sc),
                            b};
      };
      lc.base_objective = mean_objective(exec, data, l, base, cfg.method);
      const auto grid = candidate_grid(base.scale, cfg);
      auto [gp, obj] = search_grid(grid, make, exec, data, l, cfg.method);
      lc.params = gp.multiplier == 1.0 ? base : make(gp.scale);
      lc.objective = obj;
      lc.round_objectives.push_back(obj);
    }
  });
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

CalibResult calibrate(const ModelGraph& model, std::span<const Tensor> calib_set,
                      std::span<const sens::LayerStats> stats, const sens::BitPlan& plan, const CalibConfig& cfg) {
  cfg.validate();
  switch (cfg.method) {
    case Method::none: {
      CalibResult r;
      r.method = Method::none;
      r.layers.resize(model.num_layers());
      for (auto& l : r.layers) l.params = quant::FloatPassthrough{};
      return r;
    }
    case Method::minmax: {
      if (cfg.act_bits == quant::kFloatBits) {
        CalibConfig none = cfg;
        none.method = Method::none;
        auto r = calibrate(model, calib_set, stats, plan, none);
        r.method = Method::minmax;
        return r;
      }
      return calibrate_minmax(stats, cfg.act_bits, cfg.denominator);
    }
    default: {
      const auto data = collect_calibration_data(model, calib_set, cfg.method == Method::hess);
      return calibrate_search(model, data, stats, plan, cfg);
    }
  }
}

}  // namespace myq::calib
