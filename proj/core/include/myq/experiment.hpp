// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "myq/calibration.hpp"
#include "myq/domain.hpp"
#include "myq/metrics.hpp"
#include "myq/quantized_model.hpp"
#include "myq/sensitivity.hpp"

namespace myq {

/// Sensitivity metric by name: avg, median, max, max_abs, std (activation
/// reductions) or l1, l2, sn, frob, kl (weight-probe distances).
struct MetricChoice {
  bool is_distance = false;
  sens::ReductionMetric reduction = sens::ReductionMetric::median;
  sens::DistanceMetric distance = sens::DistanceMetric::l2;
};
MetricChoice metric_from_string(const std::string& s);
std::string to_string(const MetricChoice& m);

struct PipelineConfig {
  double budget_mb = 0.0;
  MetricChoice metric;
  sens::RankOrder order = sens::RankOrder::asc;
  sens::PlanTransform transform = sens::PlanTransform::none;
  bool transform_bits = false;  // permute the final bit vector instead of the rank
  int probe_bits = 8;
  calib::CalibConfig calib;
  std::uint64_t seed = 0;
};

std::vector<std::size_t> layer_sizes(const ModelGraph& model);
/// Size in MB with every layer at `bits`.
double uniform_size_mb(const ModelGraph& model, int bits);

sens::SensitivityRank compute_rank(const ModelGraph& model, std::span<const Tensor> calib_set,
                                   std::span<const sens::LayerStats> stats, const PipelineConfig& cfg);

/// Allocate under cfg.budget_mb, applying cfg.transform to the rank or to
/// the resulting bit vector.
sens::BitPlan make_plan(const ModelGraph& model, const sens::SensitivityRank& rank, const PipelineConfig& cfg);

struct PipelineResult {
  std::vector<sens::LayerStats> stats;
  sens::SensitivityRank rank;
  sens::BitPlan plan;
  calib::CalibResult calib;
  quant::QuantizedModel qmodel;
};

/// Observe, rank, allocate, calibrate and assemble on `calib_set`.
PipelineResult run_pipeline(const ModelGraph& model, std::span<const Tensor> calib_set, const PipelineConfig& cfg);

struct AbConfig {
  PipelineConfig pipeline;
  std::size_t eval_count = 8;
};

/// Results indexed [calibration domain][evaluation domain], 0 = A, 1 = B.
struct AbResult {
  std::array<std::array<EvalResult, 2>, 2> cell;
  std::array<sens::BitPlan, 2> plans;

  bool operator==(const AbResult&) const = default;
};

/// Held-out evaluation samples of a domain (same distribution, derived seed).
DomainSpec eval_domain(const DomainSpec& d, std::size_t count);

/// Calibrates on A and on B, evaluates each on held-out A and B samples.
AbResult ab_experiment(const ModelGraph& model, const DomainSpec& a, const DomainSpec& b, double budget_mb,
                       const AbConfig& cfg);

}  // namespace myq
