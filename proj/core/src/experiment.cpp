// SPDX-License-Identifier: Apache-2.0
#include "myq/experiment.hpp"

#include "myq/error.hpp"

namespace myq {

MetricChoice metric_from_string(const std::string& s) {
  using sens::DistanceMetric;
  using sens::ReductionMetric;
  MetricChoice m;
  for (auto r : {ReductionMetric::avg, ReductionMetric::median, ReductionMetric::max, ReductionMetric::max_abs,
                 ReductionMetric::std})
    if (sens::to_string(r) == s) {
      m.reduction = r;
      return m;
    }
  for (auto d : {DistanceMetric::l1, DistanceMetric::l2, DistanceMetric::sn, DistanceMetric::frobenius,
                 DistanceMetric::kl})
    if (sens::to_string(d) == s) {
      m.is_distance = true;
      m.distance = d;
      return m;
    }
  throw ConfigError("unknown sensitivity metric '" + s + "'");
}

std::string to_string(const MetricChoice& m) {
  return m.is_distance ? sens::to_string(m.distance) : sens::to_string(m.reduction);
}

std::vector<std::size_t> layer_sizes(const ModelGraph& model) { return param_count(model); }

double uniform_size_mb(const ModelGraph& model, int bits) {
  const auto sizes = layer_sizes(model);
  const std::vector<int> b(sizes.size(), bits);
  return sens::compute_model_size(b, sizes);
}

sens::SensitivityRank compute_rank(const ModelGraph& model, std::span<const Tensor> calib_set,
                                   std::span<const sens::LayerStats> stats, const PipelineConfig& cfg) {
  if (cfg.metric.is_distance)
    return sens::rank_by_distance(model, calib_set, cfg.probe_bits, cfg.metric.distance, cfg.order);
  return sens::rank_by_reduction(stats, cfg.metric.reduction, cfg.order);
}

sens::BitPlan make_plan(const ModelGraph& model, const sens::SensitivityRank& rank, const PipelineConfig& cfg) {
  const auto sizes = layer_sizes(model);
  sens::SensitivityRank r = rank;
  if (!cfg.transform_bits) r.order = sens::apply_transform(r.order, cfg.transform, cfg.seed);
  sens::BitPlan plan = sens::allocate_uniform_constrained(r, sizes, cfg.budget_mb);
  if (cfg.transform_bits && cfg.transform != sens::PlanTransform::none) {
    plan.bits = sens::apply_transform(plan.bits, cfg.transform, cfg.seed);
    plan.size_mb = sens::compute_model_size(plan.bits, sizes);
    plan.last_decremented = -1;
  }
  return plan;
}

PipelineResult run_pipeline(const ModelGraph& model, std::span<const Tensor> calib_set, const PipelineConfig& cfg) {
  if (calib_set.empty()) throw UsageError("calibration set is empty");
  PipelineResult r;
  r.stats = sens::observe(model, calib_set, {sens::kDefaultMedianCap, cfg.seed});
  r.rank = compute_rank(model, calib_set, r.stats, cfg);
  r.plan = make_plan(model, r.rank, cfg);
  r.calib = calib::calibrate(model, calib_set, r.stats, r.plan, cfg.calib);
  r.qmodel = quant::quantize_model(model, r.plan, r.calib.params());
  return r;
}

DomainSpec eval_domain(const DomainSpec& d, std::size_t count) {
  DomainSpec e = d;
  e.seed = d.seed ^ 0x9e3779b97f4a7c15ULL;
  e.count = count;
  return e;
}

AbResult ab_experiment(const ModelGraph& model, const DomainSpec& a, const DomainSpec& b, double budget_mb,
                       const AbConfig& cfg) {
  PipelineConfig pc = cfg.pipeline;
  pc.budget_mb = budget_mb;
  const std::array<DomainSpec, 2> domains{a, b};
  std::array<std::vector<Tensor>, 2> eval_sets{make_domain(eval_domain(a, cfg.eval_count)),
                                               make_domain(eval_domain(b, cfg.eval_count))};
  AbResult r;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto calib_set = make_domain(domains[c]);
    const auto p = run_pipeline(model, calib_set, pc);
    r.plans[c] = p.plan;
    for (std::size_t e = 0; e < 2; ++e) r.cell[c][e] = evaluate(model, p.qmodel, eval_sets[e]);
  }
  return r;
}

}  // namespace myq
