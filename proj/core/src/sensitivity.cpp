// SPDX-License-Identifier: Apache-2.0
#include "myq/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "myq/error.hpp"
#include "myq/parallel.hpp"

namespace myq::sens {

LayerStats summarize_layer(int layer, std::span<const Tensor> outputs, std::span<const Tensor> inputs,
                           const ObserveOptions& opts) {
  if (outputs.empty()) throw UsageError("summarize_layer: no outputs to summarize");
  LayerStats s;
  s.layer = layer;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : outputs)
    for (double v : t.data()) {
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
      sum += v;
      ++n;
    }
  s.count = n;
  s.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& t : outputs)
    for (double v : t.data()) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(n));
  s.max_abs = std::max(std::abs(s.min), std::abs(s.max));

  // Median population: everything, or a deterministic reservoir sample.
  std::vector<double> pop;
  const std::size_t cap = std::max<std::size_t>(opts.median_cap, 1);
  pop.reserve(std::min(n, cap));
  std::mt19937_64 rng(opts.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(layer + 1)));
  std::size_t seen = 0;
  for (const auto& t : outputs)
    for (double v : t.data()) {
      if (pop.size() < cap) {
        pop.push_back(v);
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, seen);
        const std::size_t j = pick(rng);
        if (j < cap) pop[j] = v;
      }
      ++seen;
    }
  std::sort(pop.begin(), pop.end());
  const std::size_t m = pop.size();
  s.median = m % 2 ? pop[m / 2] : 0.5 * (pop[m / 2 - 1] + pop[m / 2]);
  s.median_population = m;

  if (!inputs.empty()) {
    s.input_min = std::numeric_limits<double>::infinity();
    s.input_max = -std::numeric_limits<double>::infinity();
    for (const auto& t : inputs)
      for (double v : t.data()) {
        s.input_min = std::min(s.input_min, v);
        s.input_max = std::max(s.input_max, v);
      }
    s.input_max_abs = std::max(std::abs(s.input_min), std::abs(s.input_max));
  }
  return s;
}

std::vector<LayerStats> observe(const ModelGraph& model, std::span<const Tensor> calib_set,
                                const ObserveOptions& opts) {
  if (calib_set.empty()) throw UsageError("observe: calibration set is empty");
  const std::size_t L = model.num_layers();
  std::vector<std::vector<Tensor>> outs(calib_set.size()), ins(calib_set.size());
  parallel_for(calib_set.size(), [&](std::size_t i) {
    auto r = forward_with_tape(model, calib_set[i]);
    outs[i] = std::move(r.layer_outputs);
    ins[i] = std::move(r.layer_inputs);
  });
  std::vector<LayerStats> stats(L);
  parallel_for(L, [&](std::size_t l) {
    std::vector<Tensor> o, x;
    o.reserve(calib_set.size());
    x.reserve(calib_set.size());
    for (std::size_t i = 0; i < calib_set.size(); ++i) {
      o.push_back(outs[i][l]);
      x.push_back(ins[i][l]);
    }
    stats[l] = summarize_layer(static_cast<int>(l), o, x, opts);
  });
  return stats;
}

std::string to_string(RankOrder o) { return o == RankOrder::asc ? "asc" : "desc"; }

RankOrder rank_order_from_string(const std::string& s) {
  if (s == "asc") return RankOrder::asc;
  if (s == "desc") return RankOrder::desc;
  throw ConfigError("rank order must be 'asc' or 'desc', got '" + s + "'");
}

SensitivityRank rank_values(std::span<const double> values, std::string metric, RankOrder order) {
  SensitivityRank r;
  r.metric = std::move(metric);
  r.values.assign(values.begin(), values.end());
  r.order.resize(values.size());
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(), [&](int a, int b) {
    const double va = std::abs(values[a]), vb = std::abs(values[b]);
    return order == RankOrder::asc ? va < vb : va > vb;
  });
  return r;
}

std::string to_string(ReductionMetric m) {
  switch (m) {
    case ReductionMetric::avg: return "avg";
    case ReductionMetric::median: return "median";
    case ReductionMetric::max: return "max";
    case ReductionMetric::max_abs: return "max_abs";
    case ReductionMetric::std: return "std";
  }
  return "?";
}

std::string to_string(DistanceMetric m) {
  switch (m) {
    case DistanceMetric::l1: return "l1";
    case DistanceMetric::l2: return "l2";
    case DistanceMetric::sn: return "sn";
    case DistanceMetric::frobenius: return "frob";
    case DistanceMetric::kl: return "kl";
  }
  return "?";
}

double reduction_value(const LayerStats& s, ReductionMetric m) {
  switch (m) {
    case ReductionMetric::avg: return s.mean;
    case ReductionMetric::median: return s.median;
    case ReductionMetric::max: return s.max;
    case ReductionMetric::max_abs: return s.max_abs;
    case ReductionMetric::std: return s.std;
  }
  return 0.0;
}

SensitivityRank rank_by_reduction(std::span<const LayerStats> stats, ReductionMetric metric, RankOrder order) {
  std::vector<double> v;
  v.reserve(stats.size());
  for (const auto& s : stats) v.push_back(reduction_value(s, metric));
  return rank_values(v, to_string(metric), order);
}

std::string to_string(PlanTransform t) {
  switch (t) {
    case PlanTransform::none: return "none";
    case PlanTransform::shuffle: return "shuffle";
    case PlanTransform::reverse: return "reverse";
  }
  return "?";
}

PlanTransform plan_transform_from_string(const std::string& s) {
  if (s == "none") return PlanTransform::none;
  if (s == "shuffle") return PlanTransform::shuffle;
  if (s == "reverse") return PlanTransform::reverse;
  throw ConfigError("plan transform must be none, shuffle or reverse; got '" + s + "'");
}

template <class T>
std::vector<T> apply_transform(std::vector<T> v, PlanTransform t, std::uint64_t seed) {
  if (t == PlanTransform::reverse) {
    std::reverse(v.begin(), v.end());
  } else if (t == PlanTransform::shuffle) {
    // Fisher-Yates with an explicit draw so the permutation is stable across
    // standard library implementations.
    std::mt19937_64 rng(seed);
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(v[i - 1], v[j]);
    }
  }
  return v;
}

template std::vector<int> apply_transform(std::vector<int>, PlanTransform, std::uint64_t);

}  // namespace myq::sens
