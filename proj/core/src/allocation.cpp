// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "myq/error.hpp"
#include "myq/quantizer.hpp"
#include "myq/rounding.hpp"
#include "myq/sensitivity.hpp"

namespace myq::sens {

double compute_model_size(std::span<const int> bits, std::span<const std::size_t> layer_sizes) {
  if (bits.size() != layer_sizes.size())
    throw DimensionError("compute_model_size: " + std::to_string(bits.size()) + " bit depths for " +
                         std::to_string(layer_sizes.size()) + " layers");
  double params = 0.0;
  for (std::size_t l = 0; l < bits.size(); ++l)
    params += (static_cast<double>(bits[l]) / 8.0) * static_cast<double>(layer_sizes[l]);
  return params / (1024.0 * 1024.0);
}

BitPlan allocate_uniform_constrained(const SensitivityRank& rank, std::span<const std::size_t> layer_sizes,
                                     double budget_mb) {
  const std::size_t L = layer_sizes.size();
  if (rank.order.size() != L)
    throw DimensionError("rank covers " + std::to_string(rank.order.size()) + " layers, model has " +
                         std::to_string(L));
  std::vector<bool> seen(L, false);
  for (int l : rank.order) {
    if (l < 0 || static_cast<std::size_t>(l) >= L || seen[l])
      throw ConfigError("rank order is not a permutation of the layer indices");
    seen[l] = true;
  }

  const std::vector<int> floor_bits(L, 1);
  const double floor_mb = compute_model_size(floor_bits, layer_sizes);
  if (!(budget_mb >= floor_mb))
    throw BudgetError("budget " + std::to_string(budget_mb) + " MB is below the 1-bit floor of " +
                          std::to_string(floor_mb) + " MB",
                      floor_mb);

  BitPlan plan;
  plan.bits.assign(L, quant::kFloatBits);
  plan.size_mb = compute_model_size(plan.bits, layer_sizes);
  while (plan.size_mb > budget_mb) {
    for (int l : rank.order) {
      plan.bits[l] -= 1;
      plan.last_decremented = l;
      plan.size_mb = compute_model_size(plan.bits, layer_sizes);
      if (plan.size_mb <= budget_mb) return plan;
    }
  }
  return plan;
}

BitPlan allocate_minmax_interp(std::span<const double> values, int min_bit, int max_bit,
                               std::span<const std::size_t> layer_sizes) {
  if (!(min_bit < max_bit)) throw ConfigError("min-max interpolation needs min_bit < max_bit");
  if (min_bit < 1 || max_bit > quant::kFloatBits) throw ConfigError("bit range must lie in [1, 32]");
  if (values.size() != layer_sizes.size()) throw DimensionError("one sensitivity value per layer required");
  BitPlan plan;
  plan.bits.assign(values.size(), max_bit);
  if (!values.empty()) {
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi > lo) {
      for (std::size_t l = 0; l < values.size(); ++l) {
        const double t = (values[l] - lo) / (hi - lo);
        plan.bits[l] = static_cast<int>(round_half_away(max_bit - t * (max_bit - min_bit)));
      }
    }
  }
  plan.size_mb = compute_model_size(plan.bits, layer_sizes);
  return plan;
}

}  // namespace myq::sens
