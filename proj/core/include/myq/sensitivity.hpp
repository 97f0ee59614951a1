// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "myq/model.hpp"
#include "myq/tensor.hpp"

namespace myq::sens {

/// Activation statistics of one layer over every output element of every
/// calibration sample. The input range feeds min-max activation calibration.
struct LayerStats {
  int layer = 0;
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double max_abs = 0.0;
  double std = 0.0;
  std::size_t count = 0;
  std::size_t median_population = 0;  // < count when the reservoir cap applied

  double input_min = 0.0;
  double input_max = 0.0;
  double input_max_abs = 0.0;

  bool operator==(const LayerStats&) const = default;
};

inline constexpr std::size_t kDefaultMedianCap = std::size_t{1} << 22;

struct ObserveOptions {
  std::size_t median_cap = kDefaultMedianCap;
  std::uint64_t seed = 0;  // reservoir sampling seed
};

/// Exact statistics over `outputs` (one tensor per calibration sample) plus
/// the range of the matching `inputs` (may be empty).
LayerStats summarize_layer(int layer, std::span<const Tensor> outputs, std::span<const Tensor> inputs,
                           const ObserveOptions& opts = {});

/// Runs the FP model over the calibration set and summarizes every layer.
std::vector<LayerStats> observe(const ModelGraph& model, std::span<const Tensor> calib_set,
                                const ObserveOptions& opts = {});

enum class RankOrder { asc, desc };
std::string to_string(RankOrder o);
RankOrder rank_order_from_string(const std::string& s);

struct SensitivityRank {
  std::vector<int> order;      // q-hat: layer indices, first decremented first
  std::string metric;
  std::vector<double> values;  // raw metric value per layer

  bool operator==(const SensitivityRank&) const = default;
};

/// Sorts layers by |value| (ascending by default); ties go to the lower index.
SensitivityRank rank_values(std::span<const double> values, std::string metric,
                            RankOrder order = RankOrder::asc);

enum class ReductionMetric { avg, median, max, max_abs, std };
enum class DistanceMetric { l1, l2, sn, frobenius, kl };
std::string to_string(ReductionMetric m);
std::string to_string(DistanceMetric m);

double reduction_value(const LayerStats& s, ReductionMetric m);

SensitivityRank rank_by_reduction(std::span<const LayerStats> stats, ReductionMetric metric,
                                  RankOrder order = RankOrder::asc);

/// Distance between a probe output and the FP output of the same layer.
///   l1        : sum |d|
///   l2        : sqrt(sum d^2) over the flattened tensor
///   frobenius : matrix Frobenius norm of d viewed as 2-D
///   sn        : largest singular value of d viewed as 2-D (power iteration)
///   kl        : KL(fp || quant) of 2048-bin smoothed histograms
double distance(DistanceMetric metric, const Tensor& quantized, const Tensor& reference);

double spectral_norm(const Tensor& x, int max_iters = 100, double rel_tol = 1e-8);
double kl_histogram(const Tensor& reference, const Tensor& quantized, std::size_t bins = 2048,
                    double eps = 1e-10);

/// Quantizes each layer's weights alone at probe_bits (FP inputs), averages
/// the distance to the FP output over the calibration set, sorts ascending.
SensitivityRank rank_by_distance(const ModelGraph& model, std::span<const Tensor> calib_set,
                                 int probe_bits, DistanceMetric metric,
                                 RankOrder order = RankOrder::asc);

/// Per-layer bit depths and the size they imply.
struct BitPlan {
  std::vector<int> bits;
  double size_mb = 0.0;
  int last_decremented = -1;  // layer touched by the final decrement

  bool operator==(const BitPlan&) const = default;
};

/// sum_l (b_l / 8) * |W_l| / 1024^2
double compute_model_size(std::span<const int> bits, std::span<const std::size_t> layer_sizes);

/// Uniformity-constrained allocation: start at 32 bits, sweep the rank
/// decrementing one layer at a time, and stop as soon as the size fits.
/// Throws BudgetError when the budget is below the all-1-bit size.
BitPlan allocate_uniform_constrained(const SensitivityRank& rank, std::span<const std::size_t> layer_sizes,
                                     double budget_mb);

/// Linear map of sensitivity values onto [min_bit, max_bit]: the largest
/// value gets min_bit, the smallest max_bit. The budget is not enforced.
BitPlan allocate_minmax_interp(std::span<const double> values, int min_bit, int max_bit,
                               std::span<const std::size_t> layer_sizes);

enum class PlanTransform { none, shuffle, reverse };
std::string to_string(PlanTransform t);
PlanTransform plan_transform_from_string(const std::string& s);

/// Permutes a rank order or a bit vector (shuffle is seeded).
template <class T>
std::vector<T> apply_transform(std::vector<T> v, PlanTransform t, std::uint64_t seed);

}  // namespace myq::sens
