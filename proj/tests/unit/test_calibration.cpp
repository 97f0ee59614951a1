// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <random>

#include "calib_suite.hpp"
#include "gradcheck.hpp"
#include "myq/calibration.hpp"
#include "myq/error.hpp"
#include "oracles.hpp"
#include "toy.hpp"

using namespace myq;
using namespace myq::calib;

namespace {

std::vector<double> multipliers(const std::vector<GridPoint>& g) {
  std::vector<double> m;
  for (const auto& p : g) m.push_back(p.multiplier);
  std::sort(m.begin(), m.end());
  return m;
}

CalibConfig grid_cfg(int t, double lo, double hi) {
  CalibConfig c;
  c.candidates = t;
  c.grid_lo = lo;
  c.grid_hi = hi;
  return c;
}

}  // namespace

TEST(Grid, EndpointsAndInsertion) {
  EXPECT_EQ(multipliers(candidate_grid(1.0, grid_cfg(2, 0.5, 1.5))), (std::vector<double>{0.5, 1.0, 1.5}));
  EXPECT_EQ(multipliers(candidate_grid(1.0, grid_cfg(3, 0.5, 1.5))), (std::vector<double>{0.5, 1.0, 1.5}));
  const auto g = candidate_grid(2.0, CalibConfig{});
  const auto m = multipliers(g);
  EXPECT_EQ(g.size(), 100u);
  EXPECT_DOUBLE_EQ(m.front(), 0.1);
  EXPECT_DOUBLE_EQ(m.back(), 1.2);
  EXPECT_NE(std::find(m.begin(), m.end(), 1.0), m.end());
  for (const auto& p : g) EXPECT_DOUBLE_EQ(p.scale, 2.0 * p.multiplier);
}

TEST(Config, Validation) {
  EXPECT_THROW(grid_cfg(1, 0.1, 1.2).validate(), ConfigError);
  EXPECT_THROW(grid_cfg(10, 0.0, 1.2).validate(), ConfigError);
  EXPECT_THROW(grid_cfg(10, 1.2, 1.2).validate(), ConfigError);
  CalibConfig c;
  c.rounds = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(method_from_string("bogus"), ConfigError);
  EXPECT_EQ(method_from_string("linw_l2"), Method::linw_l2);
}

TEST(MinMax, Examples) {
  sens::LayerStats s;
  s.input_min = -1;
  s.input_max = 1;
  const std::vector<sens::LayerStats> stats{s};
  const auto r = calibrate_minmax(stats, 8);
  const auto p = std::get<quant::AffineParams>(r.layers[0].params);
  EXPECT_EQ(p.scale, 1.0 / 64);
  EXPECT_EQ(p.zero_point, -64);
  const auto p4 = std::get<quant::AffineParams>(calibrate_minmax(stats, 4).layers[0].params);
  EXPECT_EQ(p4.scale, 16 * p.scale);
}

TEST(MinMax, DegenerateNamesLayer) {
  sens::LayerStats ok, bad;
  ok.input_min = -1;
  ok.input_max = 1;
  bad.input_min = bad.input_max = 0.5;
  bad.layer = 1;
  const std::vector<sens::LayerStats> stats{ok, bad};
  try {
    calibrate_minmax(stats, 8);
    FAIL() << "expected DegenerateRangeError";
  } catch (const DegenerateRangeError& e) {
    EXPECT_EQ(e.layer(), 1);
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
  }
}

TEST(Objectives, HandExamples) {
  const auto q = Tensor::vector({1, 2}), o = Tensor::vector({1, 1});
  EXPECT_EQ(objective_l1(q, o), 1.0);
  EXPECT_EQ(objective_l2(q, o), 1.0);
  EXPECT_EQ(objective_linw_l2(q, o), 1.0);
  EXPECT_EQ(objective_sqw_l2(q, o), 1.0);
  for (auto f : {objective_l1, objective_l2, objective_linw_l2, objective_sqw_l2, objective_cosine})
    EXPECT_EQ(f(o, o), 0.0);
  const auto zero = Tensor::vector({0, 0});
  EXPECT_EQ(objective_linw_l2(q, zero), 0.0);
  EXPECT_EQ(objective_sqw_l2(q, zero), 0.0);
  EXPECT_EQ(objective_hessian(o, o, Tensor::vector({5, -3})), 0.0);
  EXPECT_THROW(objective_l2(Tensor::vector({1}), o), DimensionError);
}

TEST(Objectives, CosineValues) {
  const auto o = Tensor::vector({1, 2, 3});
  EXPECT_EQ(objective_cosine(o, o), 0.0);
  EXPECT_EQ(objective_cosine(Tensor::vector({-1, -2, -3}), o), 2.0);
  EXPECT_EQ(objective_cosine(Tensor::vector({2, -1, 0}), o), 1.0);
  EXPECT_EQ(objective_cosine(Tensor::vector({0, 0, 0}), o), 1.0);
}

TEST(Objectives, CosineScaleInvariance) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto q = oracle::random_tensor({37}, rng), o = oracle::random_tensor({37}, rng);
    const double base = objective_cosine(q, o);
    // Exact for power-of-two factors; other factors round within an ulp.
    for (double c : {0.25, 0.5, 2.0, 8.0, 1024.0}) EXPECT_EQ(objective_cosine(scale(q, c), o), base);
    EXPECT_NEAR(objective_cosine(scale(q, 3.7), o), base, 1e-15);
  }
}

TEST(Objectives, HessianWithUnitGradsIsL2) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto q = oracle::random_tensor({8, 5}, rng), o = oracle::random_tensor({8, 5}, rng);
    EXPECT_EQ(objective_hessian(q, o, Tensor::full({8, 5}, 1.0)), objective_l2(q, o));
    EXPECT_NEAR(objective_hessian(q, o, Tensor::full({8, 5}, 3.0)), 9.0 * objective_l2(q, o),
                1e-12 * objective_l2(q, o));
  }
}

TEST(Hessian, PseudoLabelGradsMatchFiniteDifferences) {
  const auto m = toy::small_model(12);
  const auto x = toy::samples(m, 1, 13)[0];
  const auto grads = pseudo_label_grads(m, x);
  const auto labels = argmax_rows(forward(m, x));
  const auto fwd = forward_with_tape(m, x);
  std::mt19937_64 rng(14);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const auto shape = fwd.layer_outputs[l].shape();
    ASSERT_EQ(grads[l].shape(), shape);
    std::uniform_int_distribution<std::size_t> pick(0, shape_numel(shape) - 1);
    for (int k = 0; k < 6; ++k) {
      const std::size_t i = pick(rng);
      Tensor d = Tensor::zeros(shape);
      d.set(i, h);
      const double up = gradcheck::model_loss(m, x, labels, gradcheck::perturb_hook(static_cast<int>(l), d));
      d.set(i, -h);
      const double dn = gradcheck::model_loss(m, x, labels, gradcheck::perturb_hook(static_cast<int>(l), d));
      const double fd = (up - dn) / (2 * h);
      // Weighting uses the squared gradient.
      const double err = std::abs(grads[l][i] * grads[l][i] - fd * fd) / (fd * fd + 1e-8);
      worst = std::max(worst, err);
    }
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Search, DominanceAllMethods) {
  for (std::uint64_t seed : {1, 2}) {
    const auto m = toy::small_model(seed);
    const auto calib = toy::samples(m, 3, seed + 100);
    for (const auto& r : calib_suite::run(m, calib, 6, 30)) {
      EXPECT_EQ(r.violations, 0) << r.method << " seed " << seed;
      EXPECT_EQ(r.layers_checked, static_cast<int>(m.num_layers()));
    }
  }
}

TEST(Search, TwoRangeRoundsMonotone) {
  const auto m = toy::small_model(21);
  const auto calib = toy::samples(m, 3, 22);
  const auto stats = sens::observe(m, calib);
  const auto data = collect_calibration_data(m, calib, false);
  sens::BitPlan plan;
  plan.bits.assign(m.num_layers(), 6);
  CalibConfig cfg;
  cfg.method = Method::l2;
  cfg.candidates = 25;
  cfg.rounds = 3;
  const auto r = calibrate_search(m, data, stats, plan, cfg);
  int two_range_layers = 0;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const auto& lc = r.layers[l];
    if (!quant::input_is_post_gelu(m, l)) {
      EXPECT_TRUE(std::holds_alternative<quant::AffineParams>(lc.params));
      continue;
    }
    ++two_range_layers;
    EXPECT_TRUE(std::holds_alternative<quant::TwoRangeParams>(lc.params));
    ASSERT_EQ(lc.round_objectives.size(), 6u);
    EXPECT_LE(lc.round_objectives[0], lc.base_objective);
    for (std::size_t i = 1; i < lc.round_objectives.size(); ++i)
      EXPECT_LE(lc.round_objectives[i], lc.round_objectives[i - 1]);
    EXPECT_EQ(lc.objective, lc.round_objectives.back());
  }
  EXPECT_GT(two_range_layers, 0);
}

TEST(Search, ExactLayerKeepsBaseScale) {
  // A layer whose output does not depend on the scale ties everywhere; the
  // multiplier nearest 1.0 wins.
  auto m = toy::small_model(23);
  const auto calib = toy::samples(m, 2, 24);
  auto& first = m.layers[0];
  first.weight = Tensor::zeros(first.weight.shape(), first.weight.dtype());
  if (first.bias) first.bias = Tensor::zeros(first.bias->shape(), first.bias->dtype());
  const auto stats = sens::observe(m, calib);
  const auto data = collect_calibration_data(m, calib, false);
  sens::BitPlan plan;
  plan.bits.assign(m.num_layers(), 32);
  plan.bits[0] = 8;
  CalibConfig cfg;
  cfg.method = Method::l1;
  cfg.candidates = 10;
  const auto r = calibrate_search(m, data, stats, plan, cfg);
  const auto p = std::get<quant::AffineParams>(r.layers[0].params);
  EXPECT_EQ(p, quant::activation_params_minmax(stats[0].input_min, stats[0].input_max, 8));
}

TEST(Search, DeterministicAcrossThreadCounts) {
  const auto m = toy::small_model(25);
  const auto calib = toy::samples(m, 3, 26);
  const auto stats = sens::observe(m, calib);
  sens::BitPlan plan;
  plan.bits.assign(m.num_layers(), 5);
  CalibConfig cfg;
  cfg.method = Method::hess;
  cfg.candidates = 15;
  auto run_with = [&](const char* threads) {
    setenv("MYQ_THREADS", threads, 1);
    return calibrate(m, calib, stats, plan, cfg);
  };
  const auto a = run_with("1");
  const auto b = run_with("4");
  unsetenv("MYQ_THREADS");
  ASSERT_EQ(a.layers.size(), b.layers.size());
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    EXPECT_EQ(a.layers[l].params, b.layers[l].params);
    EXPECT_EQ(a.layers[l].objective, b.layers[l].objective);
  }
}

TEST(Search, FloatLayersAndMethods) {
  const auto m = toy::small_model(27);
  const auto calib = toy::samples(m, 2, 28);
  const auto stats = sens::observe(m, calib);
  sens::BitPlan plan;
  plan.bits.assign(m.num_layers(), 8);
  plan.bits[0] = 32;
  CalibConfig cfg;
  cfg.method = Method::cosine;
  cfg.candidates = 5;
  const auto r = calibrate(m, calib, stats, plan, cfg);
  EXPECT_TRUE(std::holds_alternative<quant::FloatPassthrough>(r.layers[0].params));
  cfg.method = Method::none;
  for (const auto& l : calibrate(m, calib, stats, plan, cfg).layers)
    EXPECT_TRUE(std::holds_alternative<quant::FloatPassthrough>(l.params));
  cfg.method = Method::minmax;
  cfg.act_bits = 32;
  for (const auto& l : calibrate(m, calib, stats, plan, cfg).layers)
    EXPECT_TRUE(std::holds_alternative<quant::FloatPassthrough>(l.params));
}
