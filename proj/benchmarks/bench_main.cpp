// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

#include "myq/calibration.hpp"
#include "myq/domain.hpp"
#include "myq/int_kernels.hpp"
#include "myq/sensitivity.hpp"

namespace {

myq::Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::vector<double> v(r * c);
  for (auto& x : v) x = n(rng);
  return myq::Tensor({r, c}, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(myq::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_IntMatmulRequant(benchmark::State& state) {
  using namespace myq::quant;
  const auto n = static_cast<std::size_t>(state.range(0));
  const int b = static_cast<int>(state.range(1));
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::int64_t> code(code_min(b), code_max(b));
  IntTensor x{{n, n}, std::vector<std::int32_t>(n * n)}, w{{n, n}, std::vector<std::int32_t>(n * n)};
  for (auto& v : x.data) v = static_cast<std::int32_t>(code(rng));
  for (auto& v : w.data) v = static_cast<std::int32_t>(code(rng));
  const AffineParams px{0.02, -3, b}, pw{0.01, 0, b}, po{0.05, 1, b};
  for (auto _ : state) benchmark::DoNotOptimize(int_matmul_requant(x, w, px, pw, po));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_IntMatmulRequant)->Args({64, 4})->Args({64, 8})->Args({128, 8});

void BM_AllocateUniform(benchmark::State& state) {
  const auto layers = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> sz(1000, 10000000);
  std::vector<std::size_t> sizes(layers);
  for (auto& s : sizes) s = sz(rng);
  myq::sens::SensitivityRank rank;
  rank.order.resize(layers);
  std::iota(rank.order.begin(), rank.order.end(), 0);
  const std::vector<int> four(layers, 4);
  const double budget = myq::sens::compute_model_size(four, sizes);
  for (auto _ : state) benchmark::DoNotOptimize(myq::sens::allocate_uniform_constrained(rank, sizes, budget));
}
BENCHMARK(BM_AllocateUniform)->Arg(10)->Arg(50)->Arg(200);

void BM_CalibrateSearch(benchmark::State& state) {
  myq::ToyConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 32;
  cfg.ffn_dim = 64;
  cfg.frames = 32;
  const auto m = myq::build_toy_encoder(cfg, 5);
  auto spec = myq::standard_domain(cfg.in_channels, cfg.frames, 4, 6);
  spec.dtype = cfg.dtype;
  const auto calib = myq::make_domain(spec);
  const auto stats = myq::sens::observe(m, calib);
  const auto data = myq::calib::collect_calibration_data(m, calib, true);
  myq::sens::BitPlan plan;
  plan.bits.assign(m.num_layers(), 6);
  myq::calib::CalibConfig cc;
  cc.method = static_cast<myq::calib::Method>(state.range(0));
  cc.candidates = 20;
  for (auto _ : state) benchmark::DoNotOptimize(myq::calib::calibrate_search(m, data, stats, plan, cc));
  state.SetLabel(myq::calib::to_string(cc.method));
}
BENCHMARK(BM_CalibrateSearch)
    ->Arg(static_cast<int>(myq::calib::Method::l2))
    ->Arg(static_cast<int>(myq::calib::Method::hess))
    ->Arg(static_cast<int>(myq::calib::Method::cosine))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
