// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "int_kernel_suite.hpp"
#include "myq/error.hpp"
#include "myq/int_kernels.hpp"

using namespace myq;
using namespace myq::quant;

TEST(IntKernel, SingleElementExample) {
  const IntTensor x{{1, 1}, {2}}, w{{1, 1}, {3}};
  const auto y = int_matmul_requant(x, w, {0.5, 0, 8}, {0.5, 0, 8}, {0.75, 0, 8});
  EXPECT_EQ(y.data, std::vector<std::int32_t>{2});
}

TEST(IntKernel, ZeroInputGivesOffsetBias) {
  const AffineParams px{0.1, 0, 8}, pw{0.02, 0, 8}, po{0.05, 7, 8};
  const IntTensor x{{3, 4}, std::vector<std::int32_t>(12, 0)};
  const IntTensor w{{2, 4}, {1, -2, 3, 4, 5, 6, -7, 8}};
  const std::vector<std::int64_t> bias{50, -75};
  const auto y = int_matmul_requant(x, w, px, pw, po, bias);
  // bias * S_x S_w / S_out = bias * 0.04, half away from zero, then + Z_out.
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(y.data[i * 2 + 0], 2 + 7);
    EXPECT_EQ(y.data[i * 2 + 1], -3 + 7);
  }
  EXPECT_EQ(int_matmul_requant(x, w, px, pw, po).data, std::vector<std::int32_t>(6, 7));
}

TEST(IntKernel, ZeroPointRemovedFromInput) {
  // x_q = Z_x represents 0.0 and must contribute nothing.
  const AffineParams px{0.25, -3, 8}, pw{0.5, 0, 8}, po{0.125, 0, 8};
  const IntTensor x{{1, 2}, {-3, -1}}, w{{1, 2}, {9, 2}};
  // Real: 0 * 4.5 + 0.5 * 1.0 = 0.5 -> code 4.
  EXPECT_EQ(int_matmul_requant(x, w, px, pw, po).data, std::vector<std::int32_t>{4});
}

TEST(IntKernel, ClampsToOutputRange) {
  const IntTensor x{{1, 1}, {100}}, w{{1, 1}, {100}};
  EXPECT_EQ(int_matmul_requant(x, w, {1, 0, 8}, {1, 0, 8}, {1, 0, 4}).data, std::vector<std::int32_t>{7});
}

TEST(IntKernel, RandomTrialsWithinOneLsbAndFloatFree) {
  const auto r = int_suite::run(2024, 64);
  EXPECT_EQ(r.trials, 64);
  EXPECT_LE(r.worst_lsb, 1);
  EXPECT_TRUE(r.shim_matches_default);
  EXPECT_GT(r.int_ops, 0u);
}

TEST(IntKernel, RequantMultiplierRange) {
  for (double m : {1e-6, 0.0123, 0.5, 0.75, 1.0, 3.7, 1000.0, 3e9}) {
    const auto q = make_requant_multiplier(m);
    EXPECT_GE(q.m0, std::int64_t{1} << 30);
    EXPECT_LT(q.m0, std::int64_t{1} << 31);
    EXPECT_NEAR(static_cast<double>(q.m0) * std::ldexp(1.0, -q.shift), m, m * 1e-9);
  }
  EXPECT_EQ(make_requant_multiplier(3.7).shift, 29);
  EXPECT_LE(make_requant_multiplier(3e9).shift, 0);
  EXPECT_THROW(make_requant_multiplier(0.0), ConfigError);
}

TEST(IntKernel, ShapeMismatch) {
  const IntTensor x{{2, 3}, std::vector<std::int32_t>(6)}, w{{2, 4}, std::vector<std::int32_t>(8)};
  EXPECT_THROW(int_matmul_requant(x, w, {1, 0, 8}, {1, 0, 8}, {1, 0, 8}), DimensionError);
}

TEST(IntKernel, SplitAccumulators) {
  const std::vector<std::int32_t> x{-2, 3}, w{5, 7};
  const auto a = int_linear_accumulate(x, w, 1, 2, 1, 0, true);
  EXPECT_EQ(a.neg[0], -10);
  EXPECT_EQ(a.pos[0], 21);
  const auto b = int_linear_accumulate(x, w, 1, 2, 1, 0, false);
  EXPECT_EQ(b.neg[0], 0);
  EXPECT_EQ(b.pos[0], 11);
}
