// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "myq/error.hpp"
#include "myq/model.hpp"
#include "myq/tape.hpp"

using namespace myq;

TEST(Tape, SumLossGivesOnesAtOutput) {
  Tape t;
  const auto x = t.input(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  const auto o = t.linear(x, Tensor({2, 3}, {1, 0, 0, 0, 1, 0}), nullptr);
  t.mark_layer_output(0, o);
  const auto g = t.backward(o, Tensor::full({2, 2}, 1.0));
  for (double v : g.layers.at(0).values()) EXPECT_EQ(v, 1.0);
}

TEST(Tape, HalfSquaredNormGradientIsOutput) {
  Tape t;
  const auto x = t.input(Tensor({1, 2}, {0.5, -1.5}));
  const auto o = t.linear(x, Tensor({2, 2}, {2, 1, -1, 3}), nullptr);
  t.mark_layer_output(0, o);
  const auto l = t.scale(t.mul(o, o), 0.5);
  const auto g = t.backward(l, Tensor::full({1, 2}, 1.0));
  EXPECT_TRUE(g.layers.at(0).bit_equal(t.value(o)));
}

TEST(Tape, SecondBackwardIsUsageError) {
  Tape t;
  const auto x = t.input(Tensor({1}, {2.0}));
  const auto y = t.scale(x, 3.0);
  t.backward(y, Tensor({1}, {1.0}));
  EXPECT_THROW(t.backward(y, Tensor({1}, {1.0})), UsageError);
}

TEST(Tape, SeedShapeMustMatch) {
  Tape t;
  const auto x = t.input(Tensor({2}, {1.0, 2.0}));
  EXPECT_THROW(t.backward(x, Tensor({3}, {1, 1, 1})), DimensionError);
}

TEST(Tape, LayerOutputRegisteredOnce) {
  Tape t;
  const auto x = t.input(Tensor({1}, {2.0}));
  t.mark_layer_output(0, x);
  EXPECT_THROW(t.mark_layer_output(0, x), UsageError);
}

class OpGradients : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(OpGradients, MatchCentralDifferences) {
  for (const auto& r : gradcheck::check_all_ops(GetParam())) EXPECT_LT(r.max_rel_error, 1e-4) << r.name;
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradients, ::testing::Values(1u, 2u, 3u));

TEST(ModelGradients, ThreeLayerNetwork) {
  for (std::uint64_t seed : {7u, 8u, 9u}) EXPECT_LT(gradcheck::check_three_layer(seed), 1e-4) << "seed " << seed;
}

TEST(ModelGradients, SmallEncoderEveryLayer) {
  ToyConfig c;
  c.in_channels = 3;
  c.hidden = 8;
  c.heads = 2;
  c.layers = 1;
  c.ffn_dim = 12;
  c.vocab = 5;
  c.frames = 15;
  c.dtype = DType::f64;
  const auto m = build_toy_encoder(c, 21);
  std::mt19937_64 rng(4);
  const auto x = oracle::random_tensor({3, 15}, rng);
  EXPECT_LT(gradcheck::check_model(m, x), 1e-4);
}

TEST(Forward, DeterministicAndBitIdentical) {
  const auto m = build_toy_encoder({}, 3);
  std::mt19937_64 rng(1);
  const auto x = oracle::random_tensor(m.input_shape(), rng).as(DType::f32);
  const auto a = forward_with_tape(m, x);
  const auto b = forward_with_tape(m, x);
  EXPECT_TRUE(a.logits_value().bit_equal(b.logits_value()));
  ASSERT_EQ(a.layer_outputs.size(), m.num_layers());
  for (std::size_t l = 0; l < m.num_layers(); ++l) EXPECT_TRUE(a.layer_outputs[l].bit_equal(b.layer_outputs[l]));
}

TEST(Forward, InputShapeMismatch) {
  const auto m = build_toy_encoder({}, 3);
  EXPECT_THROW(forward(m, Tensor::zeros({16, 63})), DimensionError);
}
