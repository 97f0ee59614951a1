// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "myq/calibration.hpp"
#include "myq/error.hpp"
#include "myq/model_io.hpp"
#include "myq/qmodel_io.hpp"
#include "myq/quantized_model.hpp"
#include "toy.hpp"

using namespace myq;
using namespace myq::quant;

namespace {

sens::BitPlan uniform_plan(const ModelGraph& m, int b) {
  sens::BitPlan p;
  p.bits.assign(m.num_layers(), b);
  const auto sizes = param_count(m);
  p.size_mb = sens::compute_model_size(p.bits, sizes);
  return p;
}

std::vector<ActParams> float_acts(const ModelGraph& m) {
  return std::vector<ActParams>(m.num_layers(), FloatPassthrough{});
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST(QuantizedModel, AllFloatPlanMatchesForward) {
  const auto m = toy::small_model(3);
  const auto qm = quantize_model(m, uniform_plan(m, 32), float_acts(m));
  for (const auto& x : toy::samples(m, 3, 5)) {
    const auto q = run_quantized(qm, x);
    EXPECT_EQ(max_abs_diff(q.logits_value(), forward(m, x)), 0.0);
  }
}

TEST(QuantizedModel, FloatActivationsMatchDequantizedGraph) {
  const auto m = toy::small_model(4);
  const auto qm = quantize_model(m, uniform_plan(m, 6), float_acts(m));
  for (const auto& x : toy::samples(m, 2, 6)) {
    const auto q = run_quantized(qm, x);
    EXPECT_LT(max_abs_diff(q.logits_value(), forward(qm.graph, x)), 1e-10);
  }
}

TEST(QuantizedModel, EightBitStaysCloseToFloat) {
  const auto m = toy::small_model(5);
  const auto calib = toy::samples(m, 4, 7);
  const auto stats = sens::observe(m, calib);
  const auto acts = calib::calibrate_minmax(stats, 8).params();
  const auto qm = quantize_model(m, uniform_plan(m, 8), acts);
  std::size_t agree = 0, total = 0;
  for (const auto& x : calib) {
    const auto fp = argmax_rows(forward(m, x));
    const auto q = argmax_rows(run_quantized(qm, x).logits_value());
    for (std::size_t i = 0; i < fp.size(); ++i) agree += fp[i] == q[i];
    total += fp.size();
  }
  EXPECT_GE(static_cast<double>(agree) / total, 0.8);
}

TEST(QuantizedModel, PayloadBits) {
  const auto m = toy::small_model(6);
  auto plan = uniform_plan(m, 5);
  plan.bits[0] = 3;
  plan.bits.back() = 32;
  const auto sizes = param_count(m);
  plan.size_mb = sens::compute_model_size(plan.bits, sizes);
  const auto qm = quantize_model(m, plan, float_acts(m));
  std::uint64_t expect = 0;
  for (std::size_t l = 0; l < sizes.size(); ++l) expect += static_cast<std::uint64_t>(plan.bits[l]) * sizes[l];
  EXPECT_EQ(qm.weight_payload_bits(), expect);
  EXPECT_DOUBLE_EQ(static_cast<double>(expect) / 8.0 / 1048576.0, plan.size_mb);
}

TEST(QuantizedModel, CodesWithinRange) {
  const auto m = toy::small_model(7);
  auto plan = uniform_plan(m, 4);
  const auto qm = quantize_model(m, plan, float_acts(m));
  for (const auto& ql : qm.layers)
    for (auto c : ql.codes.weight.data) {
      EXPECT_GE(c, code_min(4));
      EXPECT_LE(c, code_max(4));
    }
}

TEST(QuantizedModel, SerializationRoundTrip) {
  const auto m = toy::small_model(8);
  const auto calib = toy::samples(m, 3, 9);
  const auto stats = sens::observe(m, calib);
  auto acts = calib::calibrate_minmax(stats, 8).params();
  for (std::size_t l = 0; l < m.num_layers(); ++l)
    if (input_is_post_gelu(m, l)) acts[l] = TwoRangeParams{0.01, 0.02, 8};
  auto plan = uniform_plan(m, 7);
  plan.bits[1] = 32;
  plan.size_mb = sens::compute_model_size(plan.bits, param_count(m));
  auto qm = quantize_model(m, plan, acts);
  qm.source_fingerprint = model_fingerprint(m);
  const auto bytes = serialize_quantized(qm);
  ASSERT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MYQZ");
  const auto back = deserialize_quantized(bytes);
  EXPECT_EQ(serialize_quantized(back), bytes);
  EXPECT_EQ(back.plan, qm.plan);
  EXPECT_EQ(back.source_fingerprint, qm.source_fingerprint);
  for (const auto& x : calib)
    EXPECT_EQ(max_abs_diff(run_quantized(back, x).logits_value(), run_quantized(qm, x).logits_value()), 0.0);
}

TEST(QuantizedModel, CorruptFilesRejected) {
  const auto m = toy::small_model(9);
  const auto qm = quantize_model(m, uniform_plan(m, 8), float_acts(m));
  auto bytes = serialize_quantized(qm);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_quantized(bad), FormatError);
  bad = bytes;
  bad.resize(bytes.size() - 3);
  EXPECT_THROW(deserialize_quantized(bad), FormatError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(deserialize_quantized(bad), FormatError);
}

TEST(QuantizedModel, AssemblyErrors) {
  const auto m = toy::small_model(10);
  auto plan = uniform_plan(m, 8);
  EXPECT_THROW(quantize_model(m, plan, std::vector<ActParams>(2)), AssemblyError);
  auto short_plan = plan;
  short_plan.bits.pop_back();
  EXPECT_THROW(quantize_model(m, short_plan, float_acts(m)), AssemblyError);
  auto zero = plan;
  zero.bits[0] = 0;
  EXPECT_THROW(quantize_model(m, zero, float_acts(m)), AssemblyError);
}

TEST(QuantizedModel, PostGeluLayers) {
  const auto m = toy::small_model(11);
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const bool expect = m.layers[l].kind == LayerKind::FFN2 ||
                        (m.layers[l].kind == LayerKind::Conv1d && l > 0);
    EXPECT_EQ(input_is_post_gelu(m, l), expect) << "layer " << l;
  }
}
