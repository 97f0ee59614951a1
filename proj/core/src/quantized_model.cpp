// SPDX-License-Identifier: Apache-2.0
#include "myq/quantized_model.hpp"

#include <cmath>
#include <limits>

#include "myq/error.hpp"
#include "myq/int_kernels.hpp"
#include "myq/model_io.hpp"

namespace myq::quant {

namespace {

// Dot products over integer-valued doubles are exact while every partial sum
// stays below 2^53, which holds for the bit depths used in practice. Above
// that bound the int64 accumulator path is used instead.
constexpr double kExactDoubleBound = 9007199254740992.0;

double dot4(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t p = 0;
  for (; p + 4 <= n; p += 4) {
    s0 += a[p] * b[p];
    s1 += a[p + 1] * b[p + 1];
    s2 += a[p + 2] * b[p + 2];
    s3 += a[p + 3] * b[p + 3];
  }
  for (; p < n; ++p) s0 += a[p] * b[p];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

QuantLayerExec::QuantLayerExec(const LayerSpec& layer, int bits)
    : QuantLayerExec(layer, bits == kFloatBits || bits < 1 || bits > kFloatBits
                                ? LayerWeightCodes{bits, {}, {}, std::nullopt, {}}
                                : quantize_layer_weights(layer, bits)) {}

QuantLayerExec::QuantLayerExec(const LayerSpec& layer, LayerWeightCodes codes)
    : layer_(&layer), bits_(codes.bits), codes_(std::move(codes)) {
  if (bits_ < 1 || bits_ > kFloatBits)
    throw ConfigError("layer " + std::to_string(layer.index) + ": bit depth " + std::to_string(bits_) +
                      " outside [1, 32]");
  if (is_float()) {
    w_hat_ = layer.weight_matrix();
    b_hat_ = layer.bias;
    return;
  }
  if (codes_.weight.numel() != layer.weight.numel())
    throw AssemblyError("layer " + std::to_string(layer.index) + ": weight codes do not match the layer");
  w_codes_.assign(codes_.weight.data.begin(), codes_.weight.data.end());
  w_hat_ = dequantize(codes_.weight, codes_.weight_params, layer.weight.dtype());
  if (codes_.bias) b_hat_ = dequantize(*codes_.bias, codes_.bias_params, layer.bias->dtype());
}

std::vector<std::int64_t> QuantLayerExec::bias_accumulator(double input_scale) const {
  if (!b_hat_) return {};
  return bias_to_accumulator(*b_hat_, input_scale, codes_.weight_params.scale);
}

Tensor QuantLayerExec::run(const ActParams& act, const Tensor& x) const {
  const std::size_t rows = x.dim(0), inner = x.dim(1), out = w_hat_.dim(0);
  if (inner != w_hat_.dim(1))
    throw DimensionError("layer " + std::to_string(layer_->index) + ": input " + shape_str(x.shape()) +
                         " does not match fan-in " + std::to_string(w_hat_.dim(1)));
  const DType dt = layer_->weight.dtype();
  if (is_float()) return linear(x, layer_->weight_matrix(), layer_->bias ? &*layer_->bias : nullptr);
  if (std::holds_alternative<FloatPassthrough>(act))
    return linear(x.as(dt), w_hat_, b_hat_ ? &*b_hat_ : nullptr);

  const double sw = codes_.weight_params.scale;
  const bool two_range = std::holds_alternative<TwoRangeParams>(act);
  double s_neg = 0.0, s_pos = 0.0;
  std::int64_t zx = 0;
  std::vector<double> xneg(rows * inner, 0.0), xpos(rows * inner, 0.0);
  std::vector<std::int32_t> xcodes(rows * inner);
  double max_code = 0.0;
  if (two_range) {
    const auto& p = std::get<TwoRangeParams>(act);
    validate(p);
    s_neg = p.scale_neg;
    s_pos = p.scale_pos;
    for (std::size_t i = 0; i < rows * inner; ++i) {
      const std::int32_t q = two_range_quantize_value(x[i], p);
      xcodes[i] = q;
      (q < 0 ? xneg[i] : xpos[i]) = q;
      max_code = std::max(max_code, std::abs(static_cast<double>(q)));
    }
  } else {
    const auto& p = std::get<AffineParams>(act);
    validate(p);
    s_pos = p.scale;
    zx = p.zero_point;
    for (std::size_t i = 0; i < rows * inner; ++i) {
      const std::int32_t q = quantize_value(x[i], p);
      xcodes[i] = q;
      xpos[i] = static_cast<double>(static_cast<std::int64_t>(q) - zx);
      max_code = std::max(max_code, std::abs(xpos[i]));
    }
  }
  const auto bias_acc = bias_accumulator(s_pos);
  const double max_w = std::ldexp(1.0, bits_ - 1);
  const bool exact_double = max_code * max_w * static_cast<double>(inner) + 2147483648.0 < kExactDoubleBound;

  std::vector<double> y(rows * out);
  if (exact_double) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t o = 0; o < out; ++o) {
        const double* wrow = w_codes_.data() + o * inner;
        const double acc_pos = dot4(xpos.data() + i * inner, wrow, inner) + (bias_acc.empty() ? 0.0 : bias_acc[o]);
        const double acc_neg = two_range ? dot4(xneg.data() + i * inner, wrow, inner) : 0.0;
        y[i * out + o] = two_range ? sw * (s_neg * acc_neg + s_pos * acc_pos) : s_pos * sw * acc_pos;
      }
  } else {
    const auto acc = int_linear_accumulate(xcodes, codes_.weight.data, rows, inner, out, zx, two_range);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t o = 0; o < out; ++o) {
        const std::size_t k = i * out + o;
        const double pos = static_cast<double>(acc.pos[k]) + (bias_acc.empty() ? 0.0 : bias_acc[o]);
        y[k] = two_range ? sw * (s_neg * static_cast<double>(acc.neg[k]) + s_pos * pos) : s_pos * sw * pos;
      }
  }
  return Tensor({rows, out}, std::move(y), dt);
}

std::uint64_t QuantizedModel::weight_payload_bits() const {
  std::uint64_t bits = 0;
  for (const auto& l : graph.layers)
    bits += static_cast<std::uint64_t>(plan.bits.at(l.index)) * l.param_count();
  return bits;
}

bool input_is_post_gelu(const ModelGraph& model, std::size_t layer) {
  const auto& l = model.layers.at(layer);
  if (l.kind == LayerKind::FFN2) return true;
  return l.kind == LayerKind::Conv1d && layer > 0 && model.layers[layer - 1].kind == LayerKind::Conv1d &&
         model.layers[layer - 1].activation == Activation::gelu;
}

void finalize_quantized_model(QuantizedModel& qm) {
  for (auto& ql : qm.layers) {
    LayerSpec& spec = qm.graph.layers.at(ql.index);
    if (ql.bits == kFloatBits) {
      ql.act = FloatPassthrough{};
      ql.bias_acc.clear();
      continue;
    }
    spec.weight = dequantize(ql.codes.weight, ql.codes.weight_params, spec.weight.dtype()).reshaped(spec.weight.shape());
    if (spec.bias && ql.codes.bias)
      spec.bias = dequantize(*ql.codes.bias, ql.codes.bias_params, spec.bias->dtype());
    double sx = 0.0;
    if (const auto* a = std::get_if<AffineParams>(&ql.act)) sx = a->scale;
    if (const auto* t = std::get_if<TwoRangeParams>(&ql.act)) sx = t->scale_pos;
    ql.bias_acc = (sx > 0.0 && spec.bias) ? bias_to_accumulator(*spec.bias, sx, ql.codes.weight_params.scale)
                                          : std::vector<std::int64_t>{};
  }
}

QuantizedModel quantize_model(const ModelGraph& model, const sens::BitPlan& plan,
                              const std::vector<ActParams>& act_params) {
  const std::size_t L = model.num_layers();
  if (plan.bits.size() != L)
    throw AssemblyError("bit plan covers " + std::to_string(plan.bits.size()) + " layers, model has " +
                        std::to_string(L));
  if (act_params.size() != L)
    throw AssemblyError("missing activation parameters: got " + std::to_string(act_params.size()) +
                        " entries for " + std::to_string(L) + " layers");
  QuantizedModel qm;
  qm.graph = model;
  qm.source_fingerprint = model_fingerprint(model);
  qm.plan = plan;
  for (std::size_t l = 0; l < L; ++l) {
    QuantizedLayer ql;
    ql.index = static_cast<int>(l);
    ql.bits = model.layers[l].quantizable ? plan.bits[l] : kFloatBits;
    if (ql.bits < 1 || ql.bits > kFloatBits)
      throw AssemblyError("layer " + std::to_string(l) + ": bit depth out of range");
    if (ql.bits != kFloatBits) {
      ql.codes = quantize_layer_weights(model.layers[l], ql.bits);
      ql.act = act_params[l];
    }
    qm.layers.push_back(std::move(ql));
  }
  finalize_quantized_model(qm);
  return qm;
}

ForwardResult run_quantized(const QuantizedModel& qm, const Tensor& x) {
  std::vector<QuantLayerExec> execs;
  execs.reserve(qm.layers.size());
  for (const auto& ql : qm.layers) {
    if (ql.bits == kFloatBits) execs.emplace_back(qm.graph.layers.at(ql.index), kFloatBits);
    else execs.emplace_back(qm.graph.layers.at(ql.index), ql.codes);
  }
  auto hook = [&](Tape& tape, const LayerSpec& layer, NodeId input) {
    const auto& ql = qm.layers.at(layer.index);
    return tape.constant(execs.at(layer.index).run(ql.act, tape.value(input)));
  };
  return forward_with_tape(qm.graph, x, hook);
}

}  // namespace myq::quant
