// SPDX-License-Identifier: Apache-2.0
#include "myq/model.hpp"

#include <cmath>
#include <random>

#include "myq/error.hpp"

namespace myq {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv1d: return "Conv1d";
    case LayerKind::Linear: return "Linear";
    case LayerKind::AttnQ: return "AttnQ";
    case LayerKind::AttnK: return "AttnK";
    case LayerKind::AttnV: return "AttnV";
    case LayerKind::AttnOut: return "AttnOut";
    case LayerKind::FFN1: return "FFN1";
    case LayerKind::FFN2: return "FFN2";
  }
  return "?";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::none: return "none";
    case Activation::gelu: return "gelu";
    case Activation::softmax_context: return "softmax-context";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::Conv1d, LayerKind::Linear, LayerKind::AttnQ, LayerKind::AttnK,
                 LayerKind::AttnV, LayerKind::AttnOut, LayerKind::FFN1, LayerKind::FFN2})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown layer kind '" + s + "'");
}

Activation activation_from_string(const std::string& s) {
  for (auto a : {Activation::none, Activation::gelu, Activation::softmax_context})
    if (to_string(a) == s) return a;
  throw ConfigError("unknown activation tag '" + s + "'");
}

Tensor LayerSpec::weight_matrix() const {
  if (kind == LayerKind::Conv1d) return weight.reshaped({weight.dim(0), weight.dim(1) * weight.dim(2)});
  return weight;
}

std::size_t LayerSpec::fan_in() const {
  return kind == LayerKind::Conv1d ? weight.dim(1) * weight.dim(2) : weight.dim(1);
}

std::size_t LayerSpec::param_count() const {
  return weight.numel() + (bias ? bias->numel() : 0);
}

const NormParams& ModelGraph::norm(const std::string& n) const {
  for (const auto& p : norms)
    if (p.name == n) return p;
  throw AssemblyError("model has no layernorm named '" + n + "'");
}

void ToyConfig::validate() const {
  if (in_channels == 0 || hidden == 0 || heads == 0 || ffn_dim == 0 || vocab == 0 || frames == 0)
    throw ConfigError("toy config: all sizes must be positive");
  if (hidden % heads != 0)
    throw ConfigError("toy config: hidden (" + std::to_string(hidden) +
                      ") must be divisible by heads (" + std::to_string(heads) + ")");
  if (conv_stem) {
    if (conv_kernel == 0 || conv_stride == 0) throw ConfigError("toy config: bad conv kernel/stride");
    if (frames < conv_kernel) throw ConfigError("toy config: frames shorter than conv kernel");
    const std::size_t t1 = (frames - conv_kernel) / conv_stride + 1;
    if (t1 < conv_kernel) throw ConfigError("toy config: second conv kernel exceeds its input");
  }
}

std::vector<std::size_t> param_count(const ModelGraph& model) {
  std::vector<std::size_t> counts;
  counts.reserve(model.layers.size());
  for (const auto& l : model.layers) counts.push_back(l.param_count());
  return counts;
}

std::size_t norm_param_count(const ModelGraph& model) {
  std::size_t n = 0;
  for (const auto& p : model.norms) n += p.gamma.numel() + p.beta.numel();
  return n;
}

std::size_t toy_param_count(const ToyConfig& c) {
  const std::size_t h = c.hidden, f = c.ffn_dim, k = c.conv_kernel;
  const std::size_t stem = c.conv_stem ? c.in_channels * h * k + h + h * h * k + h
                                       : c.in_channels * h + h;
  const std::size_t block = 4 * (h * h + h) + (h * f + f) + (f * h + h);
  return stem + c.layers * block + h * c.vocab + c.vocab;
}

namespace {

Tensor gaussian(Shape shape, double stddev, std::mt19937_64& rng, DType dtype) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), dtype);
}

}  // namespace

ModelGraph build_toy_encoder(const ToyConfig& config, std::uint64_t seed) {
  config.validate();
  ModelGraph m;
  m.name = "toy-encoder";
  m.config = config;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  const DType dt = config.dtype;
  const std::size_t h = config.hidden;

  auto add_layer = [&](LayerKind kind, Shape wshape, std::size_t fan_in, Activation act,
                       std::size_t stride = 1) {
    LayerSpec l;
    l.index = static_cast<int>(m.layers.size());
    l.kind = kind;
    const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
    const std::size_t out = wshape[0];
    l.weight = gaussian(std::move(wshape), sd, rng, dt);
    l.bias = gaussian({out}, sd, rng, dt);
    l.activation = act;
    l.stride = stride;
    m.layers.push_back(std::move(l));
  };
  auto add_norm = [&](std::string name) {
    m.norms.push_back({std::move(name), Tensor::full({h}, 1.0, dt), Tensor::zeros({h}, dt)});
  };

  if (config.conv_stem) {
    const std::size_t k = config.conv_kernel;
    add_layer(LayerKind::Conv1d, {h, config.in_channels, k}, config.in_channels * k,
              Activation::gelu, config.conv_stride);
    add_layer(LayerKind::Conv1d, {h, h, k}, h * k, Activation::gelu, config.conv_stride);
  } else {
    add_layer(LayerKind::Linear, {h, config.in_channels}, config.in_channels, Activation::none);
  }
  add_norm("stem_ln");
  for (std::size_t b = 0; b < config.layers; ++b) {
    add_norm("block" + std::to_string(b) + ".ln1");
    add_layer(LayerKind::AttnQ, {h, h}, h, Activation::none);
    add_layer(LayerKind::AttnK, {h, h}, h, Activation::none);
    add_layer(LayerKind::AttnV, {h, h}, h, Activation::softmax_context);
    add_layer(LayerKind::AttnOut, {h, h}, h, Activation::none);
    add_norm("block" + std::to_string(b) + ".ln2");
    add_layer(LayerKind::FFN1, {config.ffn_dim, h}, h, Activation::gelu);
    add_layer(LayerKind::FFN2, {h, config.ffn_dim}, config.ffn_dim, Activation::none);
  }
  add_norm("final_ln");
  add_layer(LayerKind::Linear, {config.vocab, h}, h, Activation::none);
  return m;
}

NodeId fp_layer(Tape& tape, const LayerSpec& layer, NodeId input_rows) {
  const Tensor w = layer.weight_matrix();
  return tape.linear(input_rows, w, layer.bias ? &*layer.bias : nullptr);
}

namespace {

constexpr double kLnEps = 1e-5;

class GraphRunner {
 public:
  GraphRunner(const ModelGraph& m, ForwardResult& r, const LayerHook& hook)
      : m_(m), r_(r), hook_(hook) {}

  NodeId apply(std::size_t idx, NodeId input_rows, LayerKind expect) {
    if (idx >= m_.layers.size() || m_.layers[idx].kind != expect)
      throw DimensionError("layer " + std::to_string(idx) + ": graph structure does not match config (expected " +
                           to_string(expect) + ")");
    const LayerSpec& layer = m_.layers[idx];
    const Tensor& in = r_.tape.value(input_rows);
    if (in.ndim() != 2 || in.dim(1) != layer.fan_in())
      throw DimensionError("layer " + std::to_string(idx) + ": input " + shape_str(in.shape()) +
                           " does not match fan-in " + std::to_string(layer.fan_in()));
    const std::size_t rows = in.dim(0);  // the hook may grow the tape and move `in`
    r_.tape.mark_layer_input(layer.index, input_rows);
    const NodeId out = hook_(r_.tape, layer, input_rows);
    const Tensor& o = r_.tape.value(out);
    if (o.ndim() != 2 || o.dim(0) != rows || o.dim(1) != layer.out_features())
      throw DimensionError("layer " + std::to_string(idx) + ": hook produced " + shape_str(o.shape()));
    r_.tape.mark_layer_output(layer.index, out);
    return out;
  }

  NodeId norm(NodeId x, const std::string& name) {
    const auto& p = m_.norm(name);
    return r_.tape.layernorm(x, p.gamma, p.beta, kLnEps);
  }

  NodeId run(const Tensor& x) {
    Tape& t = r_.tape;
    const ToyConfig& c = m_.config;
    if (x.shape() != m_.input_shape())
      throw DimensionError("input " + shape_str(x.shape()) + " does not match model input " +
                           shape_str(m_.input_shape()));
    std::size_t li = 0;
    NodeId h;
    NodeId cur = t.input(x);
    if (c.conv_stem) {
      for (int conv = 0; conv < 2; ++conv) {
        const LayerSpec& l = m_.layers.at(li);
        if (l.kind != LayerKind::Conv1d) throw DimensionError("layer " + std::to_string(li) + ": expected Conv1d");
        const NodeId patches = t.im2col(cur, l.weight.dim(2), l.stride);
        const NodeId o = t.gelu(apply(li++, patches, LayerKind::Conv1d));
        cur = conv == 0 ? t.transpose(o) : o;  // channel-major for the next conv
      }
      h = cur;
    } else {
      h = apply(li++, t.transpose(cur), LayerKind::Linear);
    }
    h = norm(h, "stem_ln");

    const std::size_t dh = c.hidden / c.heads;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t b = 0; b < c.layers; ++b) {
      const std::string pre = "block" + std::to_string(b);
      const NodeId a = norm(h, pre + ".ln1");
      const NodeId q = apply(li++, a, LayerKind::AttnQ);
      const NodeId k = apply(li++, a, LayerKind::AttnK);
      const NodeId v = apply(li++, a, LayerKind::AttnV);
      std::vector<NodeId> ctx;
      for (std::size_t hd = 0; hd < c.heads; ++hd) {
        const NodeId qh = t.slice_cols(q, hd * dh, (hd + 1) * dh);
        const NodeId kh = t.slice_cols(k, hd * dh, (hd + 1) * dh);
        const NodeId vh = t.slice_cols(v, hd * dh, (hd + 1) * dh);
        const NodeId s = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt_d);
        ctx.push_back(t.matmul(t.softmax_rows(s), vh));
      }
      const NodeId att = apply(li++, t.concat_cols(ctx), LayerKind::AttnOut);
      h = t.add(h, att);
      const NodeId f = norm(h, pre + ".ln2");
      const NodeId u = t.gelu(apply(li++, f, LayerKind::FFN1));
      h = t.add(h, apply(li++, u, LayerKind::FFN2));
    }
    h = norm(h, "final_ln");
    const NodeId logits = apply(li++, h, LayerKind::Linear);
    if (li != m_.layers.size())
      throw DimensionError("model has " + std::to_string(m_.layers.size() - li) + " unused layers");
    return logits;
  }

 private:
  const ModelGraph& m_;
  ForwardResult& r_;
  const LayerHook& hook_;
};

}  // namespace

ForwardResult forward_with_tape(const ModelGraph& model, const Tensor& x, const LayerHook& hook) {
  ForwardResult r;
  GraphRunner runner(model, r, hook);
  r.logits = runner.run(x.as(model.config.dtype));
  r.layer_outputs.reserve(model.layers.size());
  for (const auto& [l, node] : r.tape.layer_outputs()) r.layer_outputs.push_back(r.tape.value(node));
  for (const auto& [l, node] : r.tape.layer_inputs()) r.layer_inputs.push_back(r.tape.value(node));
  return r;
}

Tensor forward(const ModelGraph& model, const Tensor& x) {
  auto r = forward_with_tape(model, x);
  return r.logits_value();
}

void validate_graph(const ModelGraph& model) {
  model.config.validate();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    if (l.index != static_cast<int>(i))
      throw DimensionError("layer indices must be consecutive; found " + std::to_string(l.index) +
                           " at position " + std::to_string(i));
    const std::size_t expect_rank = l.kind == LayerKind::Conv1d ? 3 : 2;
    if (l.weight.ndim() != expect_rank)
      throw DimensionError("layer " + std::to_string(i) + ": " + to_string(l.kind) + " weight has shape " +
                           shape_str(l.weight.shape()));
    if (l.bias && l.bias->numel() != l.out_features())
      throw DimensionError("layer " + std::to_string(i) + ": bias does not match weight");
  }
  forward(model, Tensor::zeros(model.input_shape(), model.config.dtype));
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  const std::size_t v = logits.shape().back();
  std::vector<std::size_t> out(logits.numel() / v);
  for (std::size_t r = 0; r < out.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < v; ++j)
      if (logits[r * v + j] > logits[r * v + best]) best = j;
    out[r] = best;
  }
  return out;
}

}  // namespace myq
