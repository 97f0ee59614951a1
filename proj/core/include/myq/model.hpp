// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "myq/tape.hpp"
#include "myq/tensor.hpp"

namespace myq {

enum class LayerKind { Conv1d, Linear, AttnQ, AttnK, AttnV, AttnOut, FFN1, FFN2 };

/// Nonlinearity that follows the layer's output before its consumer.
enum class Activation { none, gelu, softmax_context };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
LayerKind layer_kind_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

struct LayerSpec {
  int index = 0;
  LayerKind kind = LayerKind::Linear;
  Tensor weight;  // Linear family: out x in; Conv1d: c_out x c_in x k
  std::optional<Tensor> bias;
  Activation activation = Activation::none;
  bool quantizable = true;
  std::size_t stride = 1;  // Conv1d only

  /// Weight viewed as [out x fan_in] (Conv1d kernels are flattened).
  Tensor weight_matrix() const;
  std::size_t out_features() const { return weight.dim(0); }
  std::size_t fan_in() const;
  /// |W_l|: weight elements plus bias elements.
  std::size_t param_count() const;
};

struct NormParams {
  std::string name;
  Tensor gamma;
  Tensor beta;
};

struct ToyConfig {
  std::size_t in_channels = 16;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;     // transformer blocks
  std::size_t ffn_dim = 256;
  std::size_t vocab = 32;
  std::size_t frames = 64;    // input length T
  bool conv_stem = true;
  std::size_t conv_kernel = 3;
  std::size_t conv_stride = 2;
  DType dtype = DType::f32;

  void validate() const;
  bool operator==(const ToyConfig&) const = default;
};

/// Ordered layer list of the network being compressed, plus structure.
///
/// The graph is a conv stem (two Conv1d+GELU layers, or a single Linear input
/// projection when conv_stem is false), a layernorm, `layers` pre-norm
/// transformer blocks (AttnQ, AttnK, AttnV, AttnOut, FFN1-GELU-FFN2) and a
/// final layernorm followed by a Linear classifier over `vocab` tokens.
struct ModelGraph {
  std::string name;
  ToyConfig config;
  std::uint64_t seed = 0;
  std::vector<LayerSpec> layers;
  std::vector<NormParams> norms;  // excluded from budget accounting

  Shape input_shape() const { return {config.in_channels, config.frames}; }
  std::size_t num_layers() const { return layers.size(); }
  const NormParams& norm(const std::string& name) const;
};

/// Validates structure: consecutive indices, kind-consistent shapes and a
/// forward chain that type-checks for the declared input shape.
void validate_graph(const ModelGraph& model);

std::vector<std::size_t> param_count(const ModelGraph& model);
/// Total of layernorm gamma/beta elements (reported separately from |W|).
std::size_t norm_param_count(const ModelGraph& model);

/// Closed-form parameter count of build_toy_encoder(config):
///   stem   = c_in*h*k + h + h*h*k + h           (conv stem)
///          | c_in*h + h                          (linear projection)
///   block  = 4*(h*h + h) + (h*f + f) + (f*h + h)
///   head   = h*v + v
///   total  = stem + layers*block + head
std::size_t toy_param_count(const ToyConfig& config);

ModelGraph build_toy_encoder(const ToyConfig& config, std::uint64_t seed);

/// Maps the input rows of a quantizable layer to its output rows. Input rows
/// are [n x fan_in] (im2col patches for Conv1d); outputs are [n x out].
using LayerHook = std::function<NodeId(Tape&, const LayerSpec&, NodeId)>;

NodeId fp_layer(Tape& tape, const LayerSpec& layer, NodeId input_rows);

struct ForwardResult {
  Tape tape;
  NodeId logits = 0;
  std::vector<Tensor> layer_outputs;  // o_l per layer, graph order
  std::vector<Tensor> layer_inputs;   // X_l rows per layer
  const Tensor& logits_value() const { return tape.value(logits); }
};

/// Runs the graph on x[c_in x T], recording every op on a fresh tape.
ForwardResult forward_with_tape(const ModelGraph& model, const Tensor& x,
                                const LayerHook& hook = fp_layer);

Tensor forward(const ModelGraph& model, const Tensor& x);

/// Per-frame argmax over logits[n x v].
std::vector<std::size_t> argmax_rows(const Tensor& logits);

}  // namespace myq
