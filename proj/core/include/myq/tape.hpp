// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "myq/tensor.hpp"

namespace myq {

using NodeId = std::size_t;

class Tape;

/// Gradients produced by Tape::backward.
struct TapeGradients {
  std::map<int, Tensor> layers;              // layer index -> dL/do_l
  std::vector<std::optional<Tensor>> nodes;  // node id -> dL/dnode (if reached)

  const Tensor& node(NodeId id) const;
};

/// Records a forward computation in topological order so that gradients of a
/// scalar (or seeded) loss can be propagated back to every recorded node.
/// Weights enter as constants; gradients flow only through activations.
class Tape {
 public:
  NodeId input(Tensor value);
  NodeId constant(Tensor value);

  NodeId linear(NodeId x, const Tensor& weight, const Tensor* bias);
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId x, double s);
  NodeId gelu(NodeId x);
  NodeId softmax_rows(NodeId x);
  NodeId layernorm(NodeId x, const Tensor& gamma, const Tensor& beta, double eps);
  NodeId im2col(NodeId x, std::size_t kernel, std::size_t stride);
  NodeId slice_cols(NodeId x, std::size_t begin, std::size_t end);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  /// Mean per-row cross-entropy of logits[n x v] against integer labels.
  NodeId cross_entropy(NodeId logits, const std::vector<std::size_t>& labels);

  /// Associates a node with a named layer output (or input).
  void mark_layer_output(int layer, NodeId node);
  void mark_layer_input(int layer, NodeId node);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::map<int, NodeId>& layer_outputs() const noexcept { return layer_outputs_; }
  const std::map<int, NodeId>& layer_inputs() const noexcept { return layer_inputs_; }

  /// Propagates seed (the gradient at `out`) back through the tape. A tape
  /// can be consumed once; a second call throws UsageError.
  TapeGradients backward(NodeId out, const Tensor& seed);

 private:
  using BackwardFn = std::function<std::vector<Tensor>(const Tape&, const Tensor&)>;
  struct Node {
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;  // empty for leaves
  };

  NodeId push(Tensor value, std::vector<NodeId> inputs, BackwardFn fn);

  std::vector<Node> nodes_;
  std::map<int, NodeId> layer_outputs_;
  std::map<int, NodeId> layer_inputs_;
  bool consumed_ = false;
};

}  // namespace myq
