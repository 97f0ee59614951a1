// SPDX-License-Identifier: Apache-2.0
#include "myq/tape.hpp"

#include <cmath>

#include "myq/error.hpp"

namespace myq {

const Tensor& TapeGradients::node(NodeId id) const {
  if (id >= nodes.size() || !nodes[id]) throw UsageError("no gradient reached node " + std::to_string(id));
  return *nodes[id];
}

NodeId Tape::push(Tensor value, std::vector<NodeId> inputs, BackwardFn fn) {
  for (auto in : inputs)
    if (in >= nodes_.size()) throw UsageError("tape input refers to an unknown node");
  nodes_.push_back({std::move(value), std::move(inputs), std::move(fn)});
  return nodes_.size() - 1;
}

NodeId Tape::input(Tensor value) { return push(std::move(value), {}, {}); }
NodeId Tape::constant(Tensor value) { return push(std::move(value), {}, {}); }

NodeId Tape::linear(NodeId x, const Tensor& weight, const Tensor* bias) {
  Tensor y = myq::linear(value(x), weight, bias);
  return push(std::move(y), {x}, [weight](const Tape&, const Tensor& g) {
    // dX = G W
    return std::vector<Tensor>{myq::matmul(g, weight)};
  });
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  Tensor y = myq::matmul(value(a), value(b));
  return push(std::move(y), {a, b}, [a, b](const Tape& t, const Tensor& g) {
    return std::vector<Tensor>{myq::matmul(g, myq::transpose(t.value(b))),
                               myq::matmul(myq::transpose(t.value(a)), g)};
  });
}

NodeId Tape::transpose(NodeId x) {
  return push(myq::transpose(value(x)), {x}, [](const Tape&, const Tensor& g) {
    return std::vector<Tensor>{myq::transpose(g)};
  });
}

NodeId Tape::add(NodeId a, NodeId b) {
  return push(myq::add(value(a), value(b)), {a, b},
              [](const Tape&, const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

NodeId Tape::mul(NodeId a, NodeId b) {
  return push(myq::mul(value(a), value(b)), {a, b}, [a, b](const Tape& t, const Tensor& g) {
    return std::vector<Tensor>{myq::mul(g, t.value(b)), myq::mul(g, t.value(a))};
  });
}

NodeId Tape::scale(NodeId x, double s) {
  return push(myq::scale(value(x), s), {x}, [s](const Tape&, const Tensor& g) {
    return std::vector<Tensor>{myq::scale(g, s)};
  });
}

NodeId Tape::gelu(NodeId x) {
  return push(myq::gelu(value(x)), {x}, [x](const Tape& t, const Tensor& g) {
    const Tensor& in = t.value(x);
    std::vector<double> d(in.numel());
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double v = in[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
      d[i] = g[i] * (cdf + v * pdf);
    }
    return std::vector<Tensor>{Tensor(in.shape(), std::move(d), g.dtype())};
  });
}

NodeId Tape::softmax_rows(NodeId x) {
  const NodeId self = nodes_.size();
  return push(myq::softmax(value(x), -1), {x}, [self](const Tape& t, const Tensor& g) {
    const Tensor& y = t.value(self);
    const std::size_t n = y.shape().back();
    std::vector<double> d(y.numel());
    for (std::size_t r = 0; r < y.numel() / n; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) d[r * n + j] = y[r * n + j] * (g[r * n + j] - dot);
    }
    return std::vector<Tensor>{Tensor(y.shape(), std::move(d), g.dtype())};
  });
}

NodeId Tape::layernorm(NodeId x, const Tensor& gamma, const Tensor& beta, double eps) {
  return push(myq::layernorm(value(x), gamma, beta, eps), {x},
              [x, gamma, eps](const Tape& t, const Tensor& g) {
                const Tensor& in = t.value(x);
                const std::size_t n = in.shape().back();
                const double nn = static_cast<double>(n);
                std::vector<double> d(in.numel());
                std::vector<double> xhat(n), gh(n);
                for (std::size_t r = 0; r < in.numel() / n; ++r) {
                  double mean = 0.0, var = 0.0;
                  for (std::size_t j = 0; j < n; ++j) mean += in[r * n + j];
                  mean /= nn;
                  for (std::size_t j = 0; j < n; ++j) var += (in[r * n + j] - mean) * (in[r * n + j] - mean);
                  var /= nn;
                  const double inv = 1.0 / std::sqrt(var + eps);
                  double sum_gh = 0.0, sum_gh_xhat = 0.0;
                  for (std::size_t j = 0; j < n; ++j) {
                    xhat[j] = (in[r * n + j] - mean) * inv;
                    gh[j] = g[r * n + j] * gamma[j];
                    sum_gh += gh[j];
                    sum_gh_xhat += gh[j] * xhat[j];
                  }
                  for (std::size_t j = 0; j < n; ++j)
                    d[r * n + j] = inv * (gh[j] - sum_gh / nn - xhat[j] * sum_gh_xhat / nn);
                }
                return std::vector<Tensor>{Tensor(in.shape(), std::move(d), g.dtype())};
              });
}

NodeId Tape::im2col(NodeId x, std::size_t kernel, std::size_t stride) {
  const Shape in_shape = value(x).shape();
  return push(myq::im2col(value(x), kernel, stride), {x},
              [in_shape, kernel, stride](const Tape&, const Tensor& g) {
                const std::size_t c_in = in_shape[0], t = in_shape[1];
                const std::size_t t_out = g.dim(0), cols = g.dim(1);
                std::vector<double> d(c_in * t, 0.0);
                for (std::size_t p = 0; p < t_out; ++p)
                  for (std::size_t c = 0; c < c_in; ++c)
                    for (std::size_t j = 0; j < kernel; ++j)
                      d[c * t + p * stride + j] += g[p * cols + c * kernel + j];
                return std::vector<Tensor>{Tensor(in_shape, std::move(d), g.dtype())};
              });
}

NodeId Tape::slice_cols(NodeId x, std::size_t begin, std::size_t end) {
  const Shape in_shape = value(x).shape();
  return push(myq::slice_cols(value(x), begin, end), {x},
              [in_shape, begin, end](const Tape&, const Tensor& g) {
                const std::size_t r = in_shape[0], c = in_shape[1], w = end - begin;
                std::vector<double> d(r * c, 0.0);
                for (std::size_t i = 0; i < r; ++i)
                  for (std::size_t j = 0; j < w; ++j) d[i * c + begin + j] = g[i * w + j];
                return std::vector<Tensor>{Tensor(in_shape, std::move(d), g.dtype())};
              });
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
  std::vector<Tensor> vals;
  std::vector<std::size_t> widths;
  for (auto p : parts) {
    vals.push_back(value(p));
    widths.push_back(value(p).dim(1));
  }
  return push(myq::concat_cols(vals), parts, [widths](const Tape&, const Tensor& g) {
    std::vector<Tensor> out;
    std::size_t off = 0;
    for (auto w : widths) {
      out.push_back(myq::slice_cols(g, off, off + w));
      off += w;
    }
    return out;
  });
}

NodeId Tape::cross_entropy(NodeId logits, const std::vector<std::size_t>& labels) {
  const Tensor& z = value(logits);
  if (z.ndim() != 2 || z.dim(0) != labels.size())
    throw DimensionError("cross_entropy: labels do not match logits " + shape_str(z.shape()));
  const Tensor p = myq::softmax(z, -1);
  const std::size_t n = z.dim(0), v = z.dim(1);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] >= v) throw DimensionError("cross_entropy: label out of range");
    loss -= std::log(std::max(p[r * v + labels[r]], 1e-300));
  }
  loss /= static_cast<double>(n);
  return push(Tensor({1}, {loss}, DType::f64), {logits},
              [p, labels, n, v](const Tape&, const Tensor& g) {
                std::vector<double> d(p.values());
                for (std::size_t r = 0; r < n; ++r) d[r * v + labels[r]] -= 1.0;
                const double s = g[0] / static_cast<double>(n);
                for (auto& x : d) x *= s;
                return std::vector<Tensor>{Tensor(p.shape(), std::move(d), DType::f64)};
              });
}

void Tape::mark_layer_output(int layer, NodeId node) {
  if (!layer_outputs_.emplace(layer, node).second)
    throw UsageError("layer " + std::to_string(layer) + " already has an output node");
}

void Tape::mark_layer_input(int layer, NodeId node) { layer_inputs_[layer] = node; }

TapeGradients Tape::backward(NodeId out, const Tensor& seed) {
  if (consumed_) throw UsageError("tape already consumed by a previous backward pass");
  if (out >= nodes_.size()) throw UsageError("backward: unknown output node");
  if (seed.shape() != nodes_[out].value.shape())
    throw DimensionError("backward: seed " + shape_str(seed.shape()) + " does not match output " +
                         shape_str(nodes_[out].value.shape()));
  consumed_ = true;

  TapeGradients result;
  auto& grads = result.nodes;
  grads.assign(nodes_.size(), std::nullopt);
  grads[out] = seed.as(DType::f64);
  for (NodeId id = out + 1; id-- > 0;) {
    if (!grads[id] || !nodes_[id].backward) continue;
    auto in_grads = nodes_[id].backward(*this, *grads[id]);
    for (std::size_t k = 0; k < in_grads.size(); ++k) {
      const NodeId src = nodes_[id].inputs[k];
      Tensor gk = in_grads[k].as(DType::f64);
      grads[src] = grads[src] ? myq::add(*grads[src], gk) : std::move(gk);
    }
  }
  for (const auto& [layer, node] : layer_outputs_) {
    if (grads[node]) result.layers.emplace(layer, *grads[node]);
    else result.layers.emplace(layer, Tensor::zeros(nodes_[node].value.shape()));
  }
  return result;
}

}  // namespace myq
