// SPDX-License-Identifier: Apache-2.0
// Finite-difference checks of tape gradients shared by unit and acceptance
// tests.
#pragma once

#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "myq/model.hpp"
#include "myq/tape.hpp"
#include "myq/tensor.hpp"
#include "oracles.hpp"

namespace gradcheck {

struct Result {
  std::string name;
  double max_rel_error = 0.0;
};

/// Builds y = op(inputs) on a tape given input node ids.
using TapeOp = std::function<myq::NodeId(myq::Tape&, const std::vector<myq::NodeId>&)>;
/// The same op on plain tensors.
using PlainOp = std::function<myq::Tensor(const std::vector<myq::Tensor>&)>;

/// Checks d(sum(c * op(x)))/dx_j for every input j against central
/// differences, where c is a fixed random weighting of the output.
inline Result check_op(const std::string& name, std::vector<myq::Tensor> inputs, const TapeOp& tape_op,
                       const PlainOp& plain_op, std::uint64_t seed, double h = 1e-2) {
  std::mt19937_64 rng(seed);
  const myq::Tensor y0 = plain_op(inputs);
  const myq::Tensor c = oracle::random_tensor(y0.shape(), rng, -1.0, 1.0);

  myq::Tape tape;
  std::vector<myq::NodeId> ids;
  for (const auto& x : inputs) ids.push_back(tape.input(x));
  const myq::NodeId out = tape_op(tape, ids);
  const auto grads = tape.backward(out, c);

  Result r{name, 0.0};
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    auto f = [&](const std::vector<double>& v) {
      auto in = inputs;
      in[j] = myq::Tensor(inputs[j].shape(), v);
      const auto y = plain_op(in);
      double s = 0.0;
      for (std::size_t i = 0; i < y.numel(); ++i) s += c[i] * y[i];
      return s;
    };
    const auto fd = oracle::central_differences(f, inputs[j].values(), h);
    r.max_rel_error = std::max(r.max_rel_error, oracle::max_rel_error(grads.node(ids[j]).values(), fd));
  }
  return r;
}

/// One result per differentiable tape op, on random inputs in [-2, 2].
inline std::vector<Result> check_all_ops(std::uint64_t seed) {
  using myq::NodeId;
  using myq::Tape;
  using myq::Tensor;
  std::mt19937_64 rng(seed);
  auto rt = [&](myq::Shape s) { return oracle::random_tensor(std::move(s), rng); };
  std::vector<Result> out;

  const Tensor w = rt({4, 5}), b = rt({4});
  out.push_back(check_op(
      "linear", {rt({3, 5})}, [&](Tape& t, const auto& id) { return t.linear(id[0], w, &b); },
      [&](const auto& x) { return myq::linear(x[0], w, &b); }, seed + 1));
  out.push_back(check_op(
      "matmul", {rt({3, 4}), rt({4, 2})}, [](Tape& t, const auto& id) { return t.matmul(id[0], id[1]); },
      [](const auto& x) { return myq::matmul(x[0], x[1]); }, seed + 2));
  out.push_back(check_op(
      "transpose", {rt({3, 4})}, [](Tape& t, const auto& id) { return t.transpose(id[0]); },
      [](const auto& x) { return myq::transpose(x[0]); }, seed + 3));
  out.push_back(check_op(
      "add", {rt({3, 4}), rt({3, 4})}, [](Tape& t, const auto& id) { return t.add(id[0], id[1]); },
      [](const auto& x) { return myq::add(x[0], x[1]); }, seed + 4));
  out.push_back(check_op(
      "mul", {rt({3, 4}), rt({3, 4})}, [](Tape& t, const auto& id) { return t.mul(id[0], id[1]); },
      [](const auto& x) { return myq::mul(x[0], x[1]); }, seed + 5));
  out.push_back(check_op(
      "scale", {rt({3, 4})}, [](Tape& t, const auto& id) { return t.scale(id[0], -0.7); },
      [](const auto& x) { return myq::scale(x[0], -0.7); }, seed + 6));
  out.push_back(check_op(
      "gelu", {rt({4, 6})}, [](Tape& t, const auto& id) { return t.gelu(id[0]); },
      [](const auto& x) { return myq::gelu(x[0]); }, seed + 7));
  out.push_back(check_op(
      "softmax_rows", {rt({3, 6})}, [](Tape& t, const auto& id) { return t.softmax_rows(id[0]); },
      [](const auto& x) { return myq::softmax(x[0], -1); }, seed + 8));
  const Tensor gamma = rt({6}), beta = rt({6});
  out.push_back(check_op(
      "layernorm", {rt({3, 6})}, [&](Tape& t, const auto& id) { return t.layernorm(id[0], gamma, beta, 1e-5); },
      [&](const auto& x) { return myq::layernorm(x[0], gamma, beta, 1e-5); }, seed + 9));
  out.push_back(check_op(
      "im2col", {rt({3, 9})}, [](Tape& t, const auto& id) { return t.im2col(id[0], 3, 2); },
      [](const auto& x) { return myq::im2col(x[0], 3, 2); }, seed + 10));
  out.push_back(check_op(
      "slice_cols", {rt({3, 7})}, [](Tape& t, const auto& id) { return t.slice_cols(id[0], 2, 5); },
      [](const auto& x) { return myq::slice_cols(x[0], 2, 5); }, seed + 11));
  out.push_back(check_op(
      "concat_cols", {rt({3, 2}), rt({3, 4})}, [](Tape& t, const auto& id) { return t.concat_cols({id[0], id[1]}); },
      [](const auto& x) { return myq::concat_cols({x[0], x[1]}); }, seed + 12));
  const std::vector<std::size_t> labels{2, 0, 4};
  out.push_back(check_op(
      "cross_entropy", {rt({3, 5})}, [&](Tape& t, const auto& id) { return t.cross_entropy(id[0], labels); },
      [&](const auto& x) {
        const auto p = myq::softmax(x[0], -1);
        double loss = 0.0;
        for (std::size_t r = 0; r < 3; ++r) loss -= std::log(p.at(r, labels[r]));
        return Tensor({1}, {loss / 3.0});
      },
      seed + 13));
  return out;
}

/// Three-layer network: o0 = x W0^T + b0, o1 = gelu(o0) W1^T + b1,
/// o2 = layernorm(o1) W2^T + b2, L = cross_entropy(o2, labels).
struct ThreeLayer {
  myq::Tensor x, w0, b0, w1, b1, w2, b2, gamma, beta;
  std::vector<std::size_t> labels;

  explicit ThreeLayer(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto rt = [&](myq::Shape s) { return oracle::random_tensor(std::move(s), rng); };
    x = rt({5, 6});
    w0 = rt({8, 6});
    b0 = rt({8});
    w1 = rt({7, 8});
    b1 = rt({7});
    w2 = rt({4, 7});
    b2 = rt({4});
    gamma = rt({7});
    beta = rt({7});
    labels = {0, 3, 1, 2, 3};
  }

  /// Loss with `delta` added to layer `layer`'s output (no delta when layer < 0).
  double loss(int layer, const myq::Tensor* delta) const {
    auto bump = [&](int l, myq::Tensor o) { return l == layer ? myq::add(o, *delta) : o; };
    const auto o0 = bump(0, myq::linear(x, w0, &b0));
    const auto o1 = bump(1, myq::linear(myq::gelu(o0), w1, &b1));
    const auto o2 = bump(2, myq::linear(myq::layernorm(o1, gamma, beta, 1e-5), w2, &b2));
    const auto p = myq::softmax(o2, -1);
    double l = 0.0;
    for (std::size_t r = 0; r < labels.size(); ++r) l -= std::log(p.at(r, labels[r]));
    return l / static_cast<double>(labels.size());
  }

  /// dL/do_l from the tape.
  std::map<int, myq::Tensor> tape_grads() const {
    myq::Tape t;
    const auto xi = t.input(x);
    const auto o0 = t.linear(xi, w0, &b0);
    t.mark_layer_output(0, o0);
    const auto o1 = t.linear(t.gelu(o0), w1, &b1);
    t.mark_layer_output(1, o1);
    const auto o2 = t.linear(t.layernorm(o1, gamma, beta, 1e-5), w2, &b2);
    t.mark_layer_output(2, o2);
    const auto loss = t.cross_entropy(o2, labels);
    return t.backward(loss, myq::Tensor({1}, {1.0})).layers;
  }

  myq::Shape output_shape(int layer) const {
    return layer == 0 ? myq::Shape{5, 8} : layer == 1 ? myq::Shape{5, 7} : myq::Shape{5, 4};
  }
};

/// Max relative error over every entry of every layer gradient.
inline double check_three_layer(std::uint64_t seed, double h = 1e-2) {
  const ThreeLayer net(seed);
  const auto grads = net.tape_grads();
  double worst = 0.0;
  for (int l = 0; l < 3; ++l) {
    const auto shape = net.output_shape(l);
    auto f = [&](const std::vector<double>& v) {
      const myq::Tensor d(shape, v);
      return net.loss(l, &d);
    };
    const auto fd = oracle::central_differences(f, std::vector<double>(myq::shape_numel(shape), 0.0), h);
    worst = std::max(worst, oracle::max_rel_error(grads.at(l).values(), fd));
  }
  return worst;
}

/// Hook that adds `delta` to the output of layer `layer`.
inline myq::LayerHook perturb_hook(int layer, const myq::Tensor& delta) {
  return [layer, &delta](myq::Tape& t, const myq::LayerSpec& spec, myq::NodeId in) {
    const myq::NodeId o = myq::fp_layer(t, spec, in);
    return spec.index == layer ? t.add(o, t.constant(delta)) : o;
  };
}

/// Mean cross-entropy of the model's logits against fixed labels.
inline double model_loss(const myq::ModelGraph& m, const myq::Tensor& x, const std::vector<std::size_t>& labels,
                         const myq::LayerHook& hook) {
  const auto r = myq::forward_with_tape(m, x, hook);
  const auto p = myq::softmax(r.logits_value(), -1);
  double l = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) l -= std::log(p.at(i, labels[i]));
  return l / static_cast<double>(labels.size());
}

/// Finite-difference dL/do_l for every layer of a model (layer outputs
/// perturbed through a hook), compared with the tape.
inline double check_model(const myq::ModelGraph& m, const myq::Tensor& x, double h = 1e-2) {
  auto fwd = myq::forward_with_tape(m, x);
  const auto labels = myq::argmax_rows(fwd.logits_value());
  const auto loss = fwd.tape.cross_entropy(fwd.logits, labels);
  const auto grads = fwd.tape.backward(loss, myq::Tensor({1}, {1.0}));
  double worst = 0.0;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const auto shape = fwd.layer_outputs[l].shape();
    auto f = [&](const std::vector<double>& v) {
      const myq::Tensor d(shape, v);
      return model_loss(m, x, labels, perturb_hook(static_cast<int>(l), d));
    };
    const auto fd = oracle::central_differences(f, std::vector<double>(myq::shape_numel(shape), 0.0), h);
    worst = std::max(worst, oracle::max_rel_error(grads.layers.at(static_cast<int>(l)).values(), fd));
  }
  return worst;
}

}  // namespace gradcheck
