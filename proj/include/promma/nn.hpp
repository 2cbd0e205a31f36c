// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "promma/graph.hpp"
#include "promma/ops.hpp"
#include "promma/rng.hpp"

// Parameterised building blocks. Each block owns its Parameters by value, so
// copying a block deep-copies its weights.
namespace promma::nn {

struct Linear {
  Parameter weight;  // [in x out]
  Parameter bias;    // [out]

  Linear() = default;
  // Xavier-uniform weight, zero bias.
  Linear(std::size_t in, std::size_t out, Rng& rng);
  static Linear zeros(std::size_t in, std::size_t out);
  static Linear identity(std::size_t n);

  std::size_t in_dim() const { return weight.value.shape()[0]; }
  std::size_t out_dim() const { return weight.value.shape()[1]; }

  Var operator()(Graph& g, Var x) { return ops::linear(x, g.param(weight), g.param(bias)); }
  void collect(ParamList& out, const std::string& prefix);
};

struct LayerNorm {
  Parameter gain;
  Parameter bias;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t n);

  Var operator()(Graph& g, Var x) { return ops::layer_norm(x, g.param(gain), g.param(bias)); }
  void collect(ParamList& out, const std::string& prefix);
};

// down(GELU(up(x)))
struct FeedForward {
  Linear up;
  Linear down;

  FeedForward() = default;
  FeedForward(std::size_t d, std::size_t hidden, Rng& rng) : up(d, hidden, rng), down(hidden, d, rng) {}

  Var operator()(Graph& g, Var x) { return down(g, ops::gelu(up(g, x))); }
  void collect(ParamList& out, const std::string& prefix);
};

// Pre-norm transformer block. With a context stream it is a cross-modal block
// (queries from x, keys/values from ctx); without one it is self-attention.
struct TransformerLayer {
  LayerNorm ln_q, ln_kv, ln_ff;
  Linear wq, wk, wv, wo;
  FeedForward ff;
  std::size_t heads = 1;

  TransformerLayer() = default;
  TransformerLayer(std::size_t d, std::size_t heads, std::size_t ff_hidden, Rng& rng);

  Var self(Graph& g, Var x, std::size_t key_offset = 0);
  Var cross(Graph& g, Var x, Var ctx);
  void collect(ParamList& out, const std::string& prefix);

 private:
  Var block(Graph& g, Var x, Var kv_in, std::size_t key_offset);
};

// Two-layer perceptron with GELU hidden activation, used by the evaluator and
// the regression heads.
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  Mlp(const std::vector<std::size_t>& sizes, Rng& rng);

  Var operator()(Graph& g, Var x);
  void collect(ParamList& out, const std::string& prefix);
};

Tensor random_normal(Shape shape, double stddev, Rng& rng);

}  // namespace promma::nn
