// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/nn.hpp"

#include <cmath>

#include "promma/errors.hpp"

namespace promma::nn {

Tensor random_normal(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.normal(0.0, stddev);
  return t;
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  if (in == 0 || out == 0) throw ConfigError("Linear: zero-sized layer");
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w({in, out});
  for (double& v : w.values()) v = rng.uniform(-a, a);
  weight = Parameter(std::move(w));
  bias = Parameter(Tensor({out}));
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
  Linear l;
  l.weight = Parameter(Tensor({in, out}));
  l.bias = Parameter(Tensor({out}));
  return l;
}

Linear Linear::identity(std::size_t n) {
  Linear l = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) l.weight.value.at(i, i) = 1.0;
  return l;
}

void Linear::collect(ParamList& out, const std::string& prefix) {
  out.emplace_back(prefix + ".weight", &weight);
  out.emplace_back(prefix + ".bias", &bias);
}

LayerNorm::LayerNorm(std::size_t n) : gain(Tensor({n}, 1.0)), bias(Tensor({n})) {}

void LayerNorm::collect(ParamList& out, const std::string& prefix) {
  out.emplace_back(prefix + ".gain", &gain);
  out.emplace_back(prefix + ".bias", &bias);
}

void FeedForward::collect(ParamList& out, const std::string& prefix) {
  up.collect(out, prefix + ".up");
  down.collect(out, prefix + ".down");
}

TransformerLayer::TransformerLayer(std::size_t d, std::size_t h, std::size_t ff_hidden, Rng& rng)
    : ln_q(d),
      ln_kv(d),
      ln_ff(d),
      wq(d, d, rng),
      wk(d, d, rng),
      wv(d, d, rng),
      wo(d, d, rng),
      ff(d, ff_hidden, rng),
      heads(h) {
  if (h == 0 || d % h != 0) {
    throw ConfigError("TransformerLayer: d_model " + std::to_string(d) +
                      " not divisible by heads " + std::to_string(h));
  }
}

Var TransformerLayer::block(Graph& g, Var x, Var kv_in, std::size_t key_offset) {
  Var a = ops::attention(wq(g, x), wk(g, kv_in), wv(g, kv_in), heads, key_offset);
  return a;
}

Var TransformerLayer::self(Graph& g, Var x, std::size_t key_offset) {
  Var h = ln_q(g, x);
  Var a = block(g, h, h, key_offset);
  x = ops::add(x, wo(g, a));
  return ops::add(x, ff(g, ln_ff(g, x)));
}

Var TransformerLayer::cross(Graph& g, Var x, Var ctx) {
  Var h = ln_q(g, x);
  Var kv = ln_kv(g, ctx);
  Var a = block(g, h, kv, 0);
  x = ops::add(x, wo(g, a));
  return ops::add(x, ff(g, ln_ff(g, x)));
}

void TransformerLayer::collect(ParamList& out, const std::string& prefix) {
  ln_q.collect(out, prefix + ".ln_q");
  ln_kv.collect(out, prefix + ".ln_kv");
  ln_ff.collect(out, prefix + ".ln_ff");
  wq.collect(out, prefix + ".wq");
  wk.collect(out, prefix + ".wk");
  wv.collect(out, prefix + ".wv");
  wo.collect(out, prefix + ".wo");
  ff.collect(out, prefix + ".ff");
}

Mlp::Mlp(const std::vector<std::size_t>& sizes, Rng& rng) {
  if (sizes.size() < 2) throw ConfigError("Mlp: need at least input and output sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) layers.emplace_back(sizes[i], sizes[i + 1], rng);
}

Var Mlp::operator()(Graph& g, Var x) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](g, x);
    if (i + 1 < layers.size()) x = ops::gelu(x);
  }
  return x;
}

void Mlp::collect(ParamList& out, const std::string& prefix) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].collect(out, prefix + ".l" + std::to_string(i));
  }
}

}  // namespace promma::nn
