// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "grad_suite.hpp"

#include "promma/dpw.hpp"
#include "promma/mipd.hpp"
#include "promma/mme.hpp"
#include "promma/model.hpp"
#include "promma/mpdc.hpp"

namespace promma::testkit {

BackboneConfig tiny_backbone() {
  BackboneConfig c;
  c.d_model = 4;
  c.n_heads = 2;
  c.n_cross_layers = 1;
  c.n_self_layers = 1;
  c.ff_hidden = 6;
  c.dims = {3, 2, 3};
  c.lens = {4, 3, 5};
  return c;
}

ModalBundle random_bundle(const BackboneConfig& cfg, Rng& rng) {
  ModalBundle b;
  for (std::size_t m = 0; m < kModalities; ++m) {
    b.features[m] = random_tensor({cfg.lens[m], cfg.dims[m]}, rng);
  }
  b.label = rng.normal();
  return b;
}

void randomize(const ParamList& params, Rng& rng, double scale) {
  for (const auto& [name, p] : params) {
    for (double& v : p->value.values()) v = scale * rng.normal();
  }
}

namespace {

Parameter rand_param(Shape s, Rng& rng) { return Parameter(random_tensor(std::move(s), rng)); }

GradReport op_matmul(std::uint64_t seed) {
  Rng rng(seed);
  Parameter a = rand_param({3, 4}, rng), b = rand_param({4, 2}, rng);
  const Tensor r = random_tensor({3, 2}, rng);
  return grad_check(LossFn([&](Graph& g) { return probe(ops::matmul(g.param(a), g.param(b)), r); }),
                    {{"a", &a}, {"b", &b}});
}

GradReport op_conv1d(std::uint64_t seed) {
  Rng rng(seed);
  Parameter x = rand_param({5, 2}, rng), k = rand_param({3, 2, 3}, rng), b = rand_param({3}, rng);
  const Tensor r = random_tensor({5, 3}, rng);
  return grad_check(LossFn([&](Graph& g) {
                      return probe(ops::conv1d(g.param(x), g.param(k), g.param(b)), r);
                    }),
                    {{"x", &x}, {"kernel", &k}, {"bias", &b}});
}

GradReport op_attention(std::uint64_t seed, std::size_t lq, std::size_t lk, std::size_t offset) {
  Rng rng(seed);
  Parameter q = rand_param({lq, 4}, rng), k = rand_param({lk, 4}, rng), v = rand_param({lk, 4}, rng);
  const Tensor r = random_tensor({lq, 4}, rng);
  return grad_check(LossFn([&](Graph& g) {
                      return probe(ops::attention(g.param(q), g.param(k), g.param(v), 2, offset), r);
                    }),
                    {{"q", &q}, {"k", &k}, {"v", &v}});
}

GradReport op_norms(std::uint64_t seed) {
  Rng rng(seed);
  Parameter x = rand_param({3, 5}, rng), gain = rand_param({5}, rng), bias = rand_param({5}, rng);
  const Tensor r = random_tensor({3, 5}, rng);
  return grad_check(LossFn([&](Graph& g) {
                      Var h = ops::layer_norm(g.param(x), g.param(gain), g.param(bias));
                      h = ops::softmax(ops::gelu(h), 1);
                      h = ops::softmax(ops::scale(h, 3.0), 0);
                      return probe(h, r);
                    }),
                    {{"x", &x}, {"gain", &gain}, {"bias", &bias}});
}

GradReport op_rows(std::uint64_t seed) {
  Rng rng(seed);
  Parameter a = rand_param({3, 4}, rng), b = rand_param({2, 4}, rng), c = rand_param({3, 2}, rng);
  Parameter row = rand_param({4}, rng);
  const Tensor r = random_tensor({7, 6}, rng);
  return grad_check(LossFn([&](Graph& g) {
                      Var va = g.param(a), vb = g.param(b);
                      std::array<Var, 2> rows{va, vb};
                      Var s = ops::concat_rows(rows);                            // 5 x 4
                      s = ops::add_leading_rows(s, ops::mul(vb, vb));            // 5 x 4
                      s = ops::add_rowvec(ops::sub(s, ops::scale(ops::tile_rows(va, 5), 0.3)),
                                          g.param(row));
                      Var t = ops::tile_rows(ops::slice_rows(s, 1, 4), 7);        // 7 x 4
                      std::array<Var, 2> cols{t, ops::tile_rows(g.param(c), 7)};  // 7 x 6
                      Var u = ops::concat_cols(cols);
                      Var m = ops::mean_rows(ops::abs(u), 2);
                      return ops::add(probe(u, r), ops::sum(ops::mul(m, m)));
                    }),
                    {{"a", &a}, {"b", &b}, {"c", &c}, {"row", &row}});
}

GradReport transformer(std::uint64_t seed, bool cross) {
  Rng rng(seed);
  nn::TransformerLayer layer(4, 2, 6, rng);
  Parameter x = rand_param({3, 4}, rng), ctx = rand_param({5, 4}, rng);
  ParamList params;
  layer.collect(params, "layer");
  randomize({{"g", &layer.ln_q.gain}, {"b", &layer.ln_kv.bias}}, rng);
  params.emplace_back("x", &x);
  if (cross) params.emplace_back("ctx", &ctx);
  const Tensor r = random_tensor({3, 4}, rng);
  return grad_check(LossFn([&](Graph& g) {
                      Var y = cross ? layer.cross(g, g.param(x), g.param(ctx)) : layer.self(g, g.param(x));
                      return probe(y, r);
                    }),
                    params);
}

GradReport backbone_full(std::uint64_t seed, bool injected) {
  Rng rng(seed);
  const BackboneConfig cfg = tiny_backbone();
  Backbone model(cfg, seed);
  const ModalBundle b = random_bundle(cfg, rng);
  InjectedTokens inj;
  for (std::size_t m = 0; m < kModalities; ++m) inj.rows[m] = random_tensor({2, cfg.d_model}, rng);
  inj.attend = false;
  return grad_check(LossFn([&](Graph& g) {
                      Var y = model.forward(g, b, injected ? &inj : nullptr).y;
                      return ops::sum(ops::mul(y, y));
                    }),
                    model.params());
}

GradReport evaluator_mlp(std::uint64_t seed) {
  Rng rng(seed);
  const BackboneConfig cfg = tiny_backbone();
  EvaluatorConfig ec;
  ec.hidden = 5;
  Evaluator ev(cfg.dims, ec, seed);
  const ModalBundle b = mask_to(random_bundle(cfg, rng), Scenario::parse("a,t"));
  return grad_check(LossFn([&](Graph& g) {
                      Var y = ev.forward(g, b);
                      return ops::sum(ops::mul(y, y));
                    }),
                    ev.params());
}

GradReport decoupler(std::uint64_t seed) {
  Rng rng(seed);
  PromptConfig pc;
  pc.shared_length = 3;
  pc.d_p = 4;
  PromptBank bank(pc, 4, rng);
  randomize({{"com", &bank.com}}, rng);
  Decoupler dec(pc.d_p, rng);
  ParamList params{{"com", &bank.com}};
  dec.collect(params, "dec");
  randomize({{"d0", &dec.down[0].weight}, {"d1", &dec.down[1].weight}, {"d2", &dec.down[2].weight}},
            rng);
  const PerModality<std::size_t> lengths{3, 5, 2};
  PerModality<Tensor> r;
  for (std::size_t m = 0; m < kModalities; ++m) r[m] = random_tensor({lengths[m], pc.d_p}, rng);
  return grad_check(LossFn([&](Graph& g) {
                      const auto spec = decouple_prompts(g, bank, dec, lengths);
                      Var total = probe(spec[0], r[0]);
                      for (std::size_t m = 1; m < kModalities; ++m) total = ops::add(total, probe(spec[m], r[m]));
                      return total;
                    }),
                    params);
}

GradReport generator(std::uint64_t seed) {
  Rng rng(seed);
  const BackboneConfig cfg = tiny_backbone();
  CrossGenerator gen(cfg.dims, 3, rng);
  randomize({{"b", &gen.bias[0][0]}, {"b2", &gen.bias[0][1]}}, rng);
  const ModalBundle b = mask_to(random_bundle(cfg, rng), Scenario::parse("v,t"));
  ParamList params;
  gen.collect(params, "gen");
  ParamList used;
  for (auto& pr : params) {
    if (pr.first.find("toa.") != std::string::npos) used.push_back(pr);
  }
  const Tensor r = random_tensor({cfg.lens[0], cfg.dims[0]}, rng);
  return grad_check(LossFn([&](Graph& g) { return probe(generate_modality(g, b, 0, cfg.lens[0], gen), r); }),
                    used);
}

GradReport projection(std::uint64_t seed) {
  Rng rng(seed);
  Projection phi(3, 4, 5, rng);
  randomize({{"down", &phi.down.weight}, {"down.b", &phi.down.bias}}, rng);
  Parameter x = rand_param({4, 3}, rng), prompt = rand_param({2, 4}, rng);
  ParamList params{{"x", &x}, {"prompt_rows", &prompt}};
  phi.collect(params, "phi");
  const Tensor r = random_tensor({6, 5}, rng);
  return grad_check(LossFn([&](Graph& g) { return probe(phi(g, g.param(x), g.param(prompt)), r); }),
                    params);
}

GradReport fusion(std::uint64_t seed) {
  Rng rng(seed);
  PerModality<Parameter> x{rand_param({4, 4}, rng), rand_param({3, 4}, rng), rand_param({6, 4}, rng)};
  Parameter com = rand_param({5, 3}, rng);
  nn::Linear psi(3, 4, rng);
  randomize({{"psi.b", &psi.bias}}, rng);
  ParamList params{{"x.a", &x[0]}, {"x.v", &x[1]}, {"x.t", &x[2]}, {"com", &com}};
  psi.collect(params, "psi");
  PerModality<Tensor> r{random_tensor({4, 4}, rng), random_tensor({3, 4}, rng),
                        random_tensor({6, 4}, rng)};
  return grad_check(LossFn([&](Graph& g) {
                      PerModality<Var> xs{g.param(x[0]), g.param(x[1]), g.param(x[2])};
                      const auto w = channel_weights(xs);
                      Var total;
                      for (std::size_t m = 0; m < kModalities; ++m) {
                        Var o = residual_connect(g, extend_fuse(w[m], xs[m]), g.param(com), psi);
                        Var p = probe(o, r[m]);
                        total = m == 0 ? p : ops::add(total, p);
                      }
                      return total;
                    }),
                    params);
}

GradReport weight_prompt(std::uint64_t seed) {
  Rng rng(seed);
  Parameter wei = rand_param({2, 4}, rng);
  PerModality<Parameter> x{rand_param({3, 4}, rng), rand_param({4, 4}, rng), rand_param({2, 4}, rng)};
  const PerModality<double> w{0.2, 0.5, 0.3};
  PerModality<Tensor> r{random_tensor({5, 4}, rng), random_tensor({6, 4}, rng), random_tensor({4, 4}, rng)};
  return grad_check(LossFn([&](Graph& g) {
                      const auto out = weight_and_prepend(
                          w, g.param(wei), {g.param(x[0]), g.param(x[1]), g.param(x[2])});
                      Var total = probe(out[0], r[0]);
                      for (std::size_t m = 1; m < kModalities; ++m) total = ops::add(total, probe(out[m], r[m]));
                      return total;
                    }),
                    {{"wei", &wei}, {"x.a", &x[0]}, {"x.v", &x[1]}, {"x.t", &x[2]}});
}

GradReport adapter(std::uint64_t seed) {
  Rng rng(seed);
  const BackboneConfig cfg = tiny_backbone();
  Backbone backbone(cfg, seed);
  backbone.freeze();
  EvaluatorConfig ec;
  ec.hidden = 4;
  ec.gate_threshold = -1e9;  // always generate
  Evaluator ev(cfg.dims, ec, seed + 1);
  ev.freeze();
  PromptConfig pc;
  pc.lengths = {3, 2, 4};
  pc.shared_length = 2;
  pc.d_p = 3;
  PrommaModel model(backbone, &ev, pc, ModuleFlags{}, 0.1, seed + 2);
  randomize(model.trainable(), rng, 0.4);
  const ParamList params = model.trainable();
  Dataset batch{mask_to(random_bundle(cfg, rng), Scenario::parse("t")),
                mask_to(random_bundle(cfg, rng), Scenario::parse("a,v"))};
  const std::vector<const ModalBundle*> ptrs{&batch[0], &batch[1]};
  const std::vector<PerModality<double>> w{{0.2, 0.3, 0.5}, {0.4, 0.4, 0.2}};
  return grad_check(ValueFn([&](bool backward) {
                      BatchPass pass = model.forward_batch(ptrs, backward, &w);
                      double total = 0.0;
                      for (std::size_t i = 0; i < pass.y.size(); ++i) {
                        Graph& g = *pass.graphs[i];
                        Var l = ops::sum(ops::mul(pass.y[i], pass.y[i]));
                        if (backward) g.backward(l);
                        total += l.value().item();
                      }
                      return total;
                    }),
                    params);
}

}  // namespace

const std::vector<GradCase>& gradient_cases() {
  static const std::vector<GradCase> cases{
      {"op.matmul", op_matmul},
      {"op.conv1d", op_conv1d},
      {"op.attention", [](std::uint64_t s) { return op_attention(s, 2, 3, 0); }},
      {"op.attention.masked", [](std::uint64_t s) { return op_attention(s, 3, 5, 2); }},
      {"op.norm_gelu_softmax", op_norms},
      {"op.row_ops", op_rows},
      {"backbone.self_layer", [](std::uint64_t s) { return transformer(s, false); }},
      {"backbone.cross_layer", [](std::uint64_t s) { return transformer(s, true); }},
      {"backbone.full", [](std::uint64_t s) { return backbone_full(s, false); }},
      {"backbone.injected", [](std::uint64_t s) { return backbone_full(s, true); }},
      {"evaluator.mlp", evaluator_mlp},
      {"prompts.decoupler", decoupler},
      {"prompts.generator", generator},
      {"prompts.projection", projection},
      {"fusion.channel_residual", fusion},
      {"weighting.weight_prompt", weight_prompt},
      {"adapter.full", adapter},
  };
  return cases;
}

}  // namespace promma::testkit
