// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/mipd.hpp"

#include <cmath>

#include "promma/errors.hpp"

namespace promma {

void PromptConfig::validate() const {
  if (shared_length == 0 || d_p == 0) throw ConfigError("prompts: shared_length and d_p must be >= 1");
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (lengths[m] == 0) {
      throw ConfigError(std::string("prompts: length for ") + kModalityNames[m] + " must be >= 1");
    }
  }
  if (conv_width % 2 == 0) {
    throw ConfigError("prompts: conv_width " + std::to_string(conv_width) + " must be odd");
  }
  if (!(init_std >= 0.0)) throw ConfigError("prompts: init_std must be non-negative");
}

PromptBank::PromptBank(const PromptConfig& cfg, std::size_t d_model, Rng& rng)
    : com(nn::random_normal({cfg.shared_length, cfg.d_p}, cfg.init_std, rng)),
      wei(nn::random_normal({cfg.shared_length, d_model}, cfg.init_std, rng)) {}

void PromptBank::collect(ParamList& out, const std::string& prefix) {
  out.emplace_back(prefix + ".com", &com);
  out.emplace_back(prefix + ".wei", &wei);
}

CrossGenerator::CrossGenerator(const PerModality<std::size_t>& dims, std::size_t width, Rng& rng) {
  if (width % 2 == 0) throw ConfigError("conv width " + std::to_string(width) + " must be odd");
  for (std::size_t dst = 0; dst < kModalities; ++dst) {
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t src = (dst + 1 + k) % kModalities;
      const double a = std::sqrt(6.0 / static_cast<double>(width * dims[src] + dims[dst]));
      Tensor w({width, dims[src], dims[dst]});
      for (double& v : w.values()) v = rng.uniform(-a, a);
      kernel[dst][k] = Parameter(std::move(w));
      bias[dst][k] = Parameter(Tensor({dims[dst]}));
    }
  }
}

namespace {

std::size_t slot(std::size_t src, std::size_t dst) {
  if (src == dst || src >= kModalities || dst >= kModalities) {
    throw ContractError("cross generator: invalid pair " + std::to_string(src) + "->" +
                        std::to_string(dst));
  }
  return (src + kModalities - dst - 1) % kModalities;
}

}  // namespace

Parameter& CrossGenerator::kernel_for(std::size_t src, std::size_t dst) {
  return kernel[dst][slot(src, dst)];
}

Parameter& CrossGenerator::bias_for(std::size_t src, std::size_t dst) {
  return bias[dst][slot(src, dst)];
}

void CrossGenerator::collect(ParamList& out, const std::string& prefix) {
  for (std::size_t dst = 0; dst < kModalities; ++dst) {
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t src = (dst + 1 + k) % kModalities;
      const std::string name = prefix + "." + kModalityNames[src] + "to" + kModalityNames[dst];
      out.emplace_back(name + ".kernel", &kernel[dst][k]);
      out.emplace_back(name + ".bias", &bias[dst][k]);
    }
  }
}

Decoupler::Decoupler(std::size_t d_p, Rng& rng) {
  for (std::size_t m = 0; m < kModalities; ++m) {
    up[m] = nn::Linear(d_p, d_p, rng);
    down[m] = nn::Linear::zeros(d_p, d_p);
  }
}

Var Decoupler::operator()(Graph& g, std::size_t m, Var x) {
  return ops::add(x, down[m](g, ops::gelu(up[m](g, x))));
}

void Decoupler::collect(ParamList& out, const std::string& prefix) {
  for (std::size_t m = 0; m < kModalities; ++m) {
    const std::string name = prefix + "." + kModalityNames[m];
    up[m].collect(out, name + ".up");
    down[m].collect(out, name + ".down");
  }
}

Projection::Projection(std::size_t d_in, std::size_t d_p, std::size_t d_model, Rng& rng)
    : feature(d_in, d_model, rng),
      prompt(d_p, d_model, rng),
      up(d_model, d_model, rng),
      down(nn::Linear::zeros(d_model, d_model)) {}

Projection Projection::zeros(std::size_t d_in, std::size_t d_p, std::size_t d_model) {
  Projection p;
  p.feature = nn::Linear::zeros(d_in, d_model);
  p.prompt = nn::Linear::zeros(d_p, d_model);
  p.up = nn::Linear::zeros(d_model, d_model);
  p.down = nn::Linear::zeros(d_model, d_model);
  return p;
}

Var Projection::operator()(Graph& g, Var features, std::optional<Var> prompt_rows) {
  if (features.cols() != feature.in_dim()) {
    throw ConfigError("projection: feature width " + std::to_string(features.cols()) +
                      " != " + std::to_string(feature.in_dim()));
  }
  Var h = feature(g, features);
  if (prompt_rows) {
    if (prompt_rows->cols() != prompt.in_dim()) {
      throw ConfigError("projection: prompt width " + std::to_string(prompt_rows->cols()) +
                        " != " + std::to_string(prompt.in_dim()));
    }
    std::array<Var, 2> parts{prompt(g, *prompt_rows), h};
    h = ops::concat_rows(parts);
  }
  return ops::add(h, down(g, ops::gelu(up(g, h))));
}

void Projection::collect(ParamList& out, const std::string& prefix) {
  feature.collect(out, prefix + ".feature");
  prompt.collect(out, prefix + ".prompt");
  up.collect(out, prefix + ".up");
  down.collect(out, prefix + ".down");
}

Tensor interpolation_matrix(std::size_t l_dst, std::size_t l_src) {
  if (l_dst == 0 || l_src == 0) throw ContractError("interpolation: empty sequence");
  Tensor m({l_dst, l_src});
  for (std::size_t i = 0; i < l_dst; ++i) {
    const double pos = l_dst == 1 ? 0.0
                                  : static_cast<double>(i) * static_cast<double>(l_src - 1) /
                                        static_cast<double>(l_dst - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    m.at(i, lo) += 1.0 - frac;
    if (frac > 0.0) m.at(i, lo + 1) += frac;
  }
  return m;
}

Var generate_modality(Graph& g, const ModalBundle& bundle, std::size_t target,
                      std::size_t target_len, CrossGenerator& gen) {
  std::vector<Var> outs;
  for (std::size_t k = 0; k < 2; ++k) {
    const std::size_t src = (target + 1 + k) % kModalities;
    if (!bundle.present[src]) continue;
    Var x = g.constant(bundle.features[src]);
    Var y = ops::gelu(ops::conv1d(x, g.param(gen.kernel[target][k]), g.param(gen.bias[target][k])));
    if (y.rows() != target_len) {
      y = ops::matmul(g.constant(interpolation_matrix(target_len, y.rows())), y);
    }
    outs.push_back(y);
  }
  if (outs.empty()) {
    throw ContractError(std::string("generate: no source present for modality ") +
                        kModalityNames[target]);
  }
  ++gen.calls;
  if (outs.size() == 1) return outs[0];
  return ops::scale(ops::add(outs[0], outs[1]), 0.5);
}

PerModality<Var> decouple_prompts(Graph& g, PromptBank& bank, Decoupler& dec,
                                  const PerModality<std::size_t>& lengths) {
  Var com = g.param(bank.com);
  PerModality<Var> out;
  for (std::size_t m = 0; m < kModalities; ++m) {
    Var p = dec(g, m, com);
    out[m] = p.rows() == lengths[m] ? p : ops::tile_rows(p, lengths[m]);
  }
  return out;
}

PerModality<Var> assemble(Graph& g, const ModalBundle& bundle,
                          const PerModality<std::optional<Var>>& generated,
                          const PerModality<Var>& specific, PerModality<Projection>& phi) {
  PerModality<Var> out;
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (generated[m]) {
      if (bundle.present[m]) {
        throw ContractError(std::string("assemble: modality ") + kModalityNames[m] +
                            " is present but was generated");
      }
      out[m] = phi[m](g, *generated[m], specific[m]);
    } else {
      out[m] = phi[m](g, g.constant(bundle.features[m]));
    }
  }
  return out;
}

}  // namespace promma
