// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/backbone.hpp"

#include <algorithm>
#include <numeric>

#include "promma/errors.hpp"

namespace promma {

void BackboneConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("backbone: d_model " + std::to_string(d_model) +
                      " must be a positive multiple of n_heads " + std::to_string(n_heads));
  }
  if (n_cross_layers == 0 || n_self_layers == 0 || ff_hidden == 0) {
    throw ConfigError("backbone: layer counts and ff_hidden must be >= 1");
  }
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (dims[m] == 0 || lens[m] == 0) {
      throw ConfigError(std::string("backbone: modality ") + kModalityNames[m] +
                        " needs positive length and dimension");
    }
  }
  if (!(label_range > 0.0)) throw ConfigError("backbone: label_range must be positive");
}

Backbone::Backbone(const BackboneConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t d = cfg_.d_model;
  for (std::size_t m = 0; m < kModalities; ++m) proj_[m] = nn::Linear(cfg_.dims[m], d, rng);
  for (std::size_t m = 0; m < kModalities; ++m) {
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t l = 0; l < cfg_.n_cross_layers; ++l) {
        cross_[m][k].emplace_back(d, cfg_.n_heads, cfg_.ff_hidden, rng);
      }
    }
    merge_[m] = nn::Linear(2 * d, d, rng);
  }
  for (std::size_t m = 0; m < kModalities; ++m) {
    for (std::size_t l = 0; l < cfg_.n_self_layers; ++l) {
      self_[m].emplace_back(d, cfg_.n_heads, cfg_.ff_hidden, rng);
    }
    final_ln_[m] = nn::LayerNorm(d);
  }
  head_ = nn::Mlp({kModalities * d, d, 1}, rng);
}

PerModality<Var> Backbone::project(Graph& g, const ModalBundle& bundle) {
  check_bundle(bundle, cfg_.lens, cfg_.dims);
  PerModality<Var> out;
  for (std::size_t m = 0; m < kModalities; ++m) {
    out[m] = proj_[m](g, g.constant(bundle.features[m]));
  }
  return out;
}

PerModality<Var> Backbone::cross_stage(Graph& g, const PerModality<Var>& inputs) {
  PerModality<Var> out;
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (inputs[m].cols() != cfg_.d_model) {
      throw DimensionError("cross stage: stream width " + std::to_string(inputs[m].cols()) +
                           " != d_model " + std::to_string(cfg_.d_model));
    }
  }
  for (std::size_t m = 0; m < kModalities; ++m) {
    std::array<Var, 2> streams;
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t src = (m + 1 + k) % kModalities;
      Var x = inputs[m];
      for (auto& layer : cross_[m][k]) x = layer.cross(g, x, inputs[src]);
      streams[k] = x;
    }
    out[m] = merge_[m](g, ops::concat_cols(streams));
  }
  return out;
}

PerModality<Var> Backbone::self_stage(Graph& g, const PerModality<Var>& x,
                                      const PerModality<std::size_t>& masked_prefix) {
  PerModality<Var> out;
  for (std::size_t m = 0; m < kModalities; ++m) {
    Var h = x[m];
    for (auto& layer : self_[m]) h = layer.self(g, h, masked_prefix[m]);
    out[m] = final_ln_[m](g, h);
  }
  return out;
}

Var Backbone::pool(Graph& g, const PerModality<Var>& x, const PerModality<std::size_t>& skip) {
  std::array<Var, kModalities> pooled;
  for (std::size_t m = 0; m < kModalities; ++m) pooled[m] = ops::mean_rows(x[m], skip[m]);
  (void)g;
  return ops::concat_cols(pooled);
}

Var Backbone::head(Graph& g, Var pooled) { return head_(g, pooled); }

BackboneTrace Backbone::forward(Graph& g, const ModalBundle& bundle, const InjectedTokens* injected) {
  BackboneTrace t;
  t.inputs = project(g, bundle);
  t.cross = cross_stage(g, t.inputs);
  PerModality<std::size_t> prefix{0, 0, 0};
  t.self_in = t.cross;
  if (injected) {
    for (std::size_t m = 0; m < kModalities; ++m) {
      const Tensor& rows = injected->rows[m];
      if (rows.empty()) continue;
      if (rows.rank() != 2 || rows.cols() != cfg_.d_model) {
        throw DimensionError("injected tokens must be [n x d_model], got " +
                             shape_str(rows.shape()));
      }
      std::array<Var, 2> parts{g.constant(rows), t.cross[m]};
      t.self_in[m] = ops::concat_rows(parts);
      if (!injected->attend) prefix[m] = rows.rows();
    }
  }
  t.self_out = self_stage(g, t.self_in, prefix);
  t.pooled = pool(g, t.self_out, prefix);
  t.y = head(g, t.pooled);
  return t;
}

double Backbone::clamp(double y) const {
  const double half = cfg_.label_range / 2.0;
  return std::clamp(y, -half, half);
}

double Backbone::predict(const ModalBundle& bundle) {
  Graph g(false);
  return clamp(forward(g, bundle).y.value().item());
}

ParamList Backbone::params() {
  ParamList out;
  for (std::size_t m = 0; m < kModalities; ++m) {
    const std::string mod(1, kModalityNames[m]);
    proj_[m].collect(out, "backbone.proj." + mod);
    for (std::size_t k = 0; k < 2; ++k) {
      const std::string src(1, kModalityNames[(m + 1 + k) % kModalities]);
      for (std::size_t l = 0; l < cross_[m][k].size(); ++l) {
        cross_[m][k][l].collect(out, "backbone.cross." + src + "to" + mod + "." + std::to_string(l));
      }
    }
    merge_[m].collect(out, "backbone.merge." + mod);
    for (std::size_t l = 0; l < self_[m].size(); ++l) {
      self_[m][l].collect(out, "backbone.self." + mod + "." + std::to_string(l));
    }
    final_ln_[m].collect(out, "backbone.final_ln." + mod);
  }
  head_.collect(out, "backbone.head");
  return out;
}

ParamList Backbone::head_params() {
  ParamList out;
  head_.collect(out, "backbone.head");
  return out;
}

void Backbone::freeze() {
  set_frozen(params(), true);
  frozen_ = true;
}

std::uint64_t Backbone::checksum() { return promma::checksum(params()); }

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Fisher-Yates with our own index draw keeps the order library-independent.
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
  return idx;
}

TrainLog train_backbone(Backbone& model, const Dataset& train, const OptimizerConfig& opt,
                        std::uint64_t seed,
                        const std::function<ModalBundle(const ModalBundle&, Rng&)>& augment) {
  if (model.frozen()) throw ContractError("train_backbone: backbone is frozen");
  if (opt.batch_size == 0) throw ConfigError("optimizer: batch_size must be >= 1");
  Optimizer optim(model.params(), opt);
  Rng rng(seed);
  TrainLog log;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const auto order = shuffled_indices(train.size(), rng);
    double epoch_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t end = std::min(order.size(), start + opt.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      optim.zero_grad();
      double total = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const ModalBundle& raw = train[order[i]];
        const ModalBundle sample = augment ? augment(raw, rng) : raw;
        Graph g;
        Var y = model.forward(g, sample).y;
        Var loss = ops::abs(ops::sub(y, g.constant(Tensor({1, 1}, sample.label))));
        total += loss.value().item();
        g.backward(ops::sum(loss), inv);
      }
      optim.step();
      log.batch_loss.push_back(total * inv);
      epoch_total += total * inv;
      ++batches;
    }
    log.batches_per_epoch = batches;
    log.epoch_loss.push_back(batches ? epoch_total / static_cast<double>(batches) : 0.0);
  }
  return log;
}

TrainLog pretrain(Backbone& model, const Dataset& train, const OptimizerConfig& opt,
                  std::uint64_t seed) {
  for (const auto& b : train) {
    if (!b.complete()) throw ContractError("pretrain: dataset contains an incomplete bundle");
  }
  TrainLog log = train_backbone(model, train, opt, seed);
  model.freeze();
  return log;
}

}  // namespace promma
