// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/model.hpp"

#include <algorithm>

#include "promma/errors.hpp"

namespace promma {

std::string ModuleFlags::name() const {
  std::string out;
  auto add = [&](bool on, const char* n) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += n;
  };
  add(mme_mipd, "mme_mipd");
  add(dpw, "dpw");
  add(mpdc_fusion, "mpdc_fusion");
  add(mpdc_residual, "mpdc_residual");
  return out.empty() ? "none" : out;
}

PrommaModel::PrommaModel(Backbone& backbone, Evaluator* evaluator, const PromptConfig& prompts,
                         ModuleFlags flags, double tau, std::uint64_t seed)
    : backbone_(&backbone), evaluator_(evaluator), pcfg_(prompts), flags_(flags), tau_(tau) {
  pcfg_.validate();
  if (!backbone.frozen()) throw ContractError("adaptation: backbone must be frozen");
  if (evaluator && !evaluator->frozen()) throw ContractError("adaptation: evaluator must be frozen");
  if (flags_.mme_mipd && !evaluator) throw ContractError("adaptation: generation needs an evaluator");
  if (!(tau > 0.0)) throw ConfigError("adaptation: tau must be positive");
  const BackboneConfig& bc = backbone.config();
  Rng rng(seed);
  bank_ = PromptBank(pcfg_, bc.d_model, rng);
  gen_ = CrossGenerator(bc.dims, pcfg_.conv_width, rng);
  dec_ = Decoupler(pcfg_.d_p, rng);
  for (std::size_t m = 0; m < kModalities; ++m) {
    phi_[m] = Projection(bc.dims[m], pcfg_.d_p, bc.d_model, rng);
    phi_[m].feature = backbone.projection(m);
  }
  psi_ = nn::Linear::zeros(pcfg_.d_p, bc.d_model);
  head_ = backbone.head_mlp();
  ParamList all = all_params();
  set_frozen(all, false);
}

ParamList PrommaModel::all_params() {
  ParamList out;
  bank_.collect(out, "adapt.bank");
  gen_.collect(out, "adapt.gen");
  dec_.collect(out, "adapt.decoupler");
  for (std::size_t m = 0; m < kModalities; ++m) {
    phi_[m].collect(out, std::string("adapt.phi.") + kModalityNames[m]);
  }
  psi_.collect(out, "adapt.psi");
  head_.collect(out, "adapt.head");
  return out;
}

ParamList PrommaModel::trainable() {
  ParamList out;
  if (flags_.mme_mipd || flags_.mpdc_residual) out.emplace_back("adapt.bank.com", &bank_.com);
  if (flags_.dpw) out.emplace_back("adapt.bank.wei", &bank_.wei);
  if (flags_.mme_mipd) {
    gen_.collect(out, "adapt.gen");
    dec_.collect(out, "adapt.decoupler");
    for (std::size_t m = 0; m < kModalities; ++m) {
      phi_[m].collect(out, std::string("adapt.phi.") + kModalityNames[m]);
    }
  }
  if (flags_.mpdc_residual) psi_.collect(out, "adapt.psi");
  head_.collect(out, "adapt.head");
  return out;
}

BatchPass PrommaModel::forward_batch(std::span<const ModalBundle* const> batch, bool record,
                                     const std::vector<PerModality<double>>* fixed_weights) {
  const BackboneConfig& bc = backbone_->config();
  const std::size_t n = batch.size();
  if (n == 0) throw ContractError("adaptation: empty batch");
  if (fixed_weights && fixed_weights->size() != n) {
    throw ContractError("adaptation: fixed weights for " + std::to_string(fixed_weights->size()) +
                        " samples, batch has " + std::to_string(n));
  }
  BatchPass pass;
  pass.graphs.reserve(n);
  pass.gates.assign(n, GateDecision::kSkip);
  std::vector<PerModality<Var>> cross(n);
  PerModality<Tensor> pooled;
  for (std::size_t m = 0; m < kModalities; ++m) pooled[m] = Tensor({n, bc.d_model});

  for (std::size_t i = 0; i < n; ++i) {
    const ModalBundle& b = *batch[i];
    check_bundle(b, bc.lens, bc.dims);
    pass.graphs.push_back(std::make_unique<Graph>(record));
    Graph& g = *pass.graphs.back();
    if (flags_.mme_mipd && !b.complete()) pass.gates[i] = evaluator_->gate(b);
    PerModality<std::optional<Var>> generated;
    PerModality<Var> specific;
    if (pass.gates[i] == GateDecision::kGenerate) {
      specific = decouple_prompts(g, bank_, dec_, pcfg_.lengths);
      for (std::size_t m = 0; m < kModalities; ++m) {
        if (!b.present[m]) generated[m] = generate_modality(g, b, m, bc.lens[m], gen_);
      }
    }
    cross[i] = backbone_->cross_stage(g, assemble(g, b, generated, specific, phi_));
    for (std::size_t m = 0; m < kModalities; ++m) {
      const Tensor& x = cross[i][m].value();
      for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < bc.d_model; ++c) pooled[m].at(i, c) += x.at(r, c);
      }
      for (std::size_t c = 0; c < bc.d_model; ++c) {
        pooled[m].at(i, c) /= static_cast<double>(x.rows());
      }
    }
  }

  if (flags_.dpw) {
    if (fixed_weights) {
      pass.weights = *fixed_weights;
    } else if (n >= 2) {
      pass.estimate = pairwise_weights(pooled, tau_);
      for (std::size_t i = 0; i < n; ++i) {
        pass.weights.push_back(sample_weights(*pass.estimate, batch[i]->present));
      }
    } else {
      // A lone sample has no negatives; fall back to equal weights.
      pass.weights.assign(n, PerModality<double>{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
    }
  }

  pass.y.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Graph& g = *pass.graphs[i];
    PerModality<Var> x = cross[i];
    if (flags_.dpw) x = weight_and_prepend(pass.weights[i], g.param(bank_.wei), x);
    x = backbone_->self_stage(g, x);
    if (flags_.mpdc_fusion) {
      const PerModality<Var> cw = channel_weights(x);
      for (std::size_t m = 0; m < kModalities; ++m) x[m] = extend_fuse(cw[m], x[m]);
    }
    if (flags_.mpdc_residual) {
      Var com = g.param(bank_.com);
      for (std::size_t m = 0; m < kModalities; ++m) x[m] = residual_connect(g, x[m], com, psi_);
    }
    std::array<Var, kModalities> pools;
    for (std::size_t m = 0; m < kModalities; ++m) pools[m] = ops::mean_rows(x[m]);
    pass.y.push_back(head_(g, ops::concat_cols(pools)));
  }
  return pass;
}

std::vector<double> PrommaModel::predict(const Dataset& data, std::size_t batch) {
  if (batch == 0) throw ConfigError("adaptation: eval batch must be >= 1");
  std::vector<double> out(data.size(), 0.0);
  std::vector<std::size_t> incomplete;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].complete()) {
      out[i] = backbone_->predict(data[i]);
    } else {
      incomplete.push_back(i);
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> chunks;
  for (std::size_t s = 0; s < incomplete.size(); s += batch) {
    chunks.emplace_back(s, std::min(incomplete.size(), s + batch));
  }
  if (chunks.size() >= 2 && chunks.back().second - chunks.back().first == 1) {
    chunks[chunks.size() - 2].second = chunks.back().second;
    chunks.pop_back();
  }
  for (const auto& [s, e] : chunks) {
    std::vector<const ModalBundle*> ptrs;
    for (std::size_t k = s; k < e; ++k) ptrs.push_back(&data[incomplete[k]]);
    BatchPass pass = forward_batch(ptrs, false);
    for (std::size_t k = s; k < e; ++k) {
      out[incomplete[k]] = backbone_->clamp(pass.y[k - s].value().item());
    }
  }
  return out;
}

TrainLog train_promma(PrommaModel& model, const Dataset& train, const AdaptTrainConfig& cfg,
                      std::uint64_t seed) {
  if (cfg.scenarios.empty()) throw ConfigError("adaptation: no training scenarios");
  if (cfg.opt.batch_size == 0) throw ConfigError("optimizer: batch_size must be >= 1");
  if (!(cfg.rate >= 0.0 && cfg.rate <= 1.0)) throw ConfigError("adaptation: rate outside [0, 1]");
  const std::uint64_t before = model.backbone().checksum();
  Optimizer optim(model.trainable(), cfg.opt);
  Rng rng(seed);
  TrainLog log;
  for (std::size_t epoch = 0; epoch < cfg.opt.epochs; ++epoch) {
    const auto order = shuffled_indices(train.size(), rng);
    double epoch_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.opt.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.opt.batch_size);
      const Scenario& sc = cfg.scenarios[rng.index(cfg.scenarios.size())];
      Dataset masked;
      for (std::size_t i = start; i < end; ++i) {
        if (rng.uniform() < cfg.rate) masked.push_back(mask_to(train[order[i]], sc));
      }
      if (masked.size() < 2) continue;
      std::vector<const ModalBundle*> ptrs;
      for (const auto& b : masked) ptrs.push_back(&b);
      optim.zero_grad();
      BatchPass pass = model.forward_batch(ptrs, true);
      const double inv = 1.0 / static_cast<double>(masked.size());
      double total = 0.0;
      for (std::size_t i = 0; i < masked.size(); ++i) {
        Graph& g = *pass.graphs[i];
        Var loss = ops::abs(ops::sub(pass.y[i], g.constant(Tensor({1, 1}, masked[i].label))));
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
  if (model.backbone().checksum() != before) {
    throw ContractError("adaptation: frozen backbone changed during training");
  }
  return log;
}

}  // namespace promma
