// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/mme.hpp"

#include <algorithm>
#include <cmath>

#include "promma/errors.hpp"

namespace promma {

void EvaluatorConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw ConfigError("evaluator: epsilon " + std::to_string(epsilon) + " outside (0, 1)");
  }
  if (!(label_range > 0.0)) throw ConfigError("evaluator: label_range must be positive");
  if (hidden == 0) throw ConfigError("evaluator: hidden must be >= 1");
}

double pseudo_label(double y_pred, double y_miss, const EvaluatorConfig& cfg) {
  return std::max(0.0, std::abs(y_pred - y_miss) / cfg.label_range - cfg.epsilon);
}

GateDecision gate_from_damage(double damage, double threshold) {
  return damage > threshold ? GateDecision::kGenerate : GateDecision::kSkip;
}

Evaluator::Evaluator(const PerModality<std::size_t>& dims, const EvaluatorConfig& cfg,
                     std::uint64_t seed)
    : dims_(dims), cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  mlp_ = nn::Mlp({dims[0] + dims[1] + dims[2] + kModalities, cfg_.hidden, 1}, rng);
}

Tensor Evaluator::encode(const ModalBundle& bundle) const {
  Tensor out({1, dims_[0] + dims_[1] + dims_[2] + kModalities});
  std::size_t off = 0;
  for (std::size_t m = 0; m < kModalities; ++m) {
    const Tensor& f = bundle.features[m];
    if (f.rank() != 2 || f.cols() != dims_[m] || f.rows() == 0) {
      throw DimensionError(std::string("evaluator: modality ") + kModalityNames[m] +
                           " has shape " + shape_str(f.shape()));
    }
    for (std::size_t r = 0; r < f.rows(); ++r) {
      for (std::size_t c = 0; c < dims_[m]; ++c) out[off + c] += f.at(r, c);
    }
    for (std::size_t c = 0; c < dims_[m]; ++c) out[off + c] /= static_cast<double>(f.rows());
    off += dims_[m];
  }
  for (std::size_t m = 0; m < kModalities; ++m) out[off + m] = bundle.present[m] ? 1.0 : 0.0;
  return out;
}

Var Evaluator::forward(Graph& g, const ModalBundle& bundle) {
  return mlp_(g, g.constant(encode(bundle)));
}

double Evaluator::damage(const ModalBundle& bundle) {
  Graph g(false);
  return forward(g, bundle).value().item();
}

GateDecision Evaluator::gate(const ModalBundle& bundle) {
  if (bundle.complete()) return GateDecision::kSkip;
  return gate_from_damage(damage(bundle), cfg_.gate_threshold);
}

ParamList Evaluator::params() {
  ParamList out;
  mlp_.collect(out, "evaluator.mlp");
  return out;
}

std::vector<EvaluatorSample> build_evaluator_set(Backbone& backbone, const Dataset& complete,
                                                 const EvaluatorConfig& cfg) {
  if (!backbone.frozen()) throw ContractError("evaluator: backbone must be frozen");
  const std::size_t n = cfg.max_samples ? std::min(cfg.max_samples, complete.size())
                                        : complete.size();
  std::vector<EvaluatorSample> set;
  set.reserve(n * Scenario::incomplete().size());
  for (std::size_t i = 0; i < n; ++i) {
    const ModalBundle& b = complete[i];
    if (!b.complete()) throw ContractError("evaluator: training bundle is incomplete");
    const double y_pred = backbone.predict(b);
    for (const auto& sc : Scenario::incomplete()) {
      ModalBundle masked = mask_to(b, sc);
      const double y_miss = backbone.predict(masked);
      set.push_back({std::move(masked), pseudo_label(y_pred, y_miss, cfg)});
    }
  }
  return set;
}

TrainLog fit_evaluator(Evaluator& ev, const std::vector<EvaluatorSample>& set,
                       const OptimizerConfig& opt, std::uint64_t seed) {
  if (ev.frozen()) throw ContractError("evaluator: already frozen");
  if (opt.batch_size == 0) throw ConfigError("optimizer: batch_size must be >= 1");
  Optimizer optim(ev.params(), opt);
  std::vector<Tensor> inputs;
  inputs.reserve(set.size());
  for (const auto& s : set) inputs.push_back(ev.encode(s.masked));
  Rng rng(seed);
  TrainLog log;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const auto order = shuffled_indices(set.size(), rng);
    double epoch_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t end = std::min(order.size(), start + opt.batch_size);
      const std::size_t bs = end - start;
      // One graph per batch: stack the encoded rows and regress all at once.
      Tensor x({bs, inputs.front().cols()});
      Tensor y({bs, 1});
      for (std::size_t i = 0; i < bs; ++i) {
        const Tensor& row = inputs[order[start + i]];
        std::copy(row.values().begin(), row.values().end(), x.data() + i * row.cols());
        y[i] = set[order[start + i]].target;
      }
      optim.zero_grad();
      Graph g;
      Var pred = ev.forward_rows(g, g.constant(std::move(x)));
      Var loss = ops::mean(ops::abs(ops::sub(pred, g.constant(std::move(y)))));
      g.backward(loss);
      optim.step();
      log.batch_loss.push_back(loss.value().item());
      epoch_total += loss.value().item();
      ++batches;
    }
    log.batches_per_epoch = batches;
    log.epoch_loss.push_back(batches ? epoch_total / static_cast<double>(batches) : 0.0);
  }
  ev.freeze();
  return log;
}

TrainLog train_evaluator(Evaluator& ev, Backbone& backbone, const Dataset& complete,
                         const OptimizerConfig& opt, std::uint64_t seed) {
  return fit_evaluator(ev, build_evaluator_set(backbone, complete, ev.config()), opt, seed);
}

}  // namespace promma
