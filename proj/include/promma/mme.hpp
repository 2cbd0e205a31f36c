// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "promma/backbone.hpp"

namespace promma {

struct EvaluatorConfig {
  double epsilon = 0.3;
  double gate_threshold = 0.0;  // F
  double label_range = 6.0;     // R
  std::size_t hidden = 64;
  // Caps the number of training samples used to build pseudo-labels (0 = all).
  std::size_t max_samples = 0;

  void validate() const;

  bool operator==(const EvaluatorConfig&) const = default;
};

// max(0, |a - b| / R - epsilon). Zero unless the two predictions differ by
// more than epsilon of the label range.
double pseudo_label(double y_pred, double y_miss, const EvaluatorConfig& cfg);

enum class GateDecision { kSkip, kGenerate };

// Damage regressor over pooled raw features plus the presence mask.
class Evaluator {
 public:
  Evaluator() = default;
  Evaluator(const PerModality<std::size_t>& dims, const EvaluatorConfig& cfg, std::uint64_t seed);

  const EvaluatorConfig& config() const { return cfg_; }
  EvaluatorConfig& config() { return cfg_; }

  // [1 x (d_a + d_v + d_t + 3)]: per-modality row means, then presence bits.
  Tensor encode(const ModalBundle& bundle) const;
  Var forward(Graph& g, const ModalBundle& bundle);
  // Batched form over stacked encode() rows.
  Var forward_rows(Graph& g, Var rows) { return mlp_(g, rows); }
  double damage(const ModalBundle& bundle);
  // Strict: generate iff damage > F. Complete bundles always skip.
  GateDecision gate(const ModalBundle& bundle);

  ParamList params();
  void freeze() { set_frozen(params(), true); frozen_ = true; }
  bool frozen() const { return frozen_; }

 private:
  PerModality<std::size_t> dims_{};
  EvaluatorConfig cfg_;
  nn::Mlp mlp_;
  bool frozen_ = false;
};

GateDecision gate_from_damage(double damage, double threshold);

struct EvaluatorSample {
  ModalBundle masked;
  double target = 0.0;
};

// Pairs every (sample, incomplete scenario) with its pseudo-label using the
// frozen backbone on complete vs zero-filled input.
std::vector<EvaluatorSample> build_evaluator_set(Backbone& backbone, const Dataset& complete,
                                                 const EvaluatorConfig& cfg);

// Fits the evaluator with L1 loss on the given set and freezes it.
TrainLog fit_evaluator(Evaluator& ev, const std::vector<EvaluatorSample>& set,
                       const OptimizerConfig& opt, std::uint64_t seed);

// build_evaluator_set + fit_evaluator. The backbone must already be frozen.
TrainLog train_evaluator(Evaluator& ev, Backbone& backbone, const Dataset& complete,
                         const OptimizerConfig& opt, std::uint64_t seed);

}  // namespace promma
