// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <span>

#include "promma/backbone.hpp"
#include "promma/dpw.hpp"
#include "promma/mipd.hpp"
#include "promma/mme.hpp"
#include "promma/mpdc.hpp"

namespace promma {

// Switches for the ablation rows. With everything off only the classifier
// head trains, over the frozen backbone fed zero-filled inputs.
struct ModuleFlags {
  bool mme_mipd = true;       // gate, generation, decoupled prompts, input alignment
  bool dpw = true;            // MI-weighted prompt before self-attention
  bool mpdc_fusion = true;    // channel-softmax fusion
  bool mpdc_residual = true;  // psi(P_COM) residual on the leading rows

  static ModuleFlags none() { return {false, false, false, false}; }
  std::string name() const;
  bool operator==(const ModuleFlags&) const = default;
};

struct BatchPass {
  std::vector<std::unique_ptr<Graph>> graphs;
  std::vector<Var> y;  // unclamped, one per sample
  std::vector<GateDecision> gates;
  std::vector<PerModality<double>> weights;  // DPW weights per sample
  std::optional<MIEstimate> estimate;
};

// Adaptation pipeline around a frozen backbone (and optional frozen
// evaluator). Incomplete bundles are routed through
//   gate -> generate + decoupled prompts -> projection -> frozen cross stage
//   -> MI-weighted prompt -> frozen self stage -> channel fusion -> residual
//   -> pooled head.
// Complete bundles go straight to the backbone.
class PrommaModel {
 public:
  PrommaModel(Backbone& backbone, Evaluator* evaluator, const PromptConfig& prompts,
              ModuleFlags flags, double tau, std::uint64_t seed);

  const ModuleFlags& flags() const { return flags_; }
  const PromptConfig& prompt_config() const { return pcfg_; }
  Backbone& backbone() { return *backbone_; }

  // One graph per sample. MI weights come from the whole batch (values only);
  // `fixed_weights` replaces them when given.
  BatchPass forward_batch(std::span<const ModalBundle* const> batch, bool record,
                          const std::vector<PerModality<double>>* fixed_weights = nullptr);

  // Clamped predictions. Complete bundles use the backbone; incomplete ones
  // are batched in index order, `batch` at a time, with a trailing single
  // sample folded into the previous batch.
  std::vector<double> predict(const Dataset& data, std::size_t batch);

  // Parameters updated by training under the current flags.
  ParamList trainable();
  // Every parameter owned by the model, for checkpoints.
  ParamList all_params();

  CrossGenerator& generator() { return gen_; }
  PromptBank& bank() { return bank_; }
  nn::Linear& psi() { return psi_; }
  PerModality<Projection>& phi() { return phi_; }

 private:
  Backbone* backbone_;
  Evaluator* evaluator_;
  PromptConfig pcfg_;
  ModuleFlags flags_;
  double tau_;
  PromptBank bank_;
  CrossGenerator gen_;
  Decoupler dec_;
  PerModality<Projection> phi_;
  nn::Linear psi_;
  nn::Mlp head_;
};

struct AdaptTrainConfig {
  OptimizerConfig opt;
  std::vector<Scenario> scenarios = Scenario::incomplete();
  double rate = 0.3;
};

// Each batch draws one scenario uniformly and masks each sample with
// probability `rate`; only the masked samples (at least two) take a step.
TrainLog train_promma(PrommaModel& model, const Dataset& train, const AdaptTrainConfig& cfg,
                      std::uint64_t seed);

}  // namespace promma
