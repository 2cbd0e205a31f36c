// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "promma/modal.hpp"
#include "promma/nn.hpp"
#include "promma/optim.hpp"

namespace promma {

struct BackboneConfig {
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t n_cross_layers = 2;
  std::size_t n_self_layers = 2;
  std::size_t ff_hidden = 64;
  PerModality<std::size_t> dims{8, 8, 8};
  PerModality<std::size_t> lens{12, 12, 12};
  double label_range = 6.0;  // predictions are clamped to [-R/2, R/2]

  void validate() const;

  bool operator==(const BackboneConfig&) const = default;
};

// Extra rows prepended to each modality before self-attention. With
// attend == false the rows are excluded as keys and from pooling, which makes
// the injection a no-op on the prediction.
struct InjectedTokens {
  PerModality<Tensor> rows;
  bool attend = true;
};

struct BackboneTrace {
  PerModality<Var> inputs;    // projected inputs, [L_m x d_model]
  PerModality<Var> cross;     // cross-modal outputs
  PerModality<Var> self_in;   // self-attention inputs (after injection)
  PerModality<Var> self_out;  // self-attention outputs
  Var pooled;                 // [1 x 3 d_model]
  Var y;                      // [1 x 1], unclamped
};

// Small MULT-style backbone: per-modality projection, cross-modal transformer
// stacks for every ordered pair, a merge per target modality, per-modality
// self-attention stacks, mean pooling and a regression head.
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& cfg, std::uint64_t seed);

  const BackboneConfig& config() const { return cfg_; }

  PerModality<Var> project(Graph& g, const ModalBundle& bundle);
  // Streams into target m are (m+1)%3 -> m and (m+2)%3 -> m, merged along
  // features and projected back to d_model.
  PerModality<Var> cross_stage(Graph& g, const PerModality<Var>& inputs);
  // Rows below masked_prefix[m] are never attended to.
  PerModality<Var> self_stage(Graph& g, const PerModality<Var>& x,
                              const PerModality<std::size_t>& masked_prefix = {0, 0, 0});
  // Mean over rows at or after skip[m], concatenated in (a, v, t) order.
  Var pool(Graph& g, const PerModality<Var>& x, const PerModality<std::size_t>& skip = {0, 0, 0});
  Var head(Graph& g, Var pooled);

  BackboneTrace forward(Graph& g, const ModalBundle& bundle, const InjectedTokens* injected = nullptr);
  // Clamped prediction from a non-recording pass.
  double predict(const ModalBundle& bundle);
  double clamp(double y) const;

  ParamList params();
  ParamList head_params();
  void freeze();
  bool frozen() const { return frozen_; }
  std::uint64_t checksum();

  nn::Mlp& head_mlp() { return head_; }
  nn::Linear& projection(std::size_t m) { return proj_[m]; }

 private:
  BackboneConfig cfg_;
  PerModality<nn::Linear> proj_;
  // cross_[target][k] is the stack for source (target + 1 + k) % 3.
  PerModality<std::array<std::vector<nn::TransformerLayer>, 2>> cross_;
  PerModality<nn::Linear> merge_;
  PerModality<std::vector<nn::TransformerLayer>> self_;
  PerModality<nn::LayerNorm> final_ln_;
  nn::Mlp head_;
  bool frozen_ = false;
};

struct TrainLog {
  std::vector<double> batch_loss;  // mean L1 per batch, in order
  std::vector<double> epoch_loss;
  std::size_t batches_per_epoch = 0;
};

// Trains every backbone parameter with per-sample L1 loss. `augment`, when
// set, rewrites each sample before its forward pass (MD baseline).
TrainLog train_backbone(Backbone& model, const Dataset& train, const OptimizerConfig& opt,
                        std::uint64_t seed,
                        const std::function<ModalBundle(const ModalBundle&, Rng&)>& augment = {});

// Pretraining on complete data; the returned backbone is frozen.
TrainLog pretrain(Backbone& model, const Dataset& train, const OptimizerConfig& opt,
                  std::uint64_t seed);

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

}  // namespace promma
