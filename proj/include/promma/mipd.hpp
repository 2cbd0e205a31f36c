// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>

#include "promma/modal.hpp"
#include "promma/nn.hpp"

namespace promma {

struct PromptConfig {
  PerModality<std::size_t> lengths{39, 50, 50};  // modality-specific prompt rows
  std::size_t shared_length = 8;                 // rows of P_COM and P_WEI
  std::size_t d_p = 32;
  std::size_t conv_width = 3;
  double init_std = 0.02;

  void validate() const;

  bool operator==(const PromptConfig&) const = default;
};

// Shared complete prompt P_COM [L_p x d_p] and weight prompt P_WEI
// [L_p x d_model], both drawn from N(0, init_std^2).
struct PromptBank {
  Parameter com;
  Parameter wei;

  PromptBank() = default;
  PromptBank(const PromptConfig& cfg, std::size_t d_model, Rng& rng);
  void collect(ParamList& out, const std::string& prefix);
};

// Directed Conv1D generators. kernel[dst][k] maps source (dst + 1 + k) % 3
// into modality dst.
struct CrossGenerator {
  PerModality<std::array<Parameter, 2>> kernel;  // [w x d_src x d_dst]
  PerModality<std::array<Parameter, 2>> bias;    // [d_dst]
  std::size_t calls = 0;                         // generate_modality invocations

  CrossGenerator() = default;
  CrossGenerator(const PerModality<std::size_t>& dims, std::size_t width, Rng& rng);
  Parameter& kernel_for(std::size_t src, std::size_t dst);
  Parameter& bias_for(std::size_t src, std::size_t dst);
  void collect(ParamList& out, const std::string& prefix);
};

// Per-modality prompt decoupler, x + down(GELU(up(x))) on d_p. `down` starts
// at zero so every branch is the identity at initialisation.
struct Decoupler {
  PerModality<nn::Linear> up;
  PerModality<nn::Linear> down;

  Decoupler() = default;
  Decoupler(std::size_t d_p, Rng& rng);
  Var operator()(Graph& g, std::size_t m, Var x);
  void collect(ParamList& out, const std::string& prefix);
};

// Dimension map for one modality: feature rows go through `feature`, prompt
// rows through `prompt`, then a residual MLP h + down(GELU(up(h))).
struct Projection {
  nn::Linear feature;  // d_m -> d_model
  nn::Linear prompt;   // d_p -> d_model
  nn::Linear up;
  nn::Linear down;

  Projection() = default;
  Projection(std::size_t d_in, std::size_t d_p, std::size_t d_model, Rng& rng);
  static Projection zeros(std::size_t d_in, std::size_t d_p, std::size_t d_model);

  Var operator()(Graph& g, Var features, std::optional<Var> prompt_rows = std::nullopt);
  void collect(ParamList& out, const std::string& prefix);
};

// [L_dst x L_src] linear-interpolation matrix (end points aligned).
Tensor interpolation_matrix(std::size_t l_dst, std::size_t l_src);

// GELU(Conv1D) from every present source into `target`, averaged over
// sources and resampled to target_len rows.
Var generate_modality(Graph& g, const ModalBundle& bundle, std::size_t target,
                      std::size_t target_len, CrossGenerator& gen);

// P_m^Spec = decoupler_m(P_COM), tiled or truncated to lengths[m] rows.
PerModality<Var> decouple_prompts(Graph& g, PromptBank& bank, Decoupler& dec,
                                  const PerModality<std::size_t>& lengths);

// Streams handed to the cross-modal stage. Generated modalities get their
// specific prompt prepended before projection; every other modality is
// projected from its own rows (zeros when absent and skipped).
PerModality<Var> assemble(Graph& g, const ModalBundle& bundle,
                          const PerModality<std::optional<Var>>& generated,
                          const PerModality<Var>& specific, PerModality<Projection>& phi);

}  // namespace promma
