// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "promma/graph.hpp"
#include "promma/modal.hpp"

namespace promma {

inline constexpr double kDefaultTau = 0.1;

// InfoNCE estimate log(K) - L with K = B - 1 in-batch negatives and cosine
// scores / tau. Rows of emb_i and emb_j are paired by index. Plain values:
// nothing here is differentiated.
double infonce_mi(const Tensor& emb_i, const Tensor& emb_j, double tau = kDefaultTau);

struct MIEstimate {
  // Symmetric pairwise estimates; the diagonal is unused and left at 0.
  std::array<std::array<double, kModalities>, kModalities> I{};
  PerModality<double> score{};
  PerModality<double> w{};  // softmax(score)
  double tau = kDefaultTau;
  std::size_t negatives = 0;  // K
};

// Batch-level estimate from pooled embeddings [B x d] per modality. Scores
// average each modality's MI with the other two.
MIEstimate pairwise_weights(const PerModality<Tensor>& pooled, double tau = kDefaultTau);

// Per-sample weights: a modality that was not originally present scores only
// against partners that were.
PerModality<double> sample_weights(const MIEstimate& est, const PerModality<bool>& present);

// P_m^DWEI = w_m * P_WEI prepended to each stream along rows.
PerModality<Var> weight_and_prepend(const PerModality<double>& w, Var p_wei,
                                    const PerModality<Var>& streams);

PerModality<double> softmax3(const PerModality<double>& s);

}  // namespace promma
