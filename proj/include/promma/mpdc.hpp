// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "promma/modal.hpp"
#include "promma/nn.hpp"

namespace promma {

// Per channel, softmax across modalities of the row means. Returns one
// [1 x d_model] weight row per modality.
PerModality<Var> channel_weights(const PerModality<Var>& x);

// x + the weight row broadcast to every row of x.
Var extend_fuse(Var weights, Var x);

// Adds psi(P_COM) onto the leading min(L_p, rows(o)) rows of o.
Var residual_connect(Graph& g, Var o, Var p_com, nn::Linear& psi);

}  // namespace promma
