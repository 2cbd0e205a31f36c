// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/mpdc.hpp"

#include "promma/errors.hpp"

namespace promma {

PerModality<Var> channel_weights(const PerModality<Var>& x) {
  const std::size_t d = x[0].cols();
  std::array<Var, kModalities> means;
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (x[m].cols() != d) {
      throw DimensionError("channel weights: widths " + std::to_string(d) + " and " +
                           std::to_string(x[m].cols()) + " differ");
    }
    means[m] = ops::mean_rows(x[m]);
  }
  Var w = ops::softmax(ops::concat_rows(means), 0);
  PerModality<Var> out;
  for (std::size_t m = 0; m < kModalities; ++m) out[m] = ops::slice_rows(w, m, m + 1);
  return out;
}

Var extend_fuse(Var weights, Var x) { return ops::add_rowvec(x, weights); }

Var residual_connect(Graph& g, Var o, Var p_com, nn::Linear& psi) {
  return ops::add_leading_rows(o, psi(g, p_com));
}

}  // namespace promma
