// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/dpw.hpp"

#include <algorithm>
#include <cmath>

#include "promma/errors.hpp"
#include "promma/ops.hpp"

namespace promma {

namespace {

std::vector<double> row_norms(const Tensor& e) {
  std::vector<double> n(e.rows());
  for (std::size_t r = 0; r < e.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < e.cols(); ++c) s += e.at(r, c) * e.at(r, c);
    n[r] = std::max(std::sqrt(s), 1e-12);
  }
  return n;
}

}  // namespace

double infonce_mi(const Tensor& emb_i, const Tensor& emb_j, double tau) {
  if (emb_i.rank() != 2 || emb_i.shape() != emb_j.shape()) {
    throw DimensionError("infonce: shapes " + shape_str(emb_i.shape()) + " and " +
                         shape_str(emb_j.shape()) + " differ");
  }
  const std::size_t b = emb_i.rows();
  if (b < 2) throw ContractError("infonce: batch of " + std::to_string(b) + " has no negatives");
  if (!(tau > 0.0)) throw ConfigError("infonce: tau must be positive");
  const std::size_t d = emb_i.cols();
  const auto ni = row_norms(emb_i);
  const auto nj = row_norms(emb_j);
  std::vector<double> s(b);
  double loss = 0.0;
  for (std::size_t a = 0; a < b; ++a) {
    double mx = -INFINITY;
    for (std::size_t k = 0; k < b; ++k) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += emb_i.at(a, c) * emb_j.at(k, c);
      s[k] = dot / (ni[a] * nj[k]) / tau;
      mx = std::max(mx, s[k]);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < b; ++k) z += std::exp(s[k] - mx);
    loss += mx + std::log(z) - s[a];
  }
  loss /= static_cast<double>(b);
  return std::log(static_cast<double>(b - 1)) - loss;
}

PerModality<double> softmax3(const PerModality<double>& s) {
  const double mx = std::max({s[0], s[1], s[2]});
  PerModality<double> e{};
  double z = 0.0;
  for (std::size_t m = 0; m < kModalities; ++m) z += (e[m] = std::exp(s[m] - mx));
  for (double& v : e) v /= z;
  return e;
}

MIEstimate pairwise_weights(const PerModality<Tensor>& pooled, double tau) {
  MIEstimate est;
  est.tau = tau;
  if (pooled[0].rows() < 2) {
    throw ContractError("pairwise weights: batch of " + std::to_string(pooled[0].rows()) +
                        " has no negatives");
  }
  est.negatives = pooled[0].rows() - 1;
  for (std::size_t i = 0; i < kModalities; ++i) {
    for (std::size_t j = i + 1; j < kModalities; ++j) {
      const double v = 0.5 * (infonce_mi(pooled[i], pooled[j], tau) +
                              infonce_mi(pooled[j], pooled[i], tau));
      est.I[i][j] = est.I[j][i] = v;
    }
  }
  for (std::size_t m = 0; m < kModalities; ++m) {
    est.score[m] = 0.5 * (est.I[m][(m + 1) % 3] + est.I[m][(m + 2) % 3]);
  }
  est.w = softmax3(est.score);
  return est;
}

PerModality<double> sample_weights(const MIEstimate& est, const PerModality<bool>& present) {
  PerModality<double> s{};
  for (std::size_t m = 0; m < kModalities; ++m) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 1; k < kModalities; ++k) {
      const std::size_t j = (m + k) % kModalities;
      if (!present[m] && !present[j]) continue;
      total += est.I[m][j];
      ++count;
    }
    s[m] = count ? total / static_cast<double>(count) : est.score[m];
  }
  return softmax3(s);
}

PerModality<Var> weight_and_prepend(const PerModality<double>& w, Var p_wei,
                                    const PerModality<Var>& streams) {
  PerModality<Var> out;
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (streams[m].cols() != p_wei.cols()) {
      throw DimensionError("weight prompt width " + std::to_string(p_wei.cols()) +
                           " != stream width " + std::to_string(streams[m].cols()));
    }
    std::array<Var, 2> parts{ops::scale(p_wei, w[m]), streams[m]};
    out[m] = ops::concat_rows(parts);
  }
  return out;
}

}  // namespace promma
