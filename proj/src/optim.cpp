// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/optim.hpp"

#include <cmath>

#include "promma/errors.hpp"

namespace promma {

Optimizer::Optimizer(ParamList params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(std::move(cfg)) {
  if (cfg_.kind != "sgd" && cfg_.kind != "adam") {
    throw ConfigError("optimizer: unknown kind '" + cfg_.kind + "'");
  }
  if (!(cfg_.lr >= 0.0)) throw ConfigError("optimizer: negative learning rate");
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(cfg_.kind == "adam" ? Tensor(p->value.shape()) : Tensor());
    p->zero_grad();
  }
}

void Optimizer::zero_grad() { zero_grads(params_); }

void Optimizer::step() {
  ++t_;
  const double lr = cfg_.lr;
  if (lr == 0.0) return;
  const bool adam = cfg_.kind == "adam";
  const double b1 = cfg_.momentum, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i].second;
    if (p.frozen) continue;
    Tensor& m = m_[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      if (adam) {
        m[k] = b1 * m[k] + (1.0 - b1) * g;
        v_[i][k] = b2 * v_[i][k] + (1.0 - b2) * g * g;
        p.value[k] -= lr * (m[k] / c1) / (std::sqrt(v_[i][k] / c2) + 1e-8);
      } else {
        m[k] = b1 * m[k] + g;
        p.value[k] -= lr * m[k];
      }
    }
    require_finite(p.value, "optimizer step");
  }
}

}  // namespace promma
