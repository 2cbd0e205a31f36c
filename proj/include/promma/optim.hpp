// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "promma/graph.hpp"

namespace promma {

struct OptimizerConfig {
  std::string kind = "sgd";  // "sgd" (with momentum) or "adam"
  double lr = 1e-3;
  double momentum = 0.9;
  double beta2 = 0.999;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;

  bool operator==(const OptimizerConfig&) const = default;
};

// Updates the non-frozen parameters of a fixed list in place.
class Optimizer {
 public:
  Optimizer(ParamList params, OptimizerConfig cfg);

  void zero_grad();
  void step();
  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  OptimizerConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace promma
