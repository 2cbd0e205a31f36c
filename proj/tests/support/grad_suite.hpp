// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "promma/backbone.hpp"

namespace promma::testkit {

// Tiny shapes so every case finishes in well under a second.
BackboneConfig tiny_backbone();
ModalBundle random_bundle(const BackboneConfig& cfg, Rng& rng);
void randomize(const ParamList& params, Rng& rng, double scale = 0.5);

struct GradCase {
  std::string name;
  std::function<GradReport(std::uint64_t seed)> run;
};

// Every differentiable primitive and every trainable component.
const std::vector<GradCase>& gradient_cases();

}  // namespace promma::testkit
