// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "promma/modal.hpp"

namespace promma {

// Planted-signal multimodal data: a shared latent z drives every modality
// (a linear map of z tiled over time plus per-frame noise) and the label.
struct SyntheticSpec {
  std::size_t n_samples = 2000;
  PerModality<std::size_t> lens{12, 12, 12};
  PerModality<std::size_t> dims{8, 8, 8};
  std::size_t latent_dim = 4;
  PerModality<double> noise{1.0, 1.0, 0.3};
  double label_scale = 2.0;  // norm of the label direction
  double label_noise = 0.1;
  double label_clamp = 3.0;

  void validate() const;

  bool operator==(const SyntheticSpec&) const = default;
};

// label = clamp(w . z + label_noise * e, -label_clamp, label_clamp).
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace promma
