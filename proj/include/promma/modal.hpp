// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promma/rng.hpp"
#include "promma/tensor.hpp"

namespace promma {

inline constexpr std::size_t kModalities = 3;
inline constexpr std::array<char, kModalities> kModalityNames{'a', 'v', 't'};

template <typename T>
using PerModality = std::array<T, kModalities>;

// One sample: audio/visual/text feature sequences [L_m x d_m] plus presence.
// An absent modality carries an all-zero placeholder of the correct shape.
struct ModalBundle {
  PerModality<Tensor> features;
  PerModality<bool> present{true, true, true};
  double label = 0.0;

  bool complete() const { return present[0] && present[1] && present[2]; }
  std::size_t present_count() const;
};

using Dataset = std::vector<ModalBundle>;

// The set of AVAILABLE modalities.
struct Scenario {
  PerModality<bool> available{true, true, true};

  // "a", "v,t", ...
  std::string name() const;
  static Scenario parse(std::string_view text);
  // The six incomplete scenarios in column order {a},{v},{t},{a,v},{a,t},{v,t}.
  static const std::vector<Scenario>& incomplete();
  std::size_t size() const;

  bool operator==(const Scenario&) const = default;
};

struct MissingPlan {
  Scenario scenario;
  double rate = 0.3;
  std::uint64_t seed = 0;
};

// Each sample is selected independently with probability plan.rate (one
// uniform draw per sample in index order, so selections are nested across
// rates for a fixed seed). Selected samples keep only the scenario's modalities.
Dataset apply_missing(const Dataset& data, const MissingPlan& plan);

// Zeroes every modality not in `scenario`.
ModalBundle mask_to(const ModalBundle& bundle, const Scenario& scenario);

enum class Policy { kLowerBound, kMeanSubstitution, kModalityDropout, kZeroFill };

Policy parse_policy(std::string_view text);
std::string policy_name(Policy p);

// Per-modality mean sequence over a training set.
struct ModalityMeans {
  PerModality<Tensor> mean;

  static ModalityMeans from(const Dataset& train);
};

// Prepares a bundle for the backbone under a baseline policy. Only MS changes
// anything: absent modalities take the stored training mean. Presence flags
// are preserved.
ModalBundle substitute(const ModalBundle& bundle, Policy policy,
                       const ModalityMeans* means = nullptr);

// Training-time augmentation for the MD baseline: each present modality is
// zeroed with probability p; at least one modality always survives.
ModalBundle modality_dropout(const ModalBundle& bundle, double p, Rng& rng);

// Validates shapes against per-modality extents and the zero-placeholder rule.
void check_bundle(const ModalBundle& b, const PerModality<std::size_t>& lens,
                  const PerModality<std::size_t>& dims);

}  // namespace promma
