// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/modal.hpp"

#include <algorithm>

#include "promma/errors.hpp"

namespace promma {

std::size_t ModalBundle::present_count() const {
  return static_cast<std::size_t>(std::count(present.begin(), present.end(), true));
}

std::string Scenario::name() const {
  std::string out;
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (!available[m]) continue;
    if (!out.empty()) out += ',';
    out += kModalityNames[m];
  }
  return out;
}

std::size_t Scenario::size() const {
  return static_cast<std::size_t>(std::count(available.begin(), available.end(), true));
}

Scenario Scenario::parse(std::string_view text) {
  Scenario s{{false, false, false}};
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '{' || c == '}') continue;
    auto it = std::find(kModalityNames.begin(), kModalityNames.end(), c);
    if (it == kModalityNames.end()) {
      throw ConfigError("scenario '" + std::string(text) + "': unknown modality '" +
                        std::string(1, c) + "'");
    }
    s.available[static_cast<std::size_t>(it - kModalityNames.begin())] = true;
  }
  if (s.size() == 0) throw ContractError("scenario '" + std::string(text) + "' has no modality");
  return s;
}

const std::vector<Scenario>& Scenario::incomplete() {
  static const std::vector<Scenario> all{
      Scenario{{true, false, false}}, Scenario{{false, true, false}}, Scenario{{false, false, true}},
      Scenario{{true, true, false}},  Scenario{{true, false, true}},  Scenario{{false, true, true}},
  };
  return all;
}

ModalBundle mask_to(const ModalBundle& bundle, const Scenario& scenario) {
  if (scenario.size() == 0) throw ContractError("missing plan: empty available set");
  ModalBundle out = bundle;
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (scenario.available[m]) continue;
    out.present[m] = false;
    out.features[m].fill(0.0);
  }
  return out;
}

Dataset apply_missing(const Dataset& data, const MissingPlan& plan) {
  if (plan.scenario.size() == 0) throw ContractError("missing plan: empty available set");
  if (!(plan.rate >= 0.0 && plan.rate <= 1.0)) {
    throw ContractError("missing plan: rate " + std::to_string(plan.rate) + " outside [0, 1]");
  }
  Rng rng(plan.seed);
  Dataset out;
  out.reserve(data.size());
  for (const auto& b : data) {
    if (!b.complete()) throw ContractError("missing plan applied to an incomplete dataset");
    const double u = rng.uniform();
    out.push_back(u < plan.rate ? mask_to(b, plan.scenario) : b);
  }
  return out;
}

Policy parse_policy(std::string_view text) {
  if (text == "LB") return Policy::kLowerBound;
  if (text == "MS") return Policy::kMeanSubstitution;
  if (text == "MD") return Policy::kModalityDropout;
  if (text == "zero-fill") return Policy::kZeroFill;
  throw ConfigError("unknown substitution policy '" + std::string(text) + "'");
}

std::string policy_name(Policy p) {
  switch (p) {
    case Policy::kLowerBound: return "LB";
    case Policy::kMeanSubstitution: return "MS";
    case Policy::kModalityDropout: return "MD";
    case Policy::kZeroFill: return "zero-fill";
  }
  return "?";
}

ModalityMeans ModalityMeans::from(const Dataset& train) {
  if (train.empty()) throw ContractError("mean substitution needs a non-empty training set");
  ModalityMeans out;
  for (std::size_t m = 0; m < kModalities; ++m) {
    out.mean[m] = Tensor(train.front().features[m].shape());
    std::size_t count = 0;
    for (const auto& b : train) {
      if (!b.present[m]) continue;
      const Tensor& f = b.features[m];
      for (std::size_t i = 0; i < f.size(); ++i) out.mean[m][i] += f[i];
      ++count;
    }
    if (count) {
      for (double& v : out.mean[m].values()) v /= static_cast<double>(count);
    }
  }
  return out;
}

ModalBundle substitute(const ModalBundle& bundle, Policy policy, const ModalityMeans* means) {
  if (policy != Policy::kMeanSubstitution) return bundle;
  if (!means) throw ContractError("MS substitution without training means");
  ModalBundle out = bundle;
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (bundle.present[m]) continue;
    if (means->mean[m].shape() != bundle.features[m].shape()) {
      throw DimensionError("MS substitution: mean " + shape_str(means->mean[m].shape()) +
                           " vs features " + shape_str(bundle.features[m].shape()));
    }
    out.features[m] = means->mean[m];
  }
  return out;
}

ModalBundle modality_dropout(const ModalBundle& bundle, double p, Rng& rng) {
  ModalBundle out = bundle;
  PerModality<bool> drop{false, false, false};
  for (std::size_t m = 0; m < kModalities; ++m) drop[m] = bundle.present[m] && rng.uniform() < p;
  std::size_t kept = 0;
  for (std::size_t m = 0; m < kModalities; ++m) kept += bundle.present[m] && !drop[m];
  if (kept == 0) {
    std::vector<std::size_t> candidates;
    for (std::size_t m = 0; m < kModalities; ++m) {
      if (bundle.present[m]) candidates.push_back(m);
    }
    if (candidates.empty()) return out;
    drop[candidates[rng.index(candidates.size())]] = false;
  }
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (!drop[m]) continue;
    out.present[m] = false;
    out.features[m].fill(0.0);
  }
  return out;
}

void check_bundle(const ModalBundle& b, const PerModality<std::size_t>& lens,
                  const PerModality<std::size_t>& dims) {
  for (std::size_t m = 0; m < kModalities; ++m) {
    const Shape want{lens[m], dims[m]};
    if (b.features[m].shape() != want) {
      throw ConfigError(std::string("modality ") + kModalityNames[m] + ": expected " +
                        shape_str(want) + ", got " + shape_str(b.features[m].shape()));
    }
  }
  if (b.present_count() == 0) throw ContractError("bundle has no present modality");
}

}  // namespace promma
