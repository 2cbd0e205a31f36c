// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "promma/backbone.hpp"
#include "promma/mipd.hpp"
#include "promma/mme.hpp"
#include "promma/model.hpp"
#include "promma/synthetic.hpp"

namespace promma {

struct FeaturePaths {
  PerModality<std::string> prefix;  // "<prefix>.json" + "<prefix>.f64"
  std::string labels;               // same container, d = 1, L = 1

  bool operator==(const FeaturePaths&) const = default;
};

struct DatasetConfig {
  std::string name = "synthetic";
  std::string source = "synthetic";  // "synthetic" or "features"
  SyntheticSpec synthetic;
  FeaturePaths features;
  double test_fraction = 0.2;  // trailing share of samples held out

  bool operator==(const DatasetConfig&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  DatasetConfig dataset;
  BackboneConfig backbone;  // dims/lens are taken from the dataset
  PromptConfig prompts;
  EvaluatorConfig evaluator{0.3, 0.0, 6.0, 64, 400};
  double tau = 0.1;
  std::vector<Scenario> scenarios = Scenario::incomplete();
  double rate = 0.3;
  std::vector<double> sweep_rates{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::string> methods{"ProMMA", "MS", "LB", "MD", "zero-fill"};
  double md_probability = 0.3;
  ModuleFlags modules;
  OptimizerConfig pretrain_opt{"adam", 3e-3, 0.9, 0.999, 32, 8};
  OptimizerConfig evaluator_opt{"adam", 3e-3, 0.9, 0.999, 64, 30};
  OptimizerConfig adapt_opt{"adam", 3e-3, 0.9, 0.999, 32, 10};
  std::size_t eval_batch = 32;

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig default_config();

// Keys not in the schema are rejected with their dotted path.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

// "39/50/50" style rendering of per-modality lengths.
std::string lengths_string(const PerModality<std::size_t>& v);

}  // namespace promma
