// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>

#include "promma/config.hpp"
#include "promma/metrics.hpp"
#include "promma/model.hpp"

namespace promma {

struct DataSplit {
  Dataset train;
  Dataset test;
};

// Loads (or generates) the configured dataset and holds out the trailing
// test_fraction of samples.
DataSplit load_split(const ExperimentConfig& cfg);

// Stage-by-stage experiment state. Every stage draws from its own seed
// derived from cfg.seed and a stage tag, so stages can be rerun from
// checkpoints and reproduce the same numbers.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg, std::ostream* log = nullptr);

  const ExperimentConfig& config() const { return cfg_; }
  const DataSplit& data() const { return data_; }

  void pretrain();
  void train_evaluator();
  void train_adapter();
  // Trains MD and per-scenario LB backbones when the method list needs them.
  void train_baselines();
  void train_all();
  // Switches the ablation flags used by the next train_adapter().
  void set_modules(const ModuleFlags& flags) { cfg_.modules = flags; }

  // Rows for every configured method and scenario at `rate`, plus averages.
  EvalReport evaluate(double rate, bool with_averages = true);

  void save(const std::string& dir);
  // Loads whatever checkpoints exist for stages already run elsewhere.
  void load(const std::string& dir, bool need_evaluator, bool need_adapter, bool need_baselines);

  Backbone& backbone();
  Evaluator& evaluator();
  PrommaModel& adapter();

  std::vector<std::pair<std::string, std::string>> metadata(double rate) const;

 private:
  std::uint64_t seed(const std::string& tag) const;
  void note(const std::string& stage, const std::string& tag) const;
  std::vector<double> predict(const std::string& method, const Scenario& sc, const Dataset& test);

  ExperimentConfig cfg_;
  std::ostream* log_;
  DataSplit data_;
  ModalityMeans means_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<Evaluator> evaluator_;
  std::unique_ptr<PrommaModel> adapter_;
  std::unique_ptr<Backbone> md_;
  std::map<std::string, std::unique_ptr<Backbone>> lb_;
};

// pretrain -> evaluator -> adapter -> baselines -> evaluate at cfg.rate.
EvalReport run_pipeline(const ExperimentConfig& cfg, std::ostream* log = nullptr);

// The four cumulative ablation rows: none, +MME&MiPD, +DPW, +MPDC. The
// backbone and evaluator are trained once and shared.
EvalReport run_ablation(const ExperimentConfig& cfg, std::ostream* log = nullptr);
std::vector<std::pair<std::string, ModuleFlags>> ablation_rows();

// Trains once at cfg.rate, then evaluates every method at each sweep rate.
// Method names carry the rate, e.g. "ProMMA@0.30".
EvalReport run_sweep(const ExperimentConfig& cfg, std::ostream* log = nullptr);

std::string rate_tag(double rate);

}  // namespace promma
