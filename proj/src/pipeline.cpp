// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>

#include "promma/errors.hpp"
#include "promma/io.hpp"

namespace promma {

namespace {

template <typename F>
auto stage(const std::string& name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::string scenario_file_tag(const Scenario& sc) {
  std::string s = sc.name();
  for (char& c : s) {
    if (c == ',') c = '_';
  }
  return s;
}

bool wants(const ExperimentConfig& cfg, const std::string& method) {
  return std::find(cfg.methods.begin(), cfg.methods.end(), method) != cfg.methods.end();
}

}  // namespace

std::string rate_tag(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", rate);
  return buf;
}

DataSplit load_split(const ExperimentConfig& cfg) {
  Dataset all = cfg.dataset.source == "synthetic"
                    ? generate_synthetic(cfg.dataset.synthetic, derive_seed(cfg.seed, "data"))
                    : load_features(cfg.dataset.features);
  const auto n_test = static_cast<std::size_t>(
      std::llround(cfg.dataset.test_fraction * static_cast<double>(all.size())));
  DataSplit s;
  const std::size_t n_train = all.size() - n_test;
  s.train.assign(std::make_move_iterator(all.begin()),
                 std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(n_train)));
  s.test.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(n_train)),
                std::make_move_iterator(all.end()));
  return s;
}

Experiment::Experiment(ExperimentConfig cfg, std::ostream* log) : cfg_(std::move(cfg)), log_(log) {
  stage("config", [&] { cfg_.validate(); });
  data_ = stage("data", [&] { return load_split(cfg_); });
  stage("data", [&] {
    if (data_.train.empty() || data_.test.empty()) {
      throw ContractError("train/test split left an empty side (" +
                          std::to_string(data_.train.size()) + "/" +
                          std::to_string(data_.test.size()) + ")");
    }
    const ModalBundle& first = data_.train.front();
    for (std::size_t m = 0; m < kModalities; ++m) {
      cfg_.backbone.lens[m] = first.features[m].rows();
      cfg_.backbone.dims[m] = first.features[m].cols();
    }
    means_ = ModalityMeans::from(data_.train);
  });
  note("data", "data");
}

std::uint64_t Experiment::seed(const std::string& tag) const { return derive_seed(cfg_.seed, tag); }

void Experiment::note(const std::string& stage_name, const std::string& tag) const {
  if (log_) *log_ << "[" << stage_name << "] seed " << cfg_.seed << " tag " << tag << " -> " << seed(tag) << "\n";
}

Backbone& Experiment::backbone() {
  if (!backbone_) throw ContractError("backbone has not been trained or loaded");
  return *backbone_;
}

Evaluator& Experiment::evaluator() {
  if (!evaluator_) throw ContractError("evaluator has not been trained or loaded");
  return *evaluator_;
}

PrommaModel& Experiment::adapter() {
  if (!adapter_) throw ContractError("adapter has not been trained or loaded");
  return *adapter_;
}

namespace {

class StageTimer {
 public:
  StageTimer(std::ostream* log, const char* name)
      : log_(log), name_(name), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    if (!log_) return;
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start_;
    *log_ << "[" << name_ << "] " << dt.count() << " s\n";
  }

 private:
  std::ostream* log_;
  const char* name_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

void Experiment::pretrain() {
  StageTimer timer(log_, "pretrain");
  stage("pretrain", [&] {
    note("pretrain", "backbone.init");
    note("pretrain", "backbone.train");
    backbone_ = std::make_unique<Backbone>(cfg_.backbone, seed("backbone.init"));
    const TrainLog log = promma::pretrain(*backbone_, data_.train, cfg_.pretrain_opt, seed("backbone.train"));
    if (log_ && !log.epoch_loss.empty()) {
      *log_ << "[pretrain] final epoch L1 " << log.epoch_loss.back() << "\n";
    }
  });
}

void Experiment::train_evaluator() {
  StageTimer timer(log_, "train-mme");
  stage("train-mme", [&] {
    note("train-mme", "evaluator.init");
    note("train-mme", "evaluator.train");
    evaluator_ = std::make_unique<Evaluator>(cfg_.backbone.dims, cfg_.evaluator, seed("evaluator.init"));
    const TrainLog log = promma::train_evaluator(*evaluator_, backbone(), data_.train,
                                                 cfg_.evaluator_opt, seed("evaluator.train"));
    if (log_ && !log.epoch_loss.empty()) {
      *log_ << "[train-mme] final epoch L1 " << log.epoch_loss.back() << "\n";
    }
  });
}

void Experiment::train_adapter() {
  StageTimer timer(log_, "train");
  stage("train", [&] {
    note("train", "adapter.init");
    note("train", "adapter.train");
    Evaluator* ev = cfg_.modules.mme_mipd ? &evaluator() : evaluator_.get();
    adapter_ = std::make_unique<PrommaModel>(backbone(), ev, cfg_.prompts, cfg_.modules, cfg_.tau,
                                             seed("adapter.init"));
    AdaptTrainConfig tc{cfg_.adapt_opt, cfg_.scenarios, cfg_.rate};
    const TrainLog log = train_promma(*adapter_, data_.train, tc, seed("adapter.train"));
    if (log_ && !log.epoch_loss.empty()) {
      *log_ << "[train] final epoch L1 " << log.epoch_loss.back() << "\n";
    }
  });
}

void Experiment::train_baselines() {
  StageTimer timer(log_, "baselines");
  stage("baselines", [&] {
    if (wants(cfg_, "MD")) {
      note("baselines", "md.train");
      md_ = std::make_unique<Backbone>(cfg_.backbone, seed("backbone.init"));
      const double p = cfg_.md_probability;
      train_backbone(*md_, data_.train, cfg_.pretrain_opt, seed("md.train"),
                     [p](const ModalBundle& b, Rng& rng) { return modality_dropout(b, p, rng); });
      md_->freeze();
    }
    if (wants(cfg_, "LB")) {
      for (const auto& sc : cfg_.scenarios) {
        const std::string tag = "lb.missing." + sc.name();
        note("baselines", tag);
        const Dataset train = apply_missing(data_.train, {sc, cfg_.rate, seed(tag)});
        auto lb = std::make_unique<Backbone>(cfg_.backbone, seed("backbone.init"));
        train_backbone(*lb, train, cfg_.pretrain_opt, seed("backbone.train"));
        lb->freeze();
        lb_[sc.name()] = std::move(lb);
      }
    }
  });
}

void Experiment::train_all() {
  pretrain();
  train_evaluator();
  train_adapter();
  train_baselines();
}

std::vector<double> Experiment::predict(const std::string& method, const Scenario& sc,
                                        const Dataset& test) {
  std::vector<double> out;
  out.reserve(test.size());
  if (method == "ProMMA") return adapter().predict(test, cfg_.eval_batch);
  switch (parse_policy(method)) {
    case Policy::kMeanSubstitution:
      for (const auto& b : test) {
        out.push_back(backbone().predict(substitute(b, Policy::kMeanSubstitution, &means_)));
      }
      break;
    case Policy::kZeroFill:
      for (const auto& b : test) out.push_back(backbone().predict(b));
      break;
    case Policy::kModalityDropout:
      if (!md_) throw ContractError("MD baseline has not been trained or loaded");
      for (const auto& b : test) out.push_back(md_->predict(b));
      break;
    case Policy::kLowerBound: {
      auto it = lb_.find(sc.name());
      if (it == lb_.end()) throw ContractError("LB baseline for scenario " + sc.name() + " is missing");
      for (const auto& b : test) out.push_back(it->second->predict(b));
      break;
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> Experiment::metadata(double rate) const {
  auto num = [](double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  return {{"dataset", cfg_.dataset.name},
          {"seed", std::to_string(cfg_.seed)},
          {"epsilon", num(cfg_.evaluator.epsilon)},
          {"tau", num(cfg_.tau)},
          {"gate_threshold", num(cfg_.evaluator.gate_threshold)},
          {"prompt_lengths", lengths_string(cfg_.prompts.lengths)},
          {"missing_rate", num(rate)},
          {"modules", cfg_.modules.name()},
          {"train_samples", std::to_string(data_.train.size())},
          {"test_samples", std::to_string(data_.test.size())}};
}

EvalReport Experiment::evaluate(double rate, bool with_averages) {
  StageTimer timer(log_, "eval");
  return stage("eval", [&] {
    EvalReport report;
    report.metadata = metadata(rate);
    std::vector<double> labels;
    for (const auto& b : data_.test) labels.push_back(b.label);
    for (const auto& sc : cfg_.scenarios) {
      const Dataset test = apply_missing(data_.test, {sc, rate, seed("eval.missing." + sc.name())});
      for (const auto& method : cfg_.methods) {
        report.rows.push_back({cfg_.dataset.name, method, sc.name(),
                               compute_metrics(predict(method, sc, test), labels)});
      }
    }
    if (with_averages) report.add_averages();
    return report;
  });
}

void Experiment::save(const std::string& dir) {
  stage("save", [&] {
    std::filesystem::create_directories(dir);
    const std::string cj = config_to_json(cfg_);
    if (backbone_) save_checkpoint(dir + "/backbone.ckpt", cj, backbone_->params());
    if (evaluator_) save_checkpoint(dir + "/evaluator.ckpt", cj, evaluator_->params());
    if (adapter_) save_checkpoint(dir + "/adapter.ckpt", cj, adapter_->all_params());
    if (md_) save_checkpoint(dir + "/md.ckpt", cj, md_->params());
    for (const auto& [name, b] : lb_) {
      save_checkpoint(dir + "/lb_" + scenario_file_tag(Scenario::parse(name)) + ".ckpt", cj,
                      b->params());
    }
  });
}

void Experiment::load(const std::string& dir, bool need_evaluator, bool need_adapter,
                      bool need_baselines) {
  stage("load", [&] {
    backbone_ = std::make_unique<Backbone>(cfg_.backbone, seed("backbone.init"));
    load_checkpoint(dir + "/backbone.ckpt", backbone_->params());
    backbone_->freeze();
    const bool ev_needed = need_evaluator || (need_adapter && cfg_.modules.mme_mipd);
    if (ev_needed || std::filesystem::exists(dir + "/evaluator.ckpt")) {
      evaluator_ = std::make_unique<Evaluator>(cfg_.backbone.dims, cfg_.evaluator, seed("evaluator.init"));
      load_checkpoint(dir + "/evaluator.ckpt", evaluator_->params());
      evaluator_->freeze();
    }
    if (need_adapter) {
      adapter_ = std::make_unique<PrommaModel>(*backbone_, evaluator_.get(), cfg_.prompts,
                                               cfg_.modules, cfg_.tau, seed("adapter.init"));
      load_checkpoint(dir + "/adapter.ckpt", adapter_->all_params());
    }
    if (need_baselines) {
      if (wants(cfg_, "MD")) {
        md_ = std::make_unique<Backbone>(cfg_.backbone, seed("backbone.init"));
        load_checkpoint(dir + "/md.ckpt", md_->params());
        md_->freeze();
      }
      if (wants(cfg_, "LB")) {
        for (const auto& sc : cfg_.scenarios) {
          auto lb = std::make_unique<Backbone>(cfg_.backbone, seed("backbone.init"));
          load_checkpoint(dir + "/lb_" + scenario_file_tag(sc) + ".ckpt", lb->params());
          lb->freeze();
          lb_[sc.name()] = std::move(lb);
        }
      }
    }
  });
}

EvalReport run_pipeline(const ExperimentConfig& cfg, std::ostream* log) {
  Experiment ex(cfg, log);
  ex.train_all();
  return ex.evaluate(cfg.rate);
}

std::vector<std::pair<std::string, ModuleFlags>> ablation_rows() {
  return {{"none", ModuleFlags::none()},
          {"+MME&MiPD", {true, false, false, false}},
          {"+DPW", {true, true, false, false}},
          {"+MPDC", {true, true, true, true}}};
}

EvalReport run_ablation(const ExperimentConfig& cfg, std::ostream* log) {
  ExperimentConfig base = cfg;
  base.methods = {"ProMMA"};
  Experiment ex(base, log);
  ex.pretrain();
  ex.train_evaluator();
  EvalReport report;
  for (const auto& [label, flags] : ablation_rows()) {
    ex.set_modules(flags);
    ex.train_adapter();
    EvalReport r = ex.evaluate(cfg.rate, false);
    if (report.metadata.empty()) {
      report.metadata = r.metadata;
      for (auto& [k, v] : report.metadata) {
        if (k == "modules") v = "ablation";
      }
    }
    for (auto& rr : r.rows) {
      rr.method = label;
      report.rows.push_back(rr);
    }
  }
  report.add_averages();
  return report;
}

EvalReport run_sweep(const ExperimentConfig& cfg, std::ostream* log) {
  Experiment ex(cfg, log);
  ex.train_all();
  EvalReport report;
  report.metadata = ex.metadata(cfg.rate);
  for (auto& [k, v] : report.metadata) {
    if (k == "missing_rate") v = "sweep (trained at " + v + ")";
  }
  for (double r : cfg.sweep_rates) {
    EvalReport part = ex.evaluate(r, false);
    for (auto& row : part.rows) {
      row.method += "@" + rate_tag(r);
      report.rows.push_back(row);
    }
  }
  report.add_averages();
  return report;
}

}  // namespace promma
