// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: gen-data, pretrain, train-mme, train, eval, ablate,
// sweep and run (all stages in one go).

#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "promma/errors.hpp"
#include "promma/io.hpp"
#include "promma/pipeline.hpp"

using namespace promma;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig cfg;
  try {
    cfg = o.config.empty() ? default_config() : load_config(o.config);
  } catch (const std::exception& e) {
    throw StageError("config", e.what());
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  std::filesystem::create_directories(cfg.output_dir);
  write_text(cfg.output_dir + "/config.json", config_to_json(cfg));
  return cfg;
}

void emit(const ExperimentConfig& cfg, const std::string& stem, const EvalReport& report) {
  write_text(cfg.output_dir + "/" + stem + ".csv", to_csv(report));
  write_text(cfg.output_dir + "/" + stem + ".json", to_json(report));
  std::cout << to_csv(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Missing-modality adaptation for multimodal sentiment regression"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON experiment config (defaults when omitted)");
    sub->add_option("--seed", opt.seed, "Override the config seed");
    sub->add_option("--out", opt.out, "Output directory (overrides output_dir)");
    sub->add_flag("-q,--quiet", opt.quiet, "Do not log stage seeds to stderr");
  };
  auto* gen = app.add_subcommand("gen-data", "Write the synthetic dataset as feature files");
  auto* pre = app.add_subcommand("pretrain", "Pretrain and freeze the backbone");
  auto* mme = app.add_subcommand("train-mme", "Train the missing-modality evaluator");
  auto* train = app.add_subcommand("train", "Train the adapter and the baselines");
  auto* eval = app.add_subcommand("eval", "Evaluate saved checkpoints at the configured rate");
  auto* ablate = app.add_subcommand("ablate", "Run the four-row module ablation");
  auto* sweep = app.add_subcommand("sweep", "Train once and evaluate across missing rates");
  auto* run = app.add_subcommand("run", "All stages, checkpoints and the report");
  for (auto* s : {gen, pre, mme, train, eval, ablate, sweep, run}) add_common(s);

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = resolve(opt);
    std::ostream* log = opt.quiet ? nullptr : &std::cerr;
    const std::string& out = cfg.output_dir;
    if (gen->parsed()) {
      FeaturePaths paths;
      const std::string dir = out + "/data";
      std::filesystem::create_directories(dir);
      for (std::size_t m = 0; m < kModalities; ++m) paths.prefix[m] = dir + "/" + kModalityNames[m];
      paths.labels = dir + "/labels";
      write_dataset(paths, generate_synthetic(cfg.dataset.synthetic, derive_seed(cfg.seed, "data")));
      std::cout << "wrote " << cfg.dataset.synthetic.n_samples << " samples to " << dir << "\n";
    } else if (pre->parsed()) {
      Experiment ex(cfg, log);
      ex.pretrain();
      ex.save(out);
    } else if (mme->parsed()) {
      Experiment ex(cfg, log);
      ex.load(out, false, false, false);
      ex.train_evaluator();
      ex.save(out);
    } else if (train->parsed()) {
      Experiment ex(cfg, log);
      ex.load(out, cfg.modules.mme_mipd, false, false);
      ex.train_adapter();
      ex.train_baselines();
      ex.save(out);
    } else if (eval->parsed()) {
      Experiment ex(cfg, log);
      ex.load(out, false, true, true);
      emit(cfg, "report", ex.evaluate(cfg.rate));
    } else if (ablate->parsed()) {
      emit(cfg, "ablation", run_ablation(cfg, log));
    } else if (sweep->parsed()) {
      emit(cfg, "sweep", run_sweep(cfg, log));
    } else if (run->parsed()) {
      Experiment ex(cfg, log);
      ex.train_all();
      ex.save(out);
      emit(cfg, "report", ex.evaluate(cfg.rate));
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
