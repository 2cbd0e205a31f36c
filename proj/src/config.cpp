// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/config.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "promma/errors.hpp"
#include "promma/metrics.hpp"

namespace promma {

using nlohmann::ordered_json;

namespace {

void check_keys(const ordered_json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown config key '" + where + "." + k + "'");
  }
}

template <typename T>
void read(const ordered_json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config key '" + where + "." + key + "': " + e.what());
  }
}

template <typename T>
void read_per_modality(const ordered_json& j, const char* key, PerModality<T>& out,
                       const std::string& where) {
  if (!j.contains(key)) return;
  const std::string path = where + "." + key;
  check_keys(j.at(key), {"a", "v", "t"}, path);
  for (std::size_t m = 0; m < kModalities; ++m) read(j.at(key), std::string(1, kModalityNames[m]).c_str(), out[m], path);
}

template <typename T>
ordered_json per_modality(const PerModality<T>& v) {
  ordered_json j;
  for (std::size_t m = 0; m < kModalities; ++m) j[std::string(1, kModalityNames[m])] = v[m];
  return j;
}

OptimizerConfig read_opt(const ordered_json& j, OptimizerConfig o, const std::string& where) {
  check_keys(j, {"kind", "lr", "momentum", "beta2", "batch_size", "epochs"}, where);
  read(j, "kind", o.kind, where);
  read(j, "lr", o.lr, where);
  read(j, "momentum", o.momentum, where);
  read(j, "beta2", o.beta2, where);
  read(j, "batch_size", o.batch_size, where);
  read(j, "epochs", o.epochs, where);
  return o;
}

ordered_json opt_json(const OptimizerConfig& o) {
  return {{"kind", o.kind}, {"lr", o.lr}, {"momentum", o.momentum}, {"beta2", o.beta2},
          {"batch_size", o.batch_size}, {"epochs", o.epochs}};
}

void validate_opt(const OptimizerConfig& o, const std::string& where) {
  if (o.kind != "sgd" && o.kind != "adam") {
    throw ConfigError(where + ".kind: unknown optimizer '" + o.kind + "'");
  }
  if (!(o.lr >= 0.0)) throw ConfigError(where + ".lr must be non-negative");
  if (o.batch_size == 0) throw ConfigError(where + ".batch_size must be >= 1");
}

}  // namespace

std::string lengths_string(const PerModality<std::size_t>& v) {
  return std::to_string(v[0]) + "/" + std::to_string(v[1]) + "/" + std::to_string(v[2]);
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

void ExperimentConfig::validate() const {
  if (dataset.source != "synthetic" && dataset.source != "features") {
    throw ConfigError("dataset.source must be 'synthetic' or 'features', got '" + dataset.source + "'");
  }
  if (dataset.source == "synthetic") dataset.synthetic.validate();
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0)) {
    throw ConfigError("dataset.test_fraction must lie in (0, 1)");
  }
  backbone.validate();
  prompts.validate();
  evaluator.validate();
  if (!(tau > 0.0)) throw ConfigError("dpw.tau must be positive");
  if (scenarios.empty()) throw ConfigError("missing.scenarios must not be empty");
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("missing.rate must lie in [0, 1]");
  for (double r : sweep_rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("missing.sweep_rates entries must lie in [0, 1]");
  }
  for (const auto& m : methods) {
    if (m != "ProMMA") parse_policy(m);
  }
  if (!(md_probability >= 0.0 && md_probability < 1.0)) {
    throw ConfigError("baselines.md_probability must lie in [0, 1)");
  }
  validate_opt(pretrain_opt, "optim.pretrain");
  validate_opt(evaluator_opt, "optim.evaluator");
  validate_opt(adapt_opt, "optim.adapt");
  if (eval_batch == 0) throw ConfigError("eval_batch must be >= 1");
}

ExperimentConfig config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  const std::string root = "config";
  check_keys(j, {"seed", "output_dir", "dataset", "backbone", "prompts", "evaluator", "dpw",
                 "missing", "baselines", "modules", "optim", "eval_batch"},
             root);
  read(j, "seed", c.seed, root);
  read(j, "output_dir", c.output_dir, root);
  read(j, "eval_batch", c.eval_batch, root);

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    const std::string w = "dataset";
    check_keys(d, {"name", "source", "synthetic", "features", "test_fraction"}, w);
    read(d, "name", c.dataset.name, w);
    read(d, "source", c.dataset.source, w);
    read(d, "test_fraction", c.dataset.test_fraction, w);
    if (d.contains("synthetic")) {
      const auto& s = d.at("synthetic");
      const std::string ws = w + ".synthetic";
      check_keys(s, {"n_samples", "lens", "dims", "latent_dim", "noise", "label_scale",
                     "label_noise", "label_clamp"},
                 ws);
      SyntheticSpec& sp = c.dataset.synthetic;
      read(s, "n_samples", sp.n_samples, ws);
      read_per_modality(s, "lens", sp.lens, ws);
      read_per_modality(s, "dims", sp.dims, ws);
      read(s, "latent_dim", sp.latent_dim, ws);
      read_per_modality(s, "noise", sp.noise, ws);
      read(s, "label_scale", sp.label_scale, ws);
      read(s, "label_noise", sp.label_noise, ws);
      read(s, "label_clamp", sp.label_clamp, ws);
    }
    if (d.contains("features")) {
      const auto& f = d.at("features");
      const std::string wf = w + ".features";
      check_keys(f, {"a", "v", "t", "labels"}, wf);
      for (std::size_t m = 0; m < kModalities; ++m) {
        read(f, std::string(1, kModalityNames[m]).c_str(), c.dataset.features.prefix[m], wf);
      }
      read(f, "labels", c.dataset.features.labels, wf);
    }
  }
  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    const std::string w = "backbone";
    check_keys(b, {"d_model", "n_heads", "n_cross_layers", "n_self_layers", "ff_hidden",
                   "label_range"},
               w);
    read(b, "d_model", c.backbone.d_model, w);
    read(b, "n_heads", c.backbone.n_heads, w);
    read(b, "n_cross_layers", c.backbone.n_cross_layers, w);
    read(b, "n_self_layers", c.backbone.n_self_layers, w);
    read(b, "ff_hidden", c.backbone.ff_hidden, w);
    read(b, "label_range", c.backbone.label_range, w);
  }
  if (j.contains("prompts")) {
    const auto& p = j.at("prompts");
    const std::string w = "prompts";
    check_keys(p, {"lengths", "shared_length", "d_p", "conv_width", "init_std"}, w);
    read_per_modality(p, "lengths", c.prompts.lengths, w);
    read(p, "shared_length", c.prompts.shared_length, w);
    read(p, "d_p", c.prompts.d_p, w);
    read(p, "conv_width", c.prompts.conv_width, w);
    read(p, "init_std", c.prompts.init_std, w);
  }
  if (j.contains("evaluator")) {
    const auto& e = j.at("evaluator");
    const std::string w = "evaluator";
    check_keys(e, {"epsilon", "gate_threshold", "label_range", "hidden", "max_samples"}, w);
    read(e, "epsilon", c.evaluator.epsilon, w);
    read(e, "gate_threshold", c.evaluator.gate_threshold, w);
    read(e, "label_range", c.evaluator.label_range, w);
    read(e, "hidden", c.evaluator.hidden, w);
    read(e, "max_samples", c.evaluator.max_samples, w);
  }
  if (j.contains("dpw")) {
    check_keys(j.at("dpw"), {"tau"}, "dpw");
    read(j.at("dpw"), "tau", c.tau, "dpw");
  }
  if (j.contains("missing")) {
    const auto& m = j.at("missing");
    const std::string w = "missing";
    check_keys(m, {"scenarios", "rate", "sweep_rates"}, w);
    if (m.contains("scenarios")) {
      std::vector<std::string> names;
      read(m, "scenarios", names, w);
      c.scenarios.clear();
      for (const auto& n : names) c.scenarios.push_back(Scenario::parse(n));
    }
    read(m, "rate", c.rate, w);
    read(m, "sweep_rates", c.sweep_rates, w);
  }
  if (j.contains("baselines")) {
    const auto& b = j.at("baselines");
    check_keys(b, {"methods", "md_probability"}, "baselines");
    read(b, "methods", c.methods, "baselines");
    read(b, "md_probability", c.md_probability, "baselines");
  }
  if (j.contains("modules")) {
    const auto& m = j.at("modules");
    const std::string w = "modules";
    check_keys(m, {"mme_mipd", "dpw", "mpdc_fusion", "mpdc_residual"}, w);
    read(m, "mme_mipd", c.modules.mme_mipd, w);
    read(m, "dpw", c.modules.dpw, w);
    read(m, "mpdc_fusion", c.modules.mpdc_fusion, w);
    read(m, "mpdc_residual", c.modules.mpdc_residual, w);
  }
  if (j.contains("optim")) {
    const auto& o = j.at("optim");
    check_keys(o, {"pretrain", "evaluator", "adapt"}, "optim");
    if (o.contains("pretrain")) c.pretrain_opt = read_opt(o.at("pretrain"), c.pretrain_opt, "optim.pretrain");
    if (o.contains("evaluator")) c.evaluator_opt = read_opt(o.at("evaluator"), c.evaluator_opt, "optim.evaluator");
    if (o.contains("adapt")) c.adapt_opt = read_opt(o.at("adapt"), c.adapt_opt, "optim.adapt");
  }
  if (c.dataset.source == "synthetic") {
    c.backbone.dims = c.dataset.synthetic.dims;
    c.backbone.lens = c.dataset.synthetic.lens;
  }
  c.validate();
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  const SyntheticSpec& sp = c.dataset.synthetic;
  j["dataset"] = {
      {"name", c.dataset.name},
      {"source", c.dataset.source},
      {"test_fraction", c.dataset.test_fraction},
      {"synthetic",
       {{"n_samples", sp.n_samples}, {"lens", per_modality(sp.lens)}, {"dims", per_modality(sp.dims)},
        {"latent_dim", sp.latent_dim}, {"noise", per_modality(sp.noise)},
        {"label_scale", sp.label_scale}, {"label_noise", sp.label_noise},
        {"label_clamp", sp.label_clamp}}},
      {"features",
       {{"a", c.dataset.features.prefix[0]}, {"v", c.dataset.features.prefix[1]},
        {"t", c.dataset.features.prefix[2]}, {"labels", c.dataset.features.labels}}}};
  j["backbone"] = {{"d_model", c.backbone.d_model}, {"n_heads", c.backbone.n_heads},
                   {"n_cross_layers", c.backbone.n_cross_layers},
                   {"n_self_layers", c.backbone.n_self_layers},
                   {"ff_hidden", c.backbone.ff_hidden}, {"label_range", c.backbone.label_range}};
  j["prompts"] = {{"lengths", per_modality(c.prompts.lengths)},
                  {"shared_length", c.prompts.shared_length}, {"d_p", c.prompts.d_p},
                  {"conv_width", c.prompts.conv_width}, {"init_std", c.prompts.init_std}};
  j["evaluator"] = {{"epsilon", c.evaluator.epsilon}, {"gate_threshold", c.evaluator.gate_threshold},
                    {"label_range", c.evaluator.label_range}, {"hidden", c.evaluator.hidden},
                    {"max_samples", c.evaluator.max_samples}};
  j["dpw"] = {{"tau", c.tau}};
  std::vector<std::string> names;
  for (const auto& s : c.scenarios) names.push_back(s.name());
  j["missing"] = {{"scenarios", names}, {"rate", c.rate}, {"sweep_rates", c.sweep_rates}};
  j["baselines"] = {{"methods", c.methods}, {"md_probability", c.md_probability}};
  j["modules"] = {{"mme_mipd", c.modules.mme_mipd}, {"dpw", c.modules.dpw},
                  {"mpdc_fusion", c.modules.mpdc_fusion},
                  {"mpdc_residual", c.modules.mpdc_residual}};
  j["optim"] = {{"pretrain", opt_json(c.pretrain_opt)},
                {"evaluator", opt_json(c.evaluator_opt)},
                {"adapt", opt_json(c.adapt_opt)}};
  j["eval_batch"] = c.eval_batch;
  return j.dump(2) + "\n";
}

ExperimentConfig load_config(const std::string& path) { return config_from_json(read_text(path)); }

}  // namespace promma
