// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "promma/errors.hpp"
#include "promma/metrics.hpp"

namespace promma {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw LoadError("checkpoint '" + path + "' is truncated");
  }
  return v;
}

std::string get_string(std::istream& in, const std::string& path) {
  const auto n = get<std::uint32_t>(in, path);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw LoadError("checkpoint '" + path + "' is truncated");
  return s;
}

}  // namespace

void write_feature_file(const std::string& prefix, const std::vector<Tensor>& samples) {
  FeatureSidecar meta;
  meta.n = samples.size();
  if (!samples.empty()) {
    meta.L = samples.front().rows();
    meta.d = samples.front().cols();
  }
  std::ofstream raw(prefix + ".f64", std::ios::binary);
  if (!raw) throw IoError("cannot open '" + prefix + ".f64' for writing");
  for (const auto& t : samples) {
    if (t.shape() != Shape{meta.L, meta.d}) {
      throw DimensionError("feature file '" + prefix + "': sample shape " + shape_str(t.shape()) +
                           " differs from " + shape_str({meta.L, meta.d}));
    }
    raw.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!raw) throw IoError("write to '" + prefix + ".f64' failed");
  nlohmann::ordered_json j{{"n", meta.n}, {"L", meta.L}, {"d", meta.d}, {"dtype", "f64le"}};
  write_text(prefix + ".json", j.dump() + "\n");
}

std::vector<Tensor> read_feature_file(const std::string& prefix, FeatureSidecar* meta_out) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(prefix + ".json"));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("sidecar '" + prefix + ".json': " + e.what());
  } catch (const IoError& e) {
    throw LoadError(e.what());
  }
  FeatureSidecar meta;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k != "n" && k != "L" && k != "d" && k != "dtype") {
        throw LoadError("sidecar '" + prefix + ".json': unknown key '" + k + "'");
      }
    }
    meta.n = j.at("n").get<std::size_t>();
    meta.L = j.at("L").get<std::size_t>();
    meta.d = j.at("d").get<std::size_t>();
    const auto dtype = j.at("dtype").get<std::string>();
    if (dtype != "f64le") {
      throw LoadError("sidecar '" + prefix + ".json': dtype '" + dtype + "', expected 'f64le'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("sidecar '" + prefix + ".json': " + e.what());
  }
  std::ifstream raw(prefix + ".f64", std::ios::binary | std::ios::ate);
  if (!raw) throw LoadError("cannot open '" + prefix + ".f64'");
  const auto actual = static_cast<std::size_t>(raw.tellg());
  const std::size_t per = meta.L * meta.d;
  const std::size_t expected = meta.n * per * sizeof(double);
  if (actual != expected) {
    throw LoadError("'" + prefix + ".f64': expected " + std::to_string(expected) + " bytes (n=" +
                    std::to_string(meta.n) + ", L=" + std::to_string(meta.L) + ", d=" +
                    std::to_string(meta.d) + "), found " + std::to_string(actual));
  }
  raw.seekg(0);
  std::vector<Tensor> out;
  out.reserve(meta.n);
  for (std::size_t i = 0; i < meta.n; ++i) {
    Tensor t({meta.L, meta.d});
    raw.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(per * sizeof(double)));
    if (!raw) throw LoadError("'" + prefix + ".f64': short read at sample " + std::to_string(i));
    require_finite(t, "feature file");
    out.push_back(std::move(t));
  }
  if (meta_out) *meta_out = meta;
  return out;
}

void write_dataset(const FeaturePaths& paths, const Dataset& data) {
  for (std::size_t m = 0; m < kModalities; ++m) {
    std::vector<Tensor> samples;
    samples.reserve(data.size());
    for (const auto& b : data) {
      if (!b.complete()) throw ContractError("write_dataset: bundle is incomplete");
      samples.push_back(b.features[m]);
    }
    write_feature_file(paths.prefix[m], samples);
  }
  std::vector<Tensor> labels;
  labels.reserve(data.size());
  for (const auto& b : data) labels.push_back(Tensor({1, 1}, b.label));
  write_feature_file(paths.labels, labels);
}

Dataset load_features(const FeaturePaths& paths) {
  PerModality<std::vector<Tensor>> feats;
  PerModality<FeatureSidecar> meta;
  for (std::size_t m = 0; m < kModalities; ++m) {
    feats[m] = read_feature_file(paths.prefix[m], &meta[m]);
  }
  FeatureSidecar lm;
  const auto labels = read_feature_file(paths.labels, &lm);
  for (std::size_t m = 1; m < kModalities; ++m) {
    if (meta[m].n != meta[0].n) {
      throw LoadError(std::string("sample count mismatch: ") + kModalityNames[0] + " has n=" +
                      std::to_string(meta[0].n) + ", " + kModalityNames[m] + " has n=" +
                      std::to_string(meta[m].n));
    }
  }
  if (lm.n != meta[0].n) {
    throw LoadError("sample count mismatch: features have n=" + std::to_string(meta[0].n) +
                    ", labels have n=" + std::to_string(lm.n));
  }
  if (lm.L != 1 || lm.d != 1) throw LoadError("labels file must have L = d = 1");
  Dataset out(meta[0].n);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t m = 0; m < kModalities; ++m) out[i].features[m] = std::move(feats[m][i]);
    out[i].label = labels[i][0];
  }
  return out;
}

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const ParamList& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write("PMMA", 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(config_json.size()));
  out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& s = p->value.shape();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    for (auto e : s) put<std::uint64_t>(out, e);
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

std::string load_checkpoint(const std::string& path, const ParamList& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "PMMA", 4) != 0) {
    throw LoadError("'" + path + "' is not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw LoadError("checkpoint '" + path + "' has version " + std::to_string(version) +
                    ", expected " + std::to_string(kCheckpointVersion));
  }
  std::string config = get_string(in, path);
  const auto count = get<std::uint32_t>(in, path);
  std::map<std::string, Tensor> arrays;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in, path);
    const auto rank = get<std::uint32_t>(in, path);
    Shape s(rank);
    for (auto& e : s) e = static_cast<std::size_t>(get<std::uint64_t>(in, path));
    Tensor t(s);
    if (!in.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw LoadError("checkpoint '" + path + "' is truncated in array '" + name + "'");
    }
    arrays.emplace(std::move(name), std::move(t));
  }
  for (const auto& [name, p] : params) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw LoadError("checkpoint '" + path + "' lacks array '" + name + "'");
    if (it->second.shape() != p->value.shape()) {
      throw LoadError("checkpoint '" + path + "': array '" + name + "' has shape " +
                      shape_str(it->second.shape()) + ", model expects " +
                      shape_str(p->value.shape()));
    }
    p->value = it->second;
  }
  return config;
}

}  // namespace promma
