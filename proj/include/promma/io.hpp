// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "promma/config.hpp"
#include "promma/graph.hpp"
#include "promma/modal.hpp"

namespace promma {

// Feature container: "<prefix>.json" holds {"n", "L", "d", "dtype": "f64le"};
// "<prefix>.f64" holds n * L * d little-endian doubles, sample-major.
struct FeatureSidecar {
  std::size_t n = 0;
  std::size_t L = 0;
  std::size_t d = 0;
};

void write_feature_file(const std::string& prefix, const std::vector<Tensor>& samples);
std::vector<Tensor> read_feature_file(const std::string& prefix, FeatureSidecar* meta = nullptr);

// Writes the three modalities and labels ([1 x 1] per sample); every sample
// must be complete.
void write_dataset(const FeaturePaths& paths, const Dataset& data);
Dataset load_features(const FeaturePaths& paths);

// Checkpoint: "PMMA", u32 version, u32 length + config JSON text, u32 count,
// then per array: u32 name length, name, u32 rank, u64 extents, f64 values.
// Integers and doubles are little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const ParamList& params);
// Fills every listed parameter from the file by name; shapes must match and
// no listed name may be missing. Returns the embedded config text.
std::string load_checkpoint(const std::string& path, const ParamList& params);

}  // namespace promma
