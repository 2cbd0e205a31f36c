// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "promma/errors.hpp"

namespace promma {

void SyntheticSpec::validate() const {
  if (latent_dim == 0) throw ConfigError("synthetic: latent_dim must be >= 1");
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (lens[m] == 0 || dims[m] == 0) {
      throw ConfigError("synthetic: lengths and dimensions must be >= 1");
    }
    if (!(noise[m] >= 0.0)) throw ConfigError("synthetic: noise must be non-negative");
  }
  if (!(label_noise >= 0.0) || !(label_clamp > 0.0)) {
    throw ConfigError("synthetic: label_noise >= 0 and label_clamp > 0 required");
  }
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t k = spec.latent_dim;
  Rng maps_rng(derive_seed(seed, "synthetic.maps"));
  PerModality<Tensor> maps;
  const double map_std = 1.0 / std::sqrt(static_cast<double>(k));
  for (std::size_t m = 0; m < kModalities; ++m) {
    maps[m] = Tensor({k, spec.dims[m]});
    for (double& v : maps[m].values()) v = maps_rng.normal(0.0, map_std);
  }
  std::vector<double> w(k);
  double norm = 0.0;
  for (double& v : w) {
    v = maps_rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : w) v *= spec.label_scale / norm;

  Rng rng(derive_seed(seed, "synthetic.samples"));
  Dataset out;
  out.reserve(spec.n_samples);
  std::vector<double> z(k);
  for (std::size_t n = 0; n < spec.n_samples; ++n) {
    for (double& v : z) v = rng.normal();
    ModalBundle b;
    for (std::size_t m = 0; m < kModalities; ++m) {
      const std::size_t d = spec.dims[m];
      std::vector<double> clean(d, 0.0);
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < d; ++j) clean[j] += z[i] * maps[m].at(i, j);
      }
      Tensor f({spec.lens[m], d});
      for (std::size_t t = 0; t < spec.lens[m]; ++t) {
        for (std::size_t j = 0; j < d; ++j) f.at(t, j) = clean[j] + spec.noise[m] * rng.normal();
      }
      b.features[m] = std::move(f);
    }
    double y = spec.label_noise * rng.normal();
    for (std::size_t i = 0; i < k; ++i) y += w[i] * z[i];
    b.label = std::clamp(y, -spec.label_clamp, spec.label_clamp);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace promma
