#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "grad_suite.hpp"
#include "promma/errors.hpp"
#include "promma/mme.hpp"

using namespace promma;
using namespace promma::testkit;

namespace {

OptimizerConfig adam(std::size_t epochs, std::size_t batch) {
  OptimizerConfig o;
  o.kind = "adam";
  o.lr = 1e-2;
  o.epochs = epochs;
  o.batch_size = batch;
  return o;
}

Dataset random_dataset(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) d.push_back(random_bundle(tiny_backbone(), rng));
  return d;
}

}  // namespace

TEST_SUITE("mme") {

TEST_CASE("pseudo label") {
  EvaluatorConfig cfg;
  CHECK(cfg.epsilon == 0.3);
  CHECK(cfg.label_range == 6.0);
  CHECK(pseudo_label(1.25, 1.25, cfg) == 0.0);
  CHECK(pseudo_label(3.0, -3.0, cfg) == 0.7);
  CHECK(pseudo_label(-3.0, 3.0, cfg) == 0.7);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3), c = rng.uniform(-2, 2);
    const double p = pseudo_label(a, b, cfg);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0 - cfg.epsilon + 1e-15);
    CHECK(p == pseudo_label(b, a, cfg));
    CHECK(p == doctest::Approx(pseudo_label(a + c, b + c, cfg)).epsilon(1e-12));
    if (std::abs(a - b) <= cfg.epsilon * cfg.label_range) CHECK(p == 0.0);
  }
  CHECK(pseudo_label(0.0, 1.8, cfg) == 0.0);
  CHECK(pseudo_label(0.0, 2.0, cfg) < pseudo_label(0.0, 2.5, cfg));
}

TEST_CASE("config validation") {
  EvaluatorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epsilon = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = EvaluatorConfig{};
  cfg.label_range = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("gate boundary is strict") {
  CHECK(gate_from_damage(0.0, 0.0) == GateDecision::kSkip);
  CHECK(gate_from_damage(0.5, 0.0) == GateDecision::kGenerate);
  CHECK(gate_from_damage(0.3, 0.3) == GateDecision::kSkip);
  CHECK(gate_from_damage(std::nextafter(0.3, 1.0), 0.3) == GateDecision::kGenerate);
  // Damage never exceeds 1 - epsilon on its training targets.
  CHECK(gate_from_damage(0.7, 1.0) == GateDecision::kSkip);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const double d = rng.uniform(-1, 1), f = rng.uniform(-1, 1), f2 = f + rng.uniform(0, 1);
    if (gate_from_damage(d, f) == GateDecision::kSkip) CHECK(gate_from_damage(d, f2) == GateDecision::kSkip);
  }
}

TEST_CASE("encoding and gate on a bundle") {
  const BackboneConfig c = tiny_backbone();
  EvaluatorConfig cfg;
  Evaluator ev(c.dims, cfg, 3);
  Rng rng(3);
  const ModalBundle full = random_bundle(c, rng);
  const ModalBundle masked = mask_to(full, Scenario::parse("v"));
  const Tensor e = ev.encode(masked);
  REQUIRE(e.shape() == Shape{1, 3 + 2 + 3 + 3});
  CHECK(e[8] == 0.0);
  CHECK(e[9] == 1.0);
  CHECK(e[10] == 0.0);
  double mean_v0 = 0.0;
  for (std::size_t t = 0; t < c.lens[1]; ++t) mean_v0 += full.features[1].at(t, 0) / double(c.lens[1]);
  CHECK(e[3] == doctest::Approx(mean_v0).epsilon(1e-14));
  CHECK(ev.gate(full) == GateDecision::kSkip);
  ev.config().gate_threshold = 1e9;
  CHECK(ev.gate(masked) == GateDecision::kSkip);
  ev.config().gate_threshold = -1e9;
  CHECK(ev.gate(masked) == GateDecision::kGenerate);
}

TEST_CASE("evaluator set needs a frozen backbone") {
  const BackboneConfig c = tiny_backbone();
  Backbone b(c, 4);
  const Dataset d = random_dataset(3, 4);
  CHECK_THROWS_AS(build_evaluator_set(b, d, EvaluatorConfig{}), ContractError);
  b.freeze();
  const auto set = build_evaluator_set(b, d, EvaluatorConfig{});
  CHECK(set.size() == 3 * 6);
  for (const auto& s : set) {
    CHECK_FALSE(s.masked.complete());
    CHECK(s.target >= 0.0);
  }
}

TEST_CASE("constant predictions give zero targets and a near-zero evaluator") {
  const BackboneConfig c = tiny_backbone();
  Backbone b(c, 5);
  for (auto& l : b.head_mlp().layers) {
    l.weight.value.fill(0.0);
    l.bias.value.fill(0.0);
  }
  b.freeze();
  const Dataset d = random_dataset(40, 5);
  const auto set = build_evaluator_set(b, d, EvaluatorConfig{});
  for (const auto& s : set) CHECK(s.target == 0.0);
  EvaluatorConfig cfg;
  cfg.hidden = 16;
  Evaluator ev(c.dims, cfg, 5);
  fit_evaluator(ev, set, adam(40, 32), 5);
  CHECK(ev.frozen());
  for (const auto& s : set) CHECK(std::abs(ev.damage(s.masked)) < 0.05);
}

TEST_CASE("overfits ten samples") {
  const BackboneConfig c = tiny_backbone();
  const Dataset d = random_dataset(10, 6);
  Rng rng(6);
  std::vector<EvaluatorSample> set;
  for (const auto& b : d) set.push_back({mask_to(b, Scenario::parse("a,t")), rng.uniform(0.0, 0.7)});
  EvaluatorConfig cfg;
  cfg.hidden = 32;
  Evaluator ev(c.dims, cfg, 6);
  const TrainLog log = fit_evaluator(ev, set, adam(600, 10), 6);
  CHECK(log.epoch_loss.back() < 0.02);
  CHECK(log.epoch_loss.back() < log.epoch_loss.front());
}

TEST_CASE("ranks a modality-critical cluster above a redundant one") {
  const BackboneConfig c = tiny_backbone();
  Rng rng(7);
  std::vector<EvaluatorSample> train, test;
  auto make = [&](bool critical) {
    ModalBundle b = random_bundle(c, rng);
    for (double& v : b.features[2].values()) v += critical ? 1.5 : -1.5;
    const ModalBundle masked = mask_to(b, Scenario::parse("v,t"));
    return EvaluatorSample{masked, critical ? 0.4 + 0.1 * rng.uniform() : 0.05 * rng.uniform()};
  };
  for (int i = 0; i < 200; ++i) train.push_back(make(i % 2 == 0));
  for (int i = 0; i < 100; ++i) test.push_back(make(i % 2 == 0));
  EvaluatorConfig cfg;
  cfg.hidden = 16;
  Evaluator ev(c.dims, cfg, 7);
  fit_evaluator(ev, train, adam(30, 32), 7);
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < test.size(); ++i) (i % 2 == 0 ? pos : neg).push_back(ev.damage(test[i].masked));
  double wins = 0.0;
  for (double p : pos) {
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  }
  CHECK(wins / double(pos.size() * neg.size()) > 0.9);
}

TEST_CASE("training on real pseudo labels freezes and lowers the loss") {
  const BackboneConfig c = tiny_backbone();
  Backbone b(c, 8);
  b.freeze();
  const auto sum = b.checksum();
  const Dataset d = random_dataset(60, 8);
  EvaluatorConfig cfg;
  cfg.hidden = 16;
  cfg.epsilon = 0.01;
  Evaluator ev(c.dims, cfg, 8);
  const TrainLog log = train_evaluator(ev, b, d, adam(5, 36), 8);
  CHECK(ev.frozen());
  CHECK(log.epoch_loss.back() < log.epoch_loss.front());
  CHECK(b.checksum() == sum);
  const auto frozen_sum = checksum(ev.params());
  Graph g;
  Var y = ev.forward(g, mask_to(d[0], Scenario::parse("a")));
  g.backward(ops::sum(y));
  CHECK(checksum(ev.params()) == frozen_sum);
}

}
