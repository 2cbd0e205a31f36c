#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "grad_suite.hpp"
#include "promma/errors.hpp"
#include "promma/metrics.hpp"
#include "promma/synthetic.hpp"

using namespace promma;
using namespace promma::testkit;

namespace {

void zero_head(Backbone& b) {
  for (auto& layer : b.head_mlp().layers) {
    layer.weight.value.fill(0.0);
    layer.bias.value.fill(0.0);
  }
}

ModalBundle zeros_bundle(const BackboneConfig& c) {
  ModalBundle b;
  for (std::size_t m = 0; m < kModalities; ++m) b.features[m] = Tensor({c.lens[m], c.dims[m]});
  return b;
}

SyntheticSpec small_spec(std::size_t n) {
  SyntheticSpec s;
  s.n_samples = n;
  s.lens = {6, 6, 6};
  s.dims = {4, 4, 4};
  return s;
}

BackboneConfig config_for(const SyntheticSpec& s) {
  BackboneConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_cross_layers = 1;
  c.n_self_layers = 1;
  c.ff_hidden = 32;
  c.dims = s.dims;
  c.lens = s.lens;
  return c;
}

}  // namespace

TEST_SUITE("backbone") {

TEST_CASE("config validation") {
  BackboneConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_heads = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = BackboneConfig{};
  c.dims[1] = 0;
  CHECK_THROWS_AS(Backbone(c, 1), ConfigError);
}

TEST_CASE("zero inputs with a zero head predict 0") {
  const BackboneConfig c = tiny_backbone();
  Backbone b(c, 3);
  zero_head(b);
  CHECK(b.predict(zeros_bundle(c)) == 0.0);
}

TEST_CASE("bundle shape mismatch") {
  const BackboneConfig c = tiny_backbone();
  Backbone b(c, 3);
  ModalBundle bad = zeros_bundle(c);
  bad.features[2] = Tensor({c.lens[2], c.dims[2] + 1});
  Graph g(false);
  CHECK_THROWS_AS(b.forward(g, bad), ConfigError);
}

TEST_CASE("injection that is not attended leaves the prediction unchanged") {
  const BackboneConfig c = tiny_backbone();
  Backbone b(c, 4);
  Rng rng(4);
  const ModalBundle x = random_bundle(c, rng);
  InjectedTokens inj;
  for (std::size_t m = 0; m < kModalities; ++m) inj.rows[m] = Tensor({3, c.d_model});
  inj.attend = false;
  Graph g0(false), g1(false);
  const double plain = b.forward(g0, x).y.value().item();
  const BackboneTrace t = b.forward(g1, x, &inj);
  CHECK(t.y.value().item() == plain);
  CHECK(t.self_in[0].rows() == c.lens[0] + 3);
  inj.attend = true;
  Graph g2(false);
  CHECK(b.forward(g2, x, &inj).y.value().item() != plain);
}

TEST_CASE("zero-valued attended tokens only change the sequence length") {
  const BackboneConfig c = tiny_backbone();
  Backbone b(c, 4);
  Rng rng(5);
  const ModalBundle x = random_bundle(c, rng);
  InjectedTokens inj;
  for (std::size_t m = 0; m < kModalities; ++m) inj.rows[m] = Tensor({2, c.d_model});
  Graph g(false);
  const BackboneTrace t = b.forward(g, x, &inj);
  for (std::size_t m = 0; m < kModalities; ++m) {
    CHECK(t.self_in[m].rows() == c.lens[m] + 2);
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < c.d_model; ++j) CHECK(t.self_in[m].value().at(i, j) == 0.0);
    }
  }
}

TEST_CASE("gradient with respect to one projection") {
  const BackboneConfig c = tiny_backbone();
  Backbone b(c, 6);
  Rng rng(6);
  const ModalBundle x = random_bundle(c, rng);
  const GradReport r = grad_check(LossFn([&](Graph& g) {
                                    Var y = b.forward(g, x).y;
                                    return ops::sum(ops::mul(y, y));
                                  }),
                                  {{"proj.v", &b.projection(1).weight}});
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("predictions are per-sample and clamped") {
  const BackboneConfig c = tiny_backbone();
  Backbone b(c, 7);
  Rng rng(7);
  Dataset d;
  for (int i = 0; i < 5; ++i) d.push_back(random_bundle(c, rng));
  std::vector<double> fwd;
  for (const auto& x : d) fwd.push_back(b.predict(x));
  std::reverse(d.begin(), d.end());
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(b.predict(d[i]) == fwd[d.size() - 1 - i]);
  CHECK(b.clamp(10.0) == 3.0);
  CHECK(b.clamp(-10.0) == -3.0);
  CHECK(b.clamp(0.25) == 0.25);
}

TEST_CASE("pretraining") {
  SUBCASE("rejects incomplete bundles") {
    const auto spec = small_spec(4);
    Dataset d = generate_synthetic(spec, 1);
    d[2] = mask_to(d[2], Scenario::parse("a"));
    Backbone b(config_for(spec), 1);
    CHECK_THROWS_AS(pretrain(b, d, OptimizerConfig{}, 1), ContractError);
  }
  SUBCASE("zero learning rate changes nothing and freezes") {
    const auto spec = small_spec(8);
    const Dataset d = generate_synthetic(spec, 2);
    Backbone b(config_for(spec), 2);
    const auto before = b.checksum();
    OptimizerConfig opt;
    opt.lr = 0.0;
    opt.epochs = 2;
    opt.batch_size = 4;
    pretrain(b, d, opt, 2);
    CHECK(b.checksum() == before);
    CHECK(b.frozen());
    CHECK_THROWS_AS(train_backbone(b, d, opt, 2), ContractError);
  }
  SUBCASE("overfits a single sample") {
    const auto spec = small_spec(1);
    const Dataset d = generate_synthetic(spec, 3);
    Backbone b(config_for(spec), 3);
    OptimizerConfig opt;
    opt.kind = "adam";
    opt.lr = 3e-3;
    opt.batch_size = 1;
    opt.epochs = 300;
    const TrainLog log = pretrain(b, d, opt, 3);
    CHECK(log.epoch_loss.back() < 0.05);
    CHECK(std::abs(b.predict(d[0]) - d[0].label) < 0.05);
  }
  SUBCASE("loss falls over the first epoch") {
    const auto spec = small_spec(256);
    const Dataset d = generate_synthetic(spec, 4);
    Backbone b(config_for(spec), 4);
    OptimizerConfig opt;
    opt.epochs = 1;
    opt.lr = 1e-2;
    opt.batch_size = 16;
    const TrainLog log = pretrain(b, d, opt, 4);
    REQUIRE(log.batch_loss.size() == 16);
    const double head = (log.batch_loss[0] + log.batch_loss[1] + log.batch_loss[2]) / 3.0;
    const double tail = (log.batch_loss[13] + log.batch_loss[14] + log.batch_loss[15]) / 3.0;
    CHECK(tail < head);
  }
}

TEST_CASE("default synthetic data is learned to high complete-data accuracy") {
  SyntheticSpec spec;
  spec.n_samples = 600;
  const Dataset all = generate_synthetic(spec, 5);
  const Dataset train(all.begin(), all.begin() + 500), test(all.begin() + 500, all.end());
  BackboneConfig c;
  c.n_cross_layers = 1;
  c.n_self_layers = 1;
  Backbone b(c, 5);
  OptimizerConfig opt;
  opt.kind = "adam";
  opt.lr = 3e-3;
  opt.epochs = 6;
  pretrain(b, train, opt, 5);
  std::vector<double> pred, truth;
  for (const auto& x : test) {
    pred.push_back(b.predict(x));
    truth.push_back(x.label);
  }
  CHECK(compute_metrics(pred, truth).acc >= 90.0);
}

TEST_CASE("a frozen backbone keeps its checksum through downstream use") {
  const BackboneConfig c = tiny_backbone();
  Backbone b(c, 8);
  b.freeze();
  const auto before = b.checksum();
  Rng rng(8);
  const ModalBundle x = random_bundle(c, rng);
  Graph g;
  Var y = b.forward(g, x).y;
  g.backward(ops::sum(ops::mul(y, y)));
  for (const auto& [name, p] : b.params()) CHECK(p->grad == Tensor(p->value.shape()));
  CHECK(b.checksum() == before);
}

}
