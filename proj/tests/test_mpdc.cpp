#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "promma/mpdc.hpp"

using namespace promma;
using testkit::random_tensor;

TEST_SUITE("mpdc") {

TEST_CASE("identical streams give uniform channel weights") {
  Rng rng(1);
  Graph g(false);
  Var x = g.constant(random_tensor({5, 4}, rng));
  const auto w = channel_weights({x, x, x});
  for (const auto& v : w) {
    REQUIRE(v.value().size() == 4);
    for (double e : v.value().values()) CHECK(e == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
}

TEST_CASE("channel weights form a simplex per channel") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Graph g(false);
    PerModality<Var> x{g.constant(random_tensor({3, 6}, rng, 4.0)), g.constant(random_tensor({7, 6}, rng, 4.0)),
                       g.constant(random_tensor({2, 6}, rng, 4.0))};
    const auto w = channel_weights(x);
    for (std::size_t c = 0; c < 6; ++c) {
      double sum = 0.0;
      for (std::size_t m = 0; m < 3; ++m) {
        const double v = w[m].value()[c];
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("a dominant channel mean takes almost all the weight") {
  Rng rng(2);
  Graph g(false);
  Tensor a = random_tensor({4, 3}, rng, 0.01), v = random_tensor({4, 3}, rng, 0.01), t = random_tensor({4, 3}, rng, 0.01);
  for (std::size_t r = 0; r < 4; ++r) v.at(r, 1) += 10.0;
  const auto w = channel_weights({g.constant(a), g.constant(v), g.constant(t)});
  CHECK(w[1].value()[1] > 0.99);
  CHECK(w[1].value()[0] < 0.5);
}

TEST_CASE("extension broadcasts over rows") {
  Rng rng(3);
  Graph g(false);
  const Tensor x = random_tensor({4, 3}, rng);
  CHECK(extend_fuse(g.constant(Tensor({3})), g.constant(x)).value() == x);
  const Tensor y = extend_fuse(g.constant(Tensor({3}, 0.25)), g.constant(x)).value();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i] + 0.25);
}

TEST_CASE("residual connection") {
  Rng rng(4);
  Graph g(false);
  const Tensor o = random_tensor({5, 4}, rng);
  SUBCASE("zero-initialized map is the identity") {
    nn::Linear psi = nn::Linear::zeros(3, 4);
    CHECK(residual_connect(g, g.constant(o), g.constant(random_tensor({2, 3}, rng)), psi).value() == o);
  }
  SUBCASE("a longer prompt is truncated to the stream") {
    nn::Linear psi(3, 4, rng);
    const Tensor p = random_tensor({8, 3}, rng);
    const Tensor out = residual_connect(g, g.constant(o), g.constant(p), psi).value();
    CHECK(out.shape() == o.shape());
  }
  SUBCASE("only the leading rows move, linearly in the prompt") {
    nn::Linear psi(3, 4, rng);
    const Tensor p = random_tensor({2, 3}, rng), delta = random_tensor({2, 3}, rng);
    Tensor p2 = p;
    for (std::size_t i = 0; i < p.size(); ++i) p2[i] += delta[i];
    const Tensor y1 = residual_connect(g, g.constant(o), g.constant(p), psi).value();
    const Tensor y2 = residual_connect(g, g.constant(o), g.constant(p2), psi).value();
    const Tensor lin = ops::matmul(g.constant(delta), g.constant(psi.weight.value)).value();
    for (std::size_t r = 0; r < 5; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        const double d = y2.at(r, c) - y1.at(r, c);
        if (r < 2) {
          CHECK(d == doctest::Approx(lin.at(r, c)).epsilon(1e-12));
        } else {
          CHECK(d == 0.0);
        }
      }
    }
  }
}

TEST_CASE("gradient through weights and extension") {
  Rng rng(5);
  PerModality<Parameter> x{Parameter(random_tensor({3, 4}, rng)), Parameter(random_tensor({5, 4}, rng)),
                           Parameter(random_tensor({2, 4}, rng))};
  PerModality<Tensor> r{random_tensor({3, 4}, rng), random_tensor({5, 4}, rng), random_tensor({2, 4}, rng)};
  const auto rep = testkit::grad_check(
      testkit::LossFn([&](Graph& g) {
        PerModality<Var> v{g.param(x[0]), g.param(x[1]), g.param(x[2])};
        const auto w = channel_weights(v);
        Var total = testkit::probe(extend_fuse(w[0], v[0]), r[0]);
        for (std::size_t m = 1; m < 3; ++m) total = ops::add(total, testkit::probe(extend_fuse(w[m], v[m]), r[m]));
        return total;
      }),
      {{"a", &x[0]}, {"v", &x[1]}, {"t", &x[2]}});
  CHECK(rep.max_rel_err < 1e-4);
}

}
