#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "promma/errors.hpp"
#include "promma/dpw.hpp"

using namespace promma;
using testkit::random_tensor;

namespace {

Tensor noisy_copy(const Tensor& x, double sigma, Rng& rng) {
  Tensor y = x;
  for (double& v : y.values()) v += sigma * rng.normal();
  return y;
}

Tensor permute_rows(const Tensor& x, Rng& rng) {
  std::vector<std::size_t> idx(x.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Cyclic shift by a random nonzero offset: no row keeps its partner.
  const std::size_t off = 1 + rng.index(x.rows() - 1);
  Tensor y(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) y.at(r, c) = x.at((r + off) % x.rows(), c);
  }
  return y;
}

}  // namespace

TEST_SUITE("dpw") {

TEST_CASE("two-sample closed form") {
  const Tensor e = Tensor::matrix({{1, 0}, {0, 1}});
  const double expected = -std::log1p(std::exp(-10.0));
  CHECK(std::abs(infonce_mi(e, e, 0.1) - expected) <= 1e-12);
  CHECK(infonce_mi(e, e, 0.1) == doctest::Approx(-4.54e-5).epsilon(1e-3));
  CHECK(kDefaultTau == 0.1);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(infonce_mi(Tensor({1, 3}, 1.0), Tensor({1, 3}, 1.0)), ContractError);
  CHECK_THROWS_AS(infonce_mi(Tensor({4, 3}, 1.0), Tensor({4, 2}, 1.0)), DimensionError);
  PerModality<Tensor> one{Tensor({1, 3}, 1.0), Tensor({1, 3}, 1.0), Tensor({1, 3}, 1.0)};
  CHECK_THROWS_AS(pairwise_weights(one), ContractError);
}

TEST_CASE("estimates respect the bound") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t b = 2 + rng.index(40);
    const Tensor x = random_tensor({b, 5}, rng);
    const double sigma = rng.uniform(0.0, 2.0);
    const Tensor y = noisy_copy(x, sigma, rng);
    CHECK(infonce_mi(x, y, 0.1) <= std::log(double(b)) + 1e-9);
    CHECK(infonce_mi(x, x, 0.05) <= std::log(double(b)) + 1e-9);
  }
}

TEST_CASE("aligned pairs beat shuffled pairs") {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const Tensor x = random_tensor({64, 8}, rng);
    const Tensor y = noisy_copy(x, 0.5, rng);
    wins += infonce_mi(x, y) > infonce_mi(x, permute_rows(y, rng));
  }
  CHECK(wins == 20);
}

TEST_CASE("pairwise weights") {
  Rng rng(7);
  const Tensor x = random_tensor({32, 6}, rng);
  SUBCASE("identical sets give uniform weights") {
    const MIEstimate est = pairwise_weights({x, x, x});
    for (double w : est.w) CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(est.negatives == 31);
    CHECK(est.tau == 0.1);
  }
  SUBCASE("symmetric, positive, normalized") {
    const MIEstimate est = pairwise_weights({x, noisy_copy(x, 0.7, rng), random_tensor({32, 6}, rng)});
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) CHECK(est.I[i][j] == est.I[j][i]);
    }
    CHECK(std::abs(est.w[0] + est.w[1] + est.w[2] - 1.0) <= 1e-12);
    for (double w : est.w) CHECK(w > 0.0);
    CHECK(est.score[0] == doctest::Approx(0.5 * (est.I[0][1] + est.I[0][2])).epsilon(1e-15));
  }
  SUBCASE("relabeling a and v swaps their weights") {
    const Tensor v = noisy_copy(x, 0.4, rng), t = random_tensor({32, 6}, rng);
    const MIEstimate e1 = pairwise_weights({x, v, t});
    const MIEstimate e2 = pairwise_weights({v, x, t});
    CHECK(e1.w[0] == e2.w[1]);
    CHECK(e1.w[1] == e2.w[0]);
    CHECK(e1.w[2] == e2.w[2]);
  }
}

TEST_CASE("the unpaired modality gets the smallest weight") {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(200 + seed);
    const Tensor a = random_tensor({32, 8}, rng);
    const Tensor v = noisy_copy(a, 0.3, rng);
    const Tensor t = random_tensor({32, 8}, rng);
    const MIEstimate est = pairwise_weights({a, v, t});
    hits += est.w[2] < est.w[0] && est.w[2] < est.w[1];
  }
  CHECK(hits == 20);
}

TEST_CASE("per-sample weights skip generated partners") {
  MIEstimate est;
  est.I[0][1] = est.I[1][0] = 2.0;
  est.I[0][2] = est.I[2][0] = 0.5;
  est.I[1][2] = est.I[2][1] = 1.0;
  for (std::size_t m = 0; m < 3; ++m) est.score[m] = 0.5 * (est.I[m][(m + 1) % 3] + est.I[m][(m + 2) % 3]);
  est.w = softmax3(est.score);
  CHECK(sample_weights(est, {true, true, true}) == est.w);
  // Audio generated, video and text present: audio scores only against them,
  // which here are both original, so nothing changes for audio.
  CHECK(sample_weights(est, {false, true, true}) == est.w);
  // Only text present: audio and video each pair with text alone.
  const auto w = sample_weights(est, {false, false, true});
  const auto ref = softmax3({0.5, 1.0, 0.75});
  for (std::size_t m = 0; m < 3; ++m) CHECK(w[m] == doctest::Approx(ref[m]).epsilon(1e-15));
  CHECK(std::abs(w[0] + w[1] + w[2] - 1.0) <= 1e-12);
}

TEST_CASE("softmax weights stay on the simplex") {
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const auto w = softmax3({rng.normal(0, 5), rng.normal(0, 5), rng.normal(0, 5)});
    CHECK(std::abs(w[0] + w[1] + w[2] - 1.0) <= 1e-12);
    for (double v : w) CHECK(v > 0.0);
  }
}

TEST_CASE("weight prompt prepending") {
  Rng rng(10);
  Graph g(false);
  const Tensor wei = random_tensor({4, 6}, rng);
  PerModality<Var> streams{g.constant(random_tensor({3, 6}, rng)), g.constant(random_tensor({5, 6}, rng)),
                           g.constant(random_tensor({2, 6}, rng))};
  SUBCASE("zero weight gives zero rows") {
    const auto out = weight_and_prepend({0.0, 0.5, 0.5}, g.constant(wei), streams);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 6; ++c) CHECK(out[0].value().at(r, c) == 0.0);
    }
  }
  SUBCASE("uniform weights give the same prompt everywhere") {
    const double third = 1.0 / 3.0;
    const auto out = weight_and_prepend({third, third, third}, g.constant(wei), streams);
    for (std::size_t m = 0; m < 3; ++m) {
      CHECK(out[m].rows() == 4 + streams[m].rows());
      for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 6; ++c) {
          CHECK(out[m].value().at(r, c) == out[0].value().at(r, c));
          CHECK(out[m].value().at(r, c) == wei.at(r, c) * third);
        }
      }
      for (std::size_t r = 0; r < streams[m].rows(); ++r) {
        for (std::size_t c = 0; c < 6; ++c) CHECK(out[m].value().at(4 + r, c) == streams[m].value().at(r, c));
      }
    }
  }
  SUBCASE("width mismatch") {
    PerModality<Var> bad = streams;
    bad[1] = g.constant(random_tensor({5, 5}, rng));
    CHECK_THROWS_AS(weight_and_prepend({0.2, 0.3, 0.5}, g.constant(wei), bad), DimensionError);
  }
}

}
