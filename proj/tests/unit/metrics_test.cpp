#include "doctest.h"

#include <cmath>

#include "cftk/error.hpp"
#include "cftk/metrics.hpp"
#include "cftk/rng.hpp"
#include "../support/metric_oracles.hpp"

using namespace cftk;

namespace {

std::vector<double> sample(const CounterRng& rng, std::uint64_t a, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 4.0 * rng.uniform(a, 0, i) - 2.0;
  return v;
}

}  // namespace

TEST_CASE("performance metrics") {
  const std::vector<double> t{3, 4};
  CHECK(rmse(t, t) == 0.0);
  CHECK(mae(t, t) == 0.0);
  const std::vector<double> z{0, 0};
  CHECK(rmse(z, t) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
  CHECK(rmse(z, t) == doctest::Approx(3.5355).epsilon(1e-4));
  CHECK(mae(z, t) == 3.5);
  const std::vector<double> scores{0.4, 0.6}, labels{0, 1};
  CHECK(accuracy(scores, labels) == 1.0);
  CHECK(accuracy(labels, labels) == 1.0);
  const std::vector<double> three{1, 2, 3};
  CHECK_THROWS_AS(rmse(three, t), DimensionError);
  CHECK_THROWS_AS(mae(std::vector<double>{}, std::vector<double>{}), ContractError);
}

TEST_CASE("mmd of identical samples is zero") {
  const std::vector<double> a{0.1, -0.4, 2.0, 0.7};
  const auto r = mmd(a, a);
  CHECK(std::abs(r.mmd2) < 1e-12);
  CHECK(r.value == 0.0);
}

TEST_CASE("mmd three-term hand value") {
  const std::vector<double> a{0}, b{1};
  const auto r = mmd(a, b, {.bandwidth = 1.0, .report_scale = 1.0});
  CHECK(r.mmd2 == doctest::Approx(2.0 - 2.0 * std::exp(-0.5)).epsilon(1e-15));
  CHECK(r.mmd2 == doctest::Approx(0.78694).epsilon(1e-5));
  CHECK_THROWS_AS(mmd(std::vector<double>{}, b), ContractError);
}

TEST_CASE("mmd equals the explicit double sum") {
  CounterRng rng(11, 0);
  for (std::uint64_t t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.bits(t, 1, 0) % 10, m = 1 + rng.bits(t, 2, 0) % 10;
    const auto a = sample(rng, 2 * t, n), b = sample(rng, 2 * t + 1, m);
    const auto r = mmd(a, b);
    CHECK(std::abs(r.mmd2 - testing::mmd2_double_sum(a, b, r.bandwidth)) < 1e-12);
    CHECK(r.value >= 0.0);
    CHECK(mmd(b, a).mmd2 == doctest::Approx(r.mmd2).epsilon(1e-14));
  }
}

TEST_CASE("median heuristic falls back to one") {
  const std::vector<double> same{2.0, 2.0, 2.0};
  CHECK(median_heuristic(same, 1) == 1.0);
  const std::vector<double> pts{0.0, 1.0, 3.0};  // distances 1, 3, 2
  CHECK(median_heuristic(pts, 1) == 2.0);
}

TEST_CASE("wasserstein1 examples") {
  const std::vector<double> a{0, 0}, b{1, 1};
  CHECK(wasserstein1(a, a) == 0.0);
  CHECK(wasserstein1(a, b) == 1.0);
  const std::vector<double> c{0, 1, 2}, d{0, 0, 3};
  CHECK(wasserstein1(c, d) == doctest::Approx(testing::w1_matching(c, d)).epsilon(1e-15));
  CHECK(wasserstein1(c, d) == doctest::Approx(2.0 / 3.0));
  const std::vector<double> one{0.0}, two{0.0, 2.0};
  CHECK(wasserstein1(one, two) == doctest::Approx(1.0));
}

TEST_CASE("wasserstein1 matches brute-force oracles") {
  CounterRng rng(5, 0);
  for (std::uint64_t t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.bits(t, 1, 0) % 6;
    const std::size_t m = 1 + rng.bits(t, 2, 0) % 6;
    const auto a = sample(rng, 2 * t, n);
    const auto b = sample(rng, 2 * t + 1, n);
    CHECK(std::abs(wasserstein1(a, b) - testing::w1_matching(a, b)) < 1e-9);
    const auto c = sample(rng, 1000 + t, m);
    CHECK(std::abs(wasserstein1(a, c) - testing::w1_cdf_integral(a, c)) < 1e-9);
  }
}

TEST_CASE("wasserstein1 symmetry, translation, scale and triangle") {
  CounterRng rng(9, 0);
  for (std::uint64_t t = 0; t < 200; ++t) {
    const auto a = sample(rng, 3 * t, 1 + rng.bits(t, 1, 0) % 8);
    const auto b = sample(rng, 3 * t + 1, 1 + rng.bits(t, 2, 0) % 8);
    const auto c = sample(rng, 3 * t + 2, 1 + rng.bits(t, 3, 0) % 8);
    CHECK(wasserstein1(a, b) == wasserstein1(b, a));
    const double shift = 5.0 * rng.uniform(t, 4, 0) - 2.5;
    auto moved = a;
    for (auto& v : moved) v += shift;
    CHECK(std::abs(wasserstein1(a, moved) - std::abs(shift)) < 1e-9);
    const double k = 6.0 * rng.uniform(t, 5, 0) - 3.0;
    auto ka = a, kb = b;
    for (auto& v : ka) v *= k;
    for (auto& v : kb) v *= k;
    CHECK(std::abs(wasserstein1(ka, kb) - std::abs(k) * wasserstein1(a, b)) < 1e-9);
    CHECK(wasserstein1(a, c) <= wasserstein1(a, b) + wasserstein1(b, c) + 1e-12);
  }
}

TEST_CASE("pairwise counterfactual divergence") {
  PredictionSet same{{{1, 2, 3}, {1, 2, 3}, {1, 2, 3}}};
  CHECK(pairwise_cf_divergence(same, DivergenceMetric::kMmd).mean == 0.0);
  CHECK(pairwise_cf_divergence(same, DivergenceMetric::kWasserstein).mean == 0.0);

  PredictionSet p{{{0, 0, 0}, {1, 1, 1}, {3, 3, 3}}};
  const auto w = pairwise_cf_divergence(p, DivergenceMetric::kWasserstein);
  REQUIRE(w.pairs.size() == 3);
  CHECK(w.pairs[0].value == 1.0);
  CHECK(w.pairs[1].value == 3.0);
  CHECK(w.pairs[2].value == 2.0);
  CHECK(w.mean == doctest::Approx((1.0 + 3.0 + 2.0) / 3.0));

  PredictionSet four{{{0}, {1}, {2}, {3}}};
  CHECK(pairwise_cf_divergence(four, DivergenceMetric::kWasserstein).pairs.size() == 6);

  PredictionSet single{{{1, 2}}};
  CHECK_THROWS_AS(pairwise_cf_divergence(single, DivergenceMetric::kMmd), ContractError);
  PredictionSet bad_scores{{{0.5, 1.5}, {0.1, 0.2}}, true};
  CHECK_THROWS_AS(pairwise_cf_divergence(bad_scores, DivergenceMetric::kMmd), ContractError);
}
