#include "doctest.h"

#include <cmath>

#include "cftk/bounds.hpp"
#include "cftk/error.hpp"
#include "cftk/rng.hpp"

using namespace cftk;
using namespace cftk::bounds;

TEST_CASE("delta_a closed form") {
  LinearCaseParams p;
  p.alpha = 1.0;
  p.s = 0.0;
  p.s_star = 1.0;
  p.beta = 1.0;
  p.sigma_k = 1.0;
  CHECK(std::abs(delta_a(p) - (1.0 + 3.0 * std::sqrt(2.0))) < 1e-9);
  CHECK(std::abs(delta_a(p) - 5.242641) < 1e-6);

  p.beta = 0.0;
  p.alpha = -2.5;
  CHECK(delta_a(p) == 2.5);

  LinearCaseParams swapped = p;
  std::swap(swapped.s, swapped.s_star);
  CHECK(delta_a(swapped) == delta_a(p));
}

TEST_CASE("delta_b closed form") {
  LinearCaseParams p;  // all ones
  CHECK(std::abs(delta_b(p) - 6.0) < 1e-9);
  p.aux_alpha = 0.0;
  p.aux_beta = -0.7;
  p.aux_sigma_k = 2.0;
  CHECK(std::abs(delta_b(p) - 3.0 * std::sqrt(2.0) * 0.7 * 2.0) < 1e-12);
  LinearCaseParams q;
  q.aux_alpha = -1.0;
  CHECK(delta_b(q) == delta_b(LinearCaseParams{}));
  q.s_star = 10.0;
  CHECK(delta_b(q) == delta_b(LinearCaseParams{}));
}

TEST_CASE("non-positive standard deviations are rejected") {
  LinearCaseParams p;
  p.sigma_k = 0.0;
  CHECK_THROWS_AS(delta_a(p), ContractError);
  LinearCaseParams q;
  q.aux_sigma_s = -1.0;
  CHECK_THROWS_AS(delta_b(q), ContractError);
  CHECK_THROWS_AS(monte_carlo_coverage(LinearCaseParams{}, Variant::kFairK, 9999, 1), ContractError);
}

TEST_CASE("bounds are monotone in their inputs") {
  LinearCaseParams p;
  const double base_a = delta_a(p), base_b = delta_b(p);
  for (auto bump : {&LinearCaseParams::alpha, &LinearCaseParams::beta, &LinearCaseParams::sigma_k}) {
    LinearCaseParams q = p;
    q.*bump *= 1.5;
    CHECK(delta_a(q) > base_a);
  }
  for (auto bump : {&LinearCaseParams::aux_alpha, &LinearCaseParams::aux_beta,
                    &LinearCaseParams::aux_sigma_k, &LinearCaseParams::aux_sigma_s}) {
    LinearCaseParams q = p;
    q.*bump *= 1.5;
    CHECK(delta_b(q) > base_b);
  }
}

TEST_CASE("degenerate Fair-K difference is always covered") {
  LinearCaseParams p;
  p.beta = 0.0;
  p.alpha = 3.0;
  CHECK(monte_carlo_coverage(p, Variant::kFairK, 10000, 4) == 1.0);
}

TEST_CASE("large counterfactual parity makes the Fair-K bound looser") {
  LinearCaseParams p;
  p.alpha = 10.0;
  CHECK(delta_a(p) == doctest::Approx(10.0 + 3.0 * std::sqrt(2.0)));
  CHECK(delta_a(p) == doctest::Approx(14.243).epsilon(1e-4));
  CHECK(delta_b(p) == doctest::Approx(6.0));
  CHECK(fairk_bound_looser(p));
  CHECK(monte_carlo_coverage(p, Variant::kFairK, 100000, 1) >= 0.995);
  CHECK(monte_carlo_coverage(p, Variant::kAuxiliary, 100000, 1) >= 0.995);
  // The ordering is parameter dependent, not universal.
  LinearCaseParams q;
  q.alpha = 0.0;
  q.beta = 0.1;
  CHECK_FALSE(fairk_bound_looser(q));
}

TEST_CASE("coverage is deterministic per seed") {
  LinearCaseParams p;
  CHECK(monte_carlo_coverage(p, Variant::kAuxiliary, 20000, 8) ==
        monte_carlo_coverage(p, Variant::kAuxiliary, 20000, 8));
}
