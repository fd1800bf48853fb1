#include "cftk/bounds.hpp"

#include <cmath>
#include <numbers>

#include "cftk/error.hpp"
#include "cftk/rng.hpp"

namespace cftk::bounds {

void LinearCaseParams::validate() const {
  if (!(sigma_k > 0.0) || !(aux_sigma_k > 0.0) || !(aux_sigma_s > 0.0)) {
    throw ContractError("standard deviations must be positive");
  }
}

double delta_a(const LinearCaseParams& p) {
  p.validate();
  return std::abs(p.alpha * (p.s_star - p.s)) + 3.0 * std::numbers::sqrt2 * std::abs(p.beta) * p.sigma_k;
}

double delta_b(const LinearCaseParams& p) {
  p.validate();
  const double var = p.aux_alpha * p.aux_alpha * p.aux_sigma_s * p.aux_sigma_s +
                     p.aux_beta * p.aux_beta * p.aux_sigma_k * p.aux_sigma_k;
  return 3.0 * std::sqrt(2.0 * var);
}

bool fairk_bound_looser(const LinearCaseParams& p) { return delta_a(p) > delta_b(p); }

double monte_carlo_coverage(const LinearCaseParams& p, Variant variant, std::uint64_t draws,
                            std::uint64_t seed) {
  if (draws < 10000) throw ContractError("monte_carlo_coverage needs at least 10^4 draws");
  p.validate();
  const CounterRng rng(seed, streams::kMonteCarlo);
  const double bound = variant == Variant::kFairK ? delta_a(p) : delta_b(p);
  std::uint64_t inside = 0;
  for (std::uint64_t i = 0; i < draws; ++i) {
    // Two independent draws per latent; location parameters cancel.
    double diff = 0.0;
    if (variant == Variant::kFairK) {
      const double k1 = p.sigma_k * rng.normal(0, 0, 2 * i);
      const double k0 = p.sigma_k * rng.normal(0, 0, 2 * i + 1);
      diff = p.alpha * (p.s_star - p.s) + p.beta * (k1 - k0);
    } else {
      const double s1 = p.aux_sigma_s * rng.normal(1, 0, 2 * i);
      const double s0 = p.aux_sigma_s * rng.normal(1, 0, 2 * i + 1);
      const double k1 = p.aux_sigma_k * rng.normal(2, 0, 2 * i);
      const double k0 = p.aux_sigma_k * rng.normal(2, 0, 2 * i + 1);
      diff = p.aux_alpha * (s1 - s0) + p.aux_beta * (k1 - k0);
    }
    if (std::abs(diff) <= bound) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(draws);
}

}  // namespace cftk::bounds
