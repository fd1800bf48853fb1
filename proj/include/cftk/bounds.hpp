#pragma once

// Approximate counterfactual-fairness bounds for the linear-Gaussian case.
//
// Fair-K style model:  Y = alpha * S + beta * K,      K ~ N(mu_K, sigma_K^2)
// Auxiliary-node model: Y = alpha' * S' + beta' * K', S' ~ N(., sigma_S'^2), K' ~ N(., sigma_K'^2)
//
// The counterfactual difference under S <- s versus S <- s* is normal in both
// cases; the bounds are its mean plus three standard deviations.

#include <cstdint>

namespace cftk::bounds {

struct LinearCaseParams {
  double alpha = 1.0;
  double beta = 1.0;
  double sigma_k = 1.0;
  double aux_alpha = 1.0;
  double aux_beta = 1.0;
  double aux_sigma_k = 1.0;
  double aux_sigma_s = 1.0;
  double s = 0.0;
  double s_star = 1.0;

  // Throws ContractError when any standard deviation is not positive.
  void validate() const;
};

enum class Variant { kFairK, kAuxiliary };

// |alpha (s* - s)| + 3 sqrt(2) |beta| sigma_K
double delta_a(const LinearCaseParams& p);
// 3 sqrt(2 (alpha'^2 sigma_S'^2 + beta'^2 sigma_K'^2))
double delta_b(const LinearCaseParams& p);

// Whether the Fair-K bound is the looser one for these parameters.
bool fairk_bound_looser(const LinearCaseParams& p);

// Fraction of `draws` sampled counterfactual differences whose magnitude does
// not exceed the variant's bound. Requires draws >= 10^4.
double monte_carlo_coverage(const LinearCaseParams& p, Variant variant, std::uint64_t draws,
                            std::uint64_t seed);

}  // namespace cftk::bounds
