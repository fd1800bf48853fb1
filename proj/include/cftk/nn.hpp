#pragma once

// Small building blocks shared by the causal models and the generator:
// one-hidden-layer softplus MLPs, observation log-likelihoods and Gaussian KL.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cftk/dataset.hpp"
#include "cftk/optim.hpp"
#include "cftk/tensor.hpp"

namespace cftk {

// Read access to parameters, either plain values or tape leaves.
class ParamView {
 public:
  ParamView(const ParameterStore& store) : store_(&store) {}
  ParamView(const TrackedParameters& tracked) : tracked_(&tracked) {}
  ParamView(const std::map<std::string, Tensor>& map) : map_(&map) {}
  Tensor operator[](const std::string& name) const {
    if (tracked_) return (*tracked_)[name];
    if (map_) return map_->at(name);
    return store_->at(name);
  }

 private:
  const ParameterStore* store_ = nullptr;
  const TrackedParameters* tracked_ = nullptr;
  const std::map<std::string, Tensor>* map_ = nullptr;
};

struct MlpLayout {
  std::size_t in = 1;
  std::size_t hidden = 16;
  std::size_t out = 1;
};

// Registers <prefix>.w0/.b0/.w1/.b1 with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
// entries. Each array is keyed by its name, so adding a network never shifts
// the values of another.
void init_mlp(ParameterStore& store, const std::string& prefix, const MlpLayout& layout,
              std::uint64_t seed);
// Adds a (rows x cols) array of `value`.
void init_constant(ParameterStore& store, const std::string& name, std::size_t rows,
                   std::size_t cols, double value);

// softplus(x W0 + b0) W1 + b1
Tensor mlp(const ParamView& p, const std::string& prefix, const Tensor& input);

// Elementwise -log N(x; mean, exp(logvar)).
Tensor gaussian_nll(const Tensor& x, const Tensor& mean, const Tensor& logvar);
// Elementwise KL(N(mu, exp(lv)) || N(0, 1)).
Tensor kl_standard_normal(const Tensor& mu, const Tensor& logvar);
// Elementwise KL(N(mu_q, exp(lv_q)) || N(mu_p, exp(lv_p))).
Tensor kl_normal(const Tensor& mu_q, const Tensor& lv_q, const Tensor& mu_p, const Tensor& lv_p);
// Per-row -log softmax(logits)[label] given one-hot labels; (n x 1).
Tensor categorical_nll(const Tensor& onehot, const Tensor& logits);

// Per-row negative log-likelihood of encoded features (n x 1). `out` holds
// means for continuous columns and logits for categorical blocks; `logvar`
// is a (1 x d) row whose categorical entries are unused.
Tensor feature_nll(const std::vector<FeatureBlock>& blocks, const Tensor& x, const Tensor& out,
                   const Tensor& logvar);
// Per-row target NLL: Gaussian (regression, logvar 1 x 1) or Bernoulli on a logit.
Tensor target_nll(TaskKind task, const Tensor& y, const Tensor& out, const Tensor& logvar);

// Head means: continuous columns as-is, categorical blocks as probabilities.
Tensor feature_means(const std::vector<FeatureBlock>& blocks, const Tensor& out);
// Regression mean or classification probability.
Tensor target_mean(TaskKind task, const Tensor& out);

// Splits a (n x 2d) guide output into mean and log-variance.
struct GaussianParams {
  Tensor mean;
  Tensor logvar;
};
GaussianParams split_gaussian(const Tensor& out);

// Rethrows NumericError with the name of the head that produced it.
template <class F>
Tensor named_head(const std::string& head, F&& f);

}  // namespace cftk

#include "cftk/error.hpp"

namespace cftk {
template <class F>
Tensor named_head(const std::string& head, F&& f) {
  try {
    return f();
  } catch (const NumericError& e) {
    throw NumericError("non-finite value in head '" + head + "': " + e.what());
  }
}
}  // namespace cftk
