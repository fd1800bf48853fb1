#pragma once

// Fair-K and EXOC causal models.
//
// Fair-K:  p(K) p(X|K,S) p(Y|K,S),               guide q(K|X,Y,S)
// EXOC:    p(K) p(S') p(X|K) p(S|S') p(Y|K,S') p(S''|Y),
//          guides q(K|X,Y,S), q(S'|X,Y,S), q(S''|Y)
//
// Every network consumes the concatenation of its parents in the order listed
// by decoder_parents()/guide_parents(); those tables are the single source of
// the wiring.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "cftk/dataset.hpp"
#include "cftk/nn.hpp"
#include "cftk/optim.hpp"
#include "cftk/tensor.hpp"

namespace cftk {

enum class ModelVariant { kFairK, kExoc };
enum class ControlTarget { kControlNode, kPrediction };

std::string to_string(ModelVariant v);
std::string to_string(ControlTarget t);

struct CausalModelSpec {
  ModelVariant variant = ModelVariant::kExoc;
  std::size_t dim_k = 1;
  std::size_t dim_aux = 1;      // S'
  std::size_t dim_control = 1;  // S''
  std::size_t hidden = 16;
  ControlTarget control_target = ControlTarget::kControlNode;
  // Parents of the EXOC feature head; any of "K", "S", "S'" with "K" required.
  std::vector<std::string> exoc_feature_parents{"K"};

  // Throws ContractError on inconsistent dimensions.
  void validate() const;
};

nlohmann::json to_json(const CausalModelSpec& spec);
CausalModelSpec causal_spec_from_json(const nlohmann::json& j);

struct HeadParents {
  std::string head;
  std::vector<std::string> parents;
};
// Observed nodes: "X", "S", "Y". Latents: "K", "S'", "S''".
std::vector<HeadParents> decoder_parents(const CausalModelSpec& spec);
std::vector<HeadParents> guide_parents(const CausalModelSpec& spec);

class CausalModel {
 public:
  CausalModel(CausalModelSpec spec, Schema schema, ParameterStore params, std::uint64_t seed);

  const CausalModelSpec& spec() const { return spec_; }
  const Schema& schema() const { return schema_; }
  const std::vector<FeatureBlock>& blocks() const { return blocks_; }
  std::size_t num_features() const;
  std::uint64_t seed() const { return seed_; }
  const ParameterStore& params() const { return params_; }
  void set_params(ParameterStore p) { params_ = std::move(p); }

 private:
  CausalModelSpec spec_;
  Schema schema_;
  std::vector<FeatureBlock> blocks_;
  ParameterStore params_;
  std::uint64_t seed_;
};

// Seeded parameter initialization for `schema`.
ParameterStore build_model(const CausalModelSpec& spec, const Schema& schema, std::uint64_t seed);
CausalModel make_model(const CausalModelSpec& spec, const Schema& schema, std::uint64_t seed);

nlohmann::json to_json(const CausalModel& model);
CausalModel causal_model_from_json(const nlohmann::json& j);

struct Batch {
  Tensor x;  // n x d, standardized
  Tensor s;  // n x |S| one-hot
  Tensor y;  // n x 1
  std::size_t size() const { return x.rows(); }
};
Batch make_batch(const TabularDataset& data);
Batch make_batch(const TabularDataset& data, std::span<const std::size_t> rows);

// Standard-normal reparameterization noise for one step.
struct LatentNoise {
  Tensor k, aux, control;
};
LatentNoise draw_noise(const CausalModelSpec& spec, std::size_t n, std::uint64_t seed,
                       std::uint64_t epoch, std::uint64_t batch);
// Noise for an explicit list of per-row draw indices (used to check the
// batch-mean convention row by row).
LatentNoise slice_noise(const LatentNoise& noise, std::span<const std::size_t> rows);

struct Latent {
  Tensor mean, logvar, noise, sample;
};
struct LatentSample {
  Latent k, aux, control;  // aux/control unset for Fair-K
};

struct LossTerms {
  Tensor elbo;        // negative ELBO, batch mean
  Tensor control;     // L_c (EXOC only; scalar 0 for Fair-K)
  double kl = 0.0;    // KL part of elbo
  double recon = 0.0;
  LatentSample latents;
};

// Single-sample reparameterized negative ELBO plus the control loss.
LossTerms model_losses(const CausalModel& model, const ParamView& p, const Batch& batch,
                       const LatentNoise& noise);

Tensor elbo_loss(const CausalModel& model, const ParamView& p, const Batch& batch,
                 const LatentNoise& noise);
// (1/D) sum_i |a_i - b_i|^2
Tensor control_loss(const Tensor& s_prime, const Tensor& s_dprime);
// elbo + gamma * R * lc. Fair-K has no control term and is rejected.
Tensor total_loss(const CausalModelSpec& spec, const Tensor& elbo, const Tensor& lc, double gamma,
                  double r);
double normalization_scale(double elbo, double lc);
double normalization_scale(const CausalModel& model, const Batch& first_batch,
                           const LatentNoise& noise);

struct PosteriorMeans {
  Tensor k;
  Tensor aux;      // EXOC only
  Tensor control;  // EXOC only
};
// Deterministic guide means. Throws ContractError on schema mismatch.
PosteriorMeans infer_posterior(const CausalModel& model, const TabularDataset& data);

}  // namespace cftk
