#pragma once

// Counterfactual generator: an encoder q(H|X,Y) that never sees S and a
// decoder p(X,Y|H,S) that does. Interventions on S happen at the decoder.
// Training minimizes the negative ELBO plus tau times the mean pairwise MMD
// between encoder means of different sensitive groups.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cftk/dataset.hpp"
#include "cftk/nn.hpp"
#include "cftk/trainer.hpp"

namespace cftk {

struct GeneratorSpec {
  std::size_t latent_dim = 8;
  std::size_t hidden = 16;
  double tau = 1.0;
  void validate() const;
};

nlohmann::json to_json(const GeneratorSpec& s);
GeneratorSpec generator_spec_from_json(const nlohmann::json& j);

class GeneratorModel {
 public:
  GeneratorModel(GeneratorSpec spec, Schema schema, Standardization stats, std::vector<double> s_frequencies,
                 ParameterStore params, std::uint64_t seed, bool trained);

  const GeneratorSpec& spec() const { return spec_; }
  const Schema& schema() const { return schema_; }
  const std::vector<FeatureBlock>& blocks() const { return blocks_; }
  std::size_t num_features() const;
  // Standardization the networks operate in (the training data's).
  const Standardization& stats() const { return stats_; }
  const std::vector<double>& s_frequencies() const { return s_frequencies_; }
  const ParameterStore& params() const { return params_; }
  void set_params(ParameterStore p) { params_ = std::move(p); }
  std::uint64_t seed() const { return seed_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

 private:
  GeneratorSpec spec_;
  Schema schema_;
  std::vector<FeatureBlock> blocks_;
  Standardization stats_;
  std::vector<double> s_frequencies_;
  ParameterStore params_;
  std::uint64_t seed_;
  bool trained_;
};

// Untrained generator fitted to `data`'s schema, statistics and S frequencies.
GeneratorModel make_generator(const GeneratorSpec& spec, const TabularDataset& data, std::uint64_t seed);
nlohmann::json to_json(const GeneratorModel& m);
GeneratorModel generator_from_json(const nlohmann::json& j);

// |S| (|S| - 1) / 2
std::size_t num_pairs(std::size_t num_sensitive);

struct PenaltyTerms {
  Tensor value;  // (1/N_p) sum over present pairs of MMD^2
  std::size_t pairs_used = 0;
  std::size_t pairs_skipped = 0;
  double bandwidth = 1.0;
};
// Distribution-matching penalty over latent codes grouped by sensitive value.
// Unbiased MMD^2 per pair; groups with fewer than two rows count as absent.
// The RBF bandwidth defaults to the median heuristic on the (detached) pooled codes.
PenaltyTerms distribution_matching_penalty(const Tensor& codes, std::span<const std::size_t> s,
                                           std::size_t num_sensitive,
                                           std::optional<double> bandwidth = std::nullopt);

// Encoder means for every row of `data` (re-standardized to the model's space).
Tensor encode(const GeneratorModel& model, const TabularDataset& data);

class GeneratorObjective : public TrainingObjective {
 public:
  GeneratorObjective(GeneratorModel model, TabularDataset data);
  static GeneratorObjective from_checkpoint(const nlohmann::json& checkpoint, TabularDataset data);

  std::string kind() const override { return "generator"; }
  std::size_t num_rows() const override { return data_.size(); }
  const Schema& schema() const override { return data_.schema(); }
  const ParameterStore& parameters() const override { return model_.params(); }
  void set_parameters(ParameterStore p) override { model_.set_params(std::move(p)); }
  StepLosses loss(const ParamView& p, const BatchContext& ctx, const TrainConfig& config) override;
  nlohmann::json model_json() const override { return to_json(model_); }
  std::vector<std::pair<std::string, std::string>> log_header(const TrainConfig& config) const override;

  const GeneratorModel& model() const { return model_; }
  std::size_t skipped_pair_terms() const { return skipped_; }

 private:
  GeneratorModel model_;
  TabularDataset data_;
  std::size_t skipped_ = 0;
};

struct GeneratorTraining {
  GeneratorModel model;
  TrainLog log;
};
// Trains on `data` (already standardized with its own training statistics).
GeneratorTraining train_generator(const TabularDataset& data, const GeneratorSpec& spec, const TrainConfig& config);

// Per individual, one decoded record per sensitive value, in source units.
// Categorical blocks hold probabilities; a binary target holds P(Y = 1).
struct CounterfactualSet {
  Schema schema;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> factual_s;
  std::vector<std::vector<double>> arm_x;  // [arm] -> n x d row-major
  std::vector<std::vector<double>> arm_y;  // [arm] -> n
  std::uint64_t seed = 0;

  std::size_t size() const { return ids.size(); }
  std::size_t num_arms() const { return arm_x.size(); }
  std::size_t num_features() const;
  // Individuals in the order of `ids`; throws ContractError for unknown ids.
  CounterfactualSet select(std::span<const std::size_t> wanted) const;
  // Every individual under S <- arm, standardized with `stats`.
  TabularDataset arm_dataset(std::size_t arm, const Standardization& stats) const;

  std::string to_csv() const;
  void save(const std::filesystem::path& path) const;
};

CounterfactualSet load_counterfactuals(const std::filesystem::path& path, const Schema& schema);

CounterfactualSet generate_counterfactuals(const GeneratorModel& model, const TabularDataset& data,
                                           std::uint64_t seed = 0);

struct SyntheticData {
  TabularDataset data;              // ids 0..n-1 link rows to counterfactual individuals
  CounterfactualSet counterfactuals;
};
SyntheticData synthesize_dataset(const GeneratorModel& model, std::size_t n, std::uint64_t seed);

}  // namespace cftk
