#pragma once

// Predictors compared in the evaluation: Constant, Full (X and S), Unaware
// (X only), and the latent-variable predictors that regress Y on posterior
// means of K from a trained Fair-K or EXOC model.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cftk/causal.hpp"
#include "cftk/dataset.hpp"
#include "cftk/glm.hpp"
#include "cftk/trainer.hpp"

namespace cftk {

enum class PredictorKind { kConstant, kFull, kUnaware, kFairK, kExoc };
std::string to_string(PredictorKind k);

class BaselinePredictor {
 public:
  PredictorKind kind() const { return kind_; }
  TaskKind task() const { return task_; }
  // Regression predictions or classification scores P(Y = 1).
  std::vector<double> predict(const TabularDataset& data) const;

  double constant() const { return constant_; }
  const LinearModel& linear() const { return linear_; }
  const std::optional<CausalModel>& latent_model() const { return latent_; }
  // Training log of the latent model (empty for the other kinds).
  const TrainLog& train_log() const { return log_; }

  friend BaselinePredictor fit_constant(const TabularDataset&);
  friend BaselinePredictor fit_full(const TabularDataset&, const GlmOptions&);
  friend BaselinePredictor fit_unaware(const TabularDataset&, const GlmOptions&);
  friend BaselinePredictor fit_latent(const TabularDataset&, const CausalModelSpec&, const TrainConfig&,
                                      const GlmOptions&);
  friend nlohmann::json to_json(const BaselinePredictor& p);
  friend BaselinePredictor predictor_from_json(const nlohmann::json& j);

 private:
  PredictorKind kind_ = PredictorKind::kConstant;
  TaskKind task_ = TaskKind::kRegression;
  std::string fingerprint_;
  double constant_ = 0.0;
  LinearModel linear_;
  std::optional<CausalModel> latent_;
  TrainLog log_;
};

// Mean of Y (regression) or the frequency of class 1 (classification).
BaselinePredictor fit_constant(const TabularDataset& train);
BaselinePredictor fit_full(const TabularDataset& train, const GlmOptions& options = {});
BaselinePredictor fit_unaware(const TabularDataset& train, const GlmOptions& options = {});
// Trains the causal model described by `spec` (ELBO only for Fair-K), then
// fits the downstream predictor on the posterior means of K.
BaselinePredictor fit_latent(const TabularDataset& train, const CausalModelSpec& spec, const TrainConfig& config,
                             const GlmOptions& options = {});
BaselinePredictor fit_fairk(const TabularDataset& train, const TrainConfig& config, std::size_t hidden = 16);

// Features seen by the Full model: standardized X followed by one-hot S.
Tensor full_features(const TabularDataset& data);

nlohmann::json to_json(const BaselinePredictor& p);
BaselinePredictor predictor_from_json(const nlohmann::json& j);

}  // namespace cftk
