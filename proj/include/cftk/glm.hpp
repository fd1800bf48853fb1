#pragma once

// Linear and logistic regression fitted by full-batch gradient descent.
//
// Features are standardized internally; the step size is 1/L with L the
// largest eigenvalue of the (intercept-augmented) Gram matrix over n, times
// 1/4 for the logistic loss. Columns with zero spread are dropped with a
// warning, leaving an intercept-only fit when nothing remains.

#include <vector>

#include "json.hpp"

#include "cftk/dataset.hpp"
#include "cftk/tensor.hpp"

namespace cftk {

struct GlmOptions {
  std::size_t max_steps = 10000;
  double tolerance = 1e-8;  // on the gradient norm
};

struct LinearModel {
  TaskKind task = TaskKind::kRegression;
  std::vector<double> weights;  // in standardized feature space; 0 for dropped columns
  double bias = 0.0;
  std::vector<double> feature_mean, feature_std;
  std::vector<bool> active;
  std::size_t steps = 0;
  double gradient_norm = 0.0;

  std::size_t num_features() const { return weights.size(); }
  // Regression: the linear prediction. Classification: the probability of 1.
  std::vector<double> predict(const Tensor& features) const;
};

LinearModel fit_linear(const Tensor& features, const Tensor& y, TaskKind task,
                       const GlmOptions& options = {});

nlohmann::json to_json(const LinearModel& m);
LinearModel linear_model_from_json(const nlohmann::json& j);

struct DownstreamFit {
  LinearModel model;
  std::vector<double> predictions;  // on the training posteriors
};
// Predictor on posterior means of K.
DownstreamFit downstream_predict(const Tensor& k_means, const Tensor& y_train, TaskKind task,
                                 const GlmOptions& options = {});

}  // namespace cftk
