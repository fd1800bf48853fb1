#include "cftk/baselines.hpp"

#include "cftk/error.hpp"

namespace cftk {

std::string to_string(PredictorKind k) {
  switch (k) {
    case PredictorKind::kConstant: return "Constant";
    case PredictorKind::kFull: return "Full";
    case PredictorKind::kUnaware: return "Unaware";
    case PredictorKind::kFairK: return "Fair-K";
    case PredictorKind::kExoc: return "EXOC";
  }
  return "?";
}

Tensor full_features(const TabularDataset& data) { return concat_cols({data.x(), data.s_onehot()}); }

std::vector<double> BaselinePredictor::predict(const TabularDataset& data) const {
  if (data.schema().fingerprint() != fingerprint_) {
    throw ContractError(to_string(kind_) + " predictor was fitted on a different schema than '" +
                        data.schema().name + "'");
  }
  switch (kind_) {
    case PredictorKind::kConstant: return std::vector<double>(data.size(), constant_);
    case PredictorKind::kFull: return linear_.predict(full_features(data));
    case PredictorKind::kUnaware: return linear_.predict(data.x());
    case PredictorKind::kFairK:
    case PredictorKind::kExoc: return linear_.predict(infer_posterior(*latent_, data).k);
  }
  throw ContractError("unknown predictor kind");
}

BaselinePredictor fit_constant(const TabularDataset& train) {
  if (train.size() == 0) throw ContractError("fit_constant: empty training set");
  BaselinePredictor p;
  p.kind_ = PredictorKind::kConstant;
  p.task_ = train.task();
  p.fingerprint_ = train.schema().fingerprint();
  double s = 0.0;
  for (double y : train.y().data()) s += y;
  p.constant_ = s / static_cast<double>(train.size());
  return p;
}

BaselinePredictor fit_full(const TabularDataset& train, const GlmOptions& options) {
  BaselinePredictor p;
  p.kind_ = PredictorKind::kFull;
  p.task_ = train.task();
  p.fingerprint_ = train.schema().fingerprint();
  p.linear_ = fit_linear(full_features(train), train.y(), train.task(), options);
  return p;
}

BaselinePredictor fit_unaware(const TabularDataset& train, const GlmOptions& options) {
  BaselinePredictor p;
  p.kind_ = PredictorKind::kUnaware;
  p.task_ = train.task();
  p.fingerprint_ = train.schema().fingerprint();
  p.linear_ = fit_linear(train.x(), train.y(), train.task(), options);
  return p;
}

BaselinePredictor fit_latent(const TabularDataset& train, const CausalModelSpec& spec, const TrainConfig& config,
                             const GlmOptions& options) {
  CausalObjective obj(make_model(spec, train.schema(), config.seed), train);
  TrainResult r = cftk::train(obj, config);
  BaselinePredictor p;
  p.kind_ = spec.variant == ModelVariant::kFairK ? PredictorKind::kFairK : PredictorKind::kExoc;
  p.task_ = train.task();
  p.fingerprint_ = train.schema().fingerprint();
  CausalModel model = obj.model();
  model.set_params(std::move(r.params));
  p.linear_ = downstream_predict(infer_posterior(model, train).k, train.y(), train.task(), options).model;
  p.latent_ = std::move(model);
  p.log_ = std::move(r.log);
  return p;
}

BaselinePredictor fit_fairk(const TabularDataset& train, const TrainConfig& config, std::size_t hidden) {
  CausalModelSpec spec;
  spec.variant = ModelVariant::kFairK;
  spec.hidden = hidden;
  return fit_latent(train, spec, config);
}

nlohmann::json to_json(const BaselinePredictor& p) {
  nlohmann::json j{{"kind", to_string(p.kind_)},
                   {"task", to_string(p.task_)},
                   {"schema_fingerprint", p.fingerprint_},
                   {"constant", p.constant_}};
  if (p.kind_ != PredictorKind::kConstant) j["linear"] = to_json(p.linear_);
  if (p.latent_) j["latent_model"] = to_json(*p.latent_);
  return j;
}

BaselinePredictor predictor_from_json(const nlohmann::json& j) {
  BaselinePredictor p;
  const std::string kind = j.at("kind").get<std::string>();
  bool found = false;
  for (auto k : {PredictorKind::kConstant, PredictorKind::kFull, PredictorKind::kUnaware, PredictorKind::kFairK,
                 PredictorKind::kExoc}) {
    if (to_string(k) == kind) {
      p.kind_ = k;
      found = true;
    }
  }
  if (!found) throw ContractError("unknown predictor kind '" + kind + "'");
  p.task_ = j.at("task").get<std::string>() == "classification" ? TaskKind::kClassification : TaskKind::kRegression;
  p.fingerprint_ = j.at("schema_fingerprint").get<std::string>();
  p.constant_ = j.at("constant").get<double>();
  if (j.contains("linear")) p.linear_ = linear_model_from_json(j.at("linear"));
  if (j.contains("latent_model")) p.latent_ = causal_model_from_json(j.at("latent_model"));
  return p;
}

}  // namespace cftk
