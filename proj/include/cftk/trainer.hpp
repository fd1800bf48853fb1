#pragma once

// Deterministic Adam training loop shared by the causal models and the
// counterfactual generator.
//
// All randomness is drawn from counter-based streams keyed by (seed, epoch,
// batch, index), and the full optimizer state lives in the checkpoint, so a
// run resumed from a checkpoint is bit-identical to an uninterrupted one.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cftk/causal.hpp"
#include "cftk/dataset.hpp"
#include "cftk/error.hpp"
#include "cftk/nn.hpp"
#include "cftk/optim.hpp"

namespace cftk {

struct TrainConfig {
  std::uint64_t epochs = 500;
  // 0 selects full batch up to 4096 rows, 1024 beyond.
  std::size_t batch_size = 0;
  double gamma = 1.2;
  std::uint64_t seed = 0;
  AdamConfig adam;
  // Write a checkpoint every N epochs (0: only at the end).
  std::uint64_t checkpoint_interval = 0;
  std::filesystem::path checkpoint_path;  // empty: no checkpoint files

  std::size_t effective_batch_size(std::size_t rows) const;
  // Throws ContractError for epochs == 0, gamma <= 0 or oversized batches.
  void validate(std::size_t rows) const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainLogEntry {
  std::uint64_t epoch = 0;
  double elbo = 0.0;     // reconstruction loss for the generator
  double control = 0.0;  // L_c; the MMD penalty for the generator
  double total = 0.0;
  double kl = 0.0;
  double seconds = 0.0;  // wall clock for the epoch
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  double r = 0.0;
  // Rendered as leading "# key=value" lines.
  std::vector<std::pair<std::string, std::string>> header;

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

nlohmann::json to_json(const TrainLog& log);
TrainLog train_log_from_json(const nlohmann::json& j);

struct BatchContext {
  std::uint64_t epoch = 0;
  std::uint64_t batch = 0;
  std::span<const std::size_t> rows;
};

struct StepLosses {
  Tensor total;  // tracked
  double elbo = 0.0;
  double control = 0.0;
  double kl = 0.0;
};

class TrainingObjective {
 public:
  virtual ~TrainingObjective() = default;
  virtual std::string kind() const = 0;
  virtual std::size_t num_rows() const = 0;
  virtual const Schema& schema() const = 0;
  virtual const ParameterStore& parameters() const = 0;
  virtual void set_parameters(ParameterStore p) = 0;
  // Called once before the first optimizer step of a fresh run.
  virtual void prepare(const BatchContext&, const TrainConfig&) {}
  virtual StepLosses loss(const ParamView& p, const BatchContext& ctx, const TrainConfig& config) = 0;
  // Model description (spec, schema, parameters); enough to rebuild it.
  virtual nlohmann::json model_json() const = 0;
  // Frozen loss-normalization constant (0 when unused).
  virtual double normalization() const { return 0.0; }
  virtual void set_normalization(double) {}
  virtual std::vector<std::pair<std::string, std::string>> log_header(const TrainConfig&) const { return {}; }
};

struct TrainResult {
  ParameterStore params;
  TrainLog log;
  AdamState optimizer;
  std::uint64_t epochs_completed = 0;
};

// Thrown when a loss or gradient turns non-finite. The last good state has
// already been written to the configured checkpoint path.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::uint64_t epoch) : NumericError(what), epoch_(epoch) {}
  std::uint64_t epoch() const { return epoch_; }

 private:
  std::uint64_t epoch_;
};

TrainResult train(TrainingObjective& objective, const TrainConfig& config);

// Checkpoint document for the objective's current state.
nlohmann::json make_checkpoint(const TrainingObjective& objective, const TrainConfig& config,
                               const AdamState& optimizer, std::uint64_t epochs_completed,
                               const TrainLog& log);
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& checkpoint);
nlohmann::json load_checkpoint(const std::filesystem::path& path);

// Continues from `checkpoint` for `remaining` epochs with the checkpoint's
// config. `objective` must already carry a model rebuilt from the checkpoint
// (see CausalObjective::from_checkpoint); its schema must match.
TrainResult resume(const nlohmann::json& checkpoint, TrainingObjective& objective, std::uint64_t remaining,
                   std::optional<std::filesystem::path> checkpoint_path = std::nullopt);

// Objective for the Fair-K and EXOC models: negative ELBO, plus gamma * R * L_c for EXOC.
class CausalObjective : public TrainingObjective {
 public:
  CausalObjective(CausalModel model, TabularDataset data);
  static CausalObjective from_checkpoint(const nlohmann::json& checkpoint, TabularDataset data);

  std::string kind() const override { return "causal-model"; }
  std::size_t num_rows() const override { return data_.size(); }
  const Schema& schema() const override { return data_.schema(); }
  const ParameterStore& parameters() const override { return model_.params(); }
  void set_parameters(ParameterStore p) override { model_.set_params(std::move(p)); }
  void prepare(const BatchContext& first, const TrainConfig& config) override;
  StepLosses loss(const ParamView& p, const BatchContext& ctx, const TrainConfig& config) override;
  nlohmann::json model_json() const override { return to_json(model_); }
  double normalization() const override { return r_; }
  void set_normalization(double r) override { r_ = r; }
  std::vector<std::pair<std::string, std::string>> log_header(const TrainConfig& config) const override;

  const CausalModel& model() const { return model_; }

 private:
  CausalModel model_;
  TabularDataset data_;
  double r_ = 0.0;
};

}  // namespace cftk
