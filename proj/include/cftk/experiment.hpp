#pragma once

// Experiment pipeline behind the command-line harness: source data, seeded
// splits, generator training, synthesis, the five-predictor comparison, the
// gamma and control-target ablations, and the analytic bound table.
//
// Every stage is a pure function of the configuration and the seed. Stages
// compute their prerequisites in-process (and cache them), so running `run`
// alone produces the same artifacts as running each verb in turn.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cftk/baselines.hpp"
#include "cftk/bounds.hpp"
#include "cftk/causal.hpp"
#include "cftk/dataset.hpp"
#include "cftk/generator.hpp"
#include "cftk/metrics.hpp"
#include "cftk/trainer.hpp"

namespace cftk {

inline constexpr const char* kToolkitVersion = "0.1.0";

struct ExperimentConfig {
  std::string preset = "desk";
  std::string dataset = "law";
  // Source data: a CSV plus its schema, or one of the built-in simulators.
  std::filesystem::path data_path;
  std::filesystem::path schema_path;
  std::string simulator = "law";
  std::size_t source_rows = 2000;
  std::uint64_t data_seed = 0;
  // "synthetic": fit and evaluate on generator-synthesized data with its
  // ground-truth arms. "real": fit on the source split, evaluate on the
  // generator's counterfactuals of the test rows.
  std::string evaluation = "synthetic";
  std::size_t synthetic_rows = 2000;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::uint64_t epochs = 500;
  std::uint64_t generator_epochs = 500;
  std::size_t generator_batch_size = 256;
  double gamma = 1.2;
  std::vector<double> gamma_grid{1.0, 1.4, 1.8};
  double learning_rate = 1e-3;
  GeneratorSpec generator;
  CausalModelSpec model;  // the EXOC model; Fair-K shares dim_k and hidden
  std::optional<double> mmd_report_scale;
  // Random parameter sets per variant in the bound table, and draws per set.
  std::size_t bound_sets = 20;
  std::uint64_t bound_draws = 100000;
  std::filesystem::path out = "runs";

  // Throws ContractError on inconsistent values.
  void validate() const;
};

// Relative data and schema paths inside `j` resolve against `base`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
nlohmann::json to_json(const ExperimentConfig& c);
// LoadError when the file is missing or malformed.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// "desk": 2,000 synthetic rows, 500 epochs, 3 seeds. "paper": full-size
// source, 8,000 epochs, 5 seeds. `dataset` is "law" or "adult".
ExperimentConfig preset_config(const std::string& preset, const std::string& dataset);
// Content hash of the configuration without its output directory.
std::string config_hash(const ExperimentConfig& c);

// Files written under one output directory, with their content hashes.
class ArtifactStore {
 public:
  ArtifactStore(std::filesystem::path root, std::string config_hash, nlohmann::json config);

  const std::filesystem::path& root() const { return root_; }
  // Atomic write; records the artifact under `seed` (none: shared).
  void write(const std::string& relative, const std::string& contents, std::optional<std::uint64_t> seed = {});
  // Records a file some other component wrote.
  void record(const std::string& relative, std::optional<std::uint64_t> seed = {});
  void seed_status(std::uint64_t seed, const std::string& status, const std::string& error = "");
  // Writes manifest.json, merged with an existing manifest of the same config.
  void finalize() const;
  const std::map<std::string, std::string>& artifacts() const { return artifacts_; }

 private:
  std::filesystem::path root_;
  std::string hash_;
  nlohmann::json config_;
  std::map<std::string, std::string> artifacts_;
  std::map<std::uint64_t, std::vector<std::string>> by_seed_;
  std::map<std::uint64_t, std::pair<std::string, std::string>> status_;
};

// Every listed artifact exists and its content hash matches. Returns the
// problems found (empty when the manifest is complete).
std::vector<std::string> verify_manifest(const std::filesystem::path& root);

// Fit data and the counterfactual arms of its held-out rows.
struct EvaluationData {
  TabularDataset train;
  TabularDataset test;
  std::vector<TabularDataset> arms;  // test individuals under S <- s, train statistics
};

class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }
  const std::string& hash() const { return hash_; }
  ArtifactStore& store() { return store_; }

  const TabularDataset& source();
  const SplitBundle& prepared(std::uint64_t seed);
  const GeneratorTraining& generator(std::uint64_t seed);
  const SyntheticData& synthetic(std::uint64_t seed);
  const EvaluationData& evaluation(std::uint64_t seed);

  TrainConfig train_config(std::uint64_t seed, double gamma) const;
  // Performance on the factual test rows and divergence across the arms.
  MetricsReport evaluate(const BaselinePredictor& p, const EvaluationData& e, std::uint64_t seed,
                         const std::string& method) const;

 private:
  ExperimentConfig config_;
  std::string hash_;
  ArtifactStore store_;
  std::optional<TabularDataset> source_;
  std::map<std::uint64_t, SplitBundle> prepared_;
  std::map<std::uint64_t, GeneratorTraining> generators_;
  std::map<std::uint64_t, SyntheticData> synthetic_;
  std::map<std::uint64_t, EvaluationData> evaluation_;
};

struct SeedFailure {
  std::uint64_t seed = 0;
  std::string error;
};

// Shared by every verb: seeds that failed, and the derived exit code
// (0 all seeds ok, 1 any seed failed).
struct VerbStatus {
  std::vector<std::uint64_t> succeeded;
  std::vector<SeedFailure> failed;
  int exit_code() const { return failed.empty() ? 0 : 1; }
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};
MeanStd mean_std(const std::vector<double>& values);
// "0.123±0.004"
std::string format_mean_std(const MeanStd& m);

// Spearman rank correlation with average ranks for ties; 0 when either side
// is constant or there are fewer than two points.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct TrendVerdict {
  std::string metric;
  double rho = 0.0;
  // Adjacent steps (in x order) that move against the sign of rho.
  std::size_t inversions = 0;
  std::string verdict;  // "increasing", "decreasing" or "no trend"
};
TrendVerdict trend_verdict(const std::string& metric, const std::vector<double>& x, const std::vector<double>& y);

struct MethodRow {
  std::string method;
  std::vector<MetricsReport> runs;  // one per successful seed
};

// One row per method, mean ± sample std across seeds.
std::string format_table(const std::vector<MethodRow>& rows, bool classification, const std::string& label = "method");

struct PrepareResult {
  VerbStatus status;
  std::size_t source_rows = 0;
  std::size_t rows_dropped = 0;
};
PrepareResult cmd_prepare(Experiment& ex);

struct GeneratorResult {
  VerbStatus status;
  std::map<std::uint64_t, TrainLog> logs;
};
GeneratorResult cmd_train_generator(Experiment& ex);

struct SynthesizeResult {
  VerbStatus status;
  std::map<std::uint64_t, std::size_t> rows;
  std::map<std::uint64_t, std::size_t> arms;
};
SynthesizeResult cmd_synthesize(Experiment& ex);

struct RunResult {
  VerbStatus status;
  bool classification = false;
  std::vector<MethodRow> rows;  // Constant, Full, Unaware, Fair-K, EXOC
  // Training logs of the latent models, keyed by "<method>/seed-<s>".
  std::map<std::string, TrainLog> logs;
  std::string table;
};
RunResult cmd_run(Experiment& ex);

struct GammaAblationResult {
  VerbStatus status;
  bool classification = false;
  std::vector<double> gammas;
  std::vector<MethodRow> rows;  // one per gamma, label "gamma=<g>"
  std::vector<TrendVerdict> verdicts;  // MMD, then RMSE or accuracy
  std::map<std::string, TrainLog> logs;
  std::string table;
};
GammaAblationResult cmd_ablate_gamma(Experiment& ex, const std::vector<double>& gammas);

struct ControlRun {
  std::uint64_t seed = 0;
  std::string variant;  // "S''" or "Y-hat"
  double epoch0_total = 0.0;
  double epoch0_elbo = 0.0;
  MetricsReport report;
};
struct ControlAblationResult {
  VerbStatus status;
  bool classification = false;
  std::vector<ControlRun> runs;
  std::vector<MethodRow> rows;
  std::map<std::string, TrainLog> logs;
  std::string table;
};
ControlAblationResult cmd_ablate_control(Experiment& ex);

struct BoundRow {
  std::string label;
  bounds::LinearCaseParams params;
  double delta_a = 0.0;
  double delta_b = 0.0;
  bool fairk_looser = false;
  double coverage_a = 0.0;
  double coverage_b = 0.0;
};
// Seeded random parameter set `index` (all standard deviations positive,
// s != s*).
bounds::LinearCaseParams random_bound_params(std::uint64_t seed, std::uint64_t index);
std::vector<BoundRow> cmd_bounds(Experiment& ex);
std::string bounds_csv(const std::vector<BoundRow>& rows);

// Rebuilds table_<dataset>.csv from the per-seed metrics files under `root`.
std::string cmd_report(const std::filesystem::path& root);

}  // namespace cftk
