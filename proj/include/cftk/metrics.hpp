#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace cftk {

double rmse(std::span<const double> pred, std::span<const double> truth);
double mae(std::span<const double> pred, std::span<const double> truth);
// Scores are thresholded at 0.5; truth holds 0/1 labels.
double accuracy(std::span<const double> scores, std::span<const double> truth);

// Median of the pairwise Euclidean distances between the rows of `points`
// (n x dim, row-major). Returns 1 when the median is 0.
double median_heuristic(std::span<const double> points, std::size_t dim);

struct MmdOptions {
  // Fixed RBF bandwidth; the median heuristic on the pooled sample otherwise.
  std::optional<double> bandwidth;
  // Multiplier applied to the clamped MMD^2. Unset means the sample size
  // (the mean of the two sample sizes when they differ).
  std::optional<double> report_scale;
};

struct MmdResult {
  double mmd2 = 0.0;       // raw biased estimate (may be slightly negative)
  double bandwidth = 1.0;  // kernel bandwidth actually used
  double value = 0.0;      // max(mmd2, 0) * report scale
};

// Biased V-statistic MMD^2 with k(a, b) = exp(-|a - b|^2 / (2 h^2)).
MmdResult mmd(std::span<const double> a, std::span<const double> b, const MmdOptions& options = {});

// Exact 1-D Wasserstein-1 distance between two empirical distributions.
double wasserstein1(std::span<const double> a, std::span<const double> b);

enum class DivergenceMetric { kMmd, kWasserstein };

// Predictions for every individual under every counterfactual arm:
// arms[s][i] is individual i's prediction with the sensitive attribute forced to s.
struct PredictionSet {
  std::vector<std::vector<double>> arms;
  bool scores = false;  // classification scores in [0, 1]

  void validate() const;
};

struct PairDivergence {
  std::size_t arm_a = 0;
  std::size_t arm_b = 0;
  double value = 0.0;
};

struct DivergenceSummary {
  double mean = 0.0;
  std::vector<PairDivergence> pairs;
};

// Metric on every unordered arm pair, averaged over the |S|(|S|-1)/2 pairs.
DivergenceSummary pairwise_cf_divergence(const PredictionSet& predictions, DivergenceMetric metric,
                                         const MmdOptions& options = {});

struct MetricsReport {
  std::string dataset;
  std::string method;
  std::uint64_t seed = 0;
  std::string config_hash;
  bool classification = false;
  double rmse = 0.0;
  double mae = 0.0;
  double accuracy = 0.0;
  DivergenceSummary mmd;
  DivergenceSummary wass;

  static std::string csv_header();
  std::string csv_row() const;
};

nlohmann::json to_json(const MetricsReport& report);

}  // namespace cftk
