#include "cftk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "cftk/error.hpp"

namespace cftk {

namespace {

void require_aligned(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.empty()) throw ContractError(std::string(what) + ": empty input");
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": lengths differ (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> truth) {
  require_aligned(pred, truth, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> truth) {
  require_aligned(pred, truth, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double accuracy(std::span<const double> scores, std::span<const double> truth) {
  require_aligned(scores, truth, "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double label = scores[i] >= 0.5 ? 1.0 : 0.0;
    if (label == (truth[i] >= 0.5 ? 1.0 : 0.0)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

double median_heuristic(std::span<const double> points, std::size_t dim) {
  if (dim == 0 || points.size() % dim != 0) throw DimensionError("median_heuristic: bad dimension");
  const std::size_t n = points.size() / dim;
  if (n < 2) return 1.0;
  std::vector<double> d;
  d.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = points[i * dim + k] - points[j * dim + k];
        s += diff * diff;
      }
      d.push_back(s);
    }
  // Lower median of squared distances; sqrt is monotone.
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>((d.size() - 1) / 2);
  std::nth_element(d.begin(), mid, d.end());
  const double med = std::sqrt(*mid);
  return med > 0.0 ? med : 1.0;
}

MmdResult mmd(std::span<const double> a, std::span<const double> b, const MmdOptions& options) {
  if (a.empty() || b.empty()) throw ContractError("mmd: empty sample");
  MmdResult r;
  if (options.bandwidth) {
    if (!(*options.bandwidth > 0.0)) throw ContractError("mmd: bandwidth must be positive");
    r.bandwidth = *options.bandwidth;
  } else {
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    r.bandwidth = median_heuristic(pooled, 1);
  }
  const double gamma = 1.0 / (2.0 * r.bandwidth * r.bandwidth);
  auto mean_kernel = [gamma](std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (double xi : x)
      for (double yj : y) s += std::exp(-gamma * (xi - yj) * (xi - yj));
    return s / (static_cast<double>(x.size()) * static_cast<double>(y.size()));
  };
  r.mmd2 = mean_kernel(a, a) + mean_kernel(b, b) - 2.0 * mean_kernel(a, b);
  const double scale = options.report_scale.value_or(0.5 * static_cast<double>(a.size() + b.size()));
  r.value = std::max(r.mmd2, 0.0) * scale;
  return r;
}

double wasserstein1(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ContractError("wasserstein1: empty sample");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const std::size_t n = x.size(), m = y.size();
  if (n == m) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(x[i] - y[i]);
    return s / static_cast<double>(n);
  }
  // Quantile functions are step functions with breaks at i/n and j/m.
  // Walk the merged grid in integer units of 1/(n*m).
  double total = 0.0;
  std::size_t i = 0, j = 0;
  std::uint64_t pos = 0;
  const std::uint64_t end = static_cast<std::uint64_t>(n) * m;
  while (pos < end) {
    const std::uint64_t next_a = static_cast<std::uint64_t>(i + 1) * m;
    const std::uint64_t next_b = static_cast<std::uint64_t>(j + 1) * n;
    const std::uint64_t next = std::min(next_a, next_b);
    total += static_cast<double>(next - pos) * std::abs(x[i] - y[j]);
    pos = next;
    if (next == next_a) ++i;
    if (next == next_b) ++j;
  }
  return total / static_cast<double>(end);
}

void PredictionSet::validate() const {
  if (arms.size() < 2) throw ContractError("prediction set needs at least 2 counterfactual arms");
  const std::size_t n = arms.front().size();
  if (n == 0) throw ContractError("prediction set has no individuals");
  for (const auto& arm : arms) {
    if (arm.size() != n) throw DimensionError("prediction arms differ in length");
    if (scores) {
      for (double v : arm)
        if (v < 0.0 || v > 1.0) throw ContractError("classification score outside [0, 1]");
    }
  }
}

DivergenceSummary pairwise_cf_divergence(const PredictionSet& p, DivergenceMetric metric,
                                         const MmdOptions& options) {
  p.validate();
  DivergenceSummary out;
  double total = 0.0;
  for (std::size_t s = 0; s < p.arms.size(); ++s)
    for (std::size_t t = s + 1; t < p.arms.size(); ++t) {
      const double v = metric == DivergenceMetric::kMmd ? mmd(p.arms[s], p.arms[t], options).value
                                                        : wasserstein1(p.arms[s], p.arms[t]);
      out.pairs.push_back({s, t, v});
      total += v;
    }
  out.mean = total / static_cast<double>(out.pairs.size());
  return out;
}

std::string MetricsReport::csv_header() {
  return "dataset,method,seed,config_hash,task,rmse,mae,accuracy,mmd,wass";
}

std::string MetricsReport::csv_row() const {
  std::ostringstream os;
  os << dataset << ',' << method << ',' << seed << ',' << config_hash << ','
     << (classification ? "classification" : "regression") << ',' << fmt(rmse) << ',' << fmt(mae)
     << ',' << fmt(accuracy) << ',' << fmt(mmd.mean) << ',' << fmt(wass.mean);
  return os.str();
}

nlohmann::json to_json(const MetricsReport& r) {
  auto pairs = [](const DivergenceSummary& d) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : d.pairs) a.push_back({{"arm_a", p.arm_a}, {"arm_b", p.arm_b}, {"value", p.value}});
    return a;
  };
  nlohmann::json j{{"dataset", r.dataset},
                   {"method", r.method},
                   {"seed", r.seed},
                   {"config_hash", r.config_hash},
                   {"task", r.classification ? "classification" : "regression"},
                   {"mmd", r.mmd.mean},
                   {"wass", r.wass.mean},
                   {"mmd_pairs", pairs(r.mmd)},
                   {"wass_pairs", pairs(r.wass)}};
  if (r.classification) {
    j["accuracy"] = r.accuracy;
  } else {
    j["rmse"] = r.rmse;
    j["mae"] = r.mae;
  }
  return j;
}

}  // namespace cftk
