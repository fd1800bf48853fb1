#include "cftk/glm.hpp"

#include <cmath>

#include "cftk/error.hpp"
#include "cftk/log.hpp"

namespace cftk {

namespace {

double sigmoid_scalar(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// Largest eigenvalue of a symmetric PSD matrix by power iteration.
double top_eigenvalue(const std::vector<double>& g, std::size_t m) {
  std::vector<double> v(m, 1.0 / std::sqrt(static_cast<double>(m))), w(m);
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    double norm = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      w[i] = 0.0;
      for (std::size_t j = 0; j < m; ++j) w[i] += g[i * m + j] * v[j];
      norm += w[i] * w[i];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (std::size_t i = 0; i < m; ++i) v[i] = w[i] / norm;
    if (std::abs(norm - lambda) <= 1e-12 * norm) return norm;
    lambda = norm;
  }
  return lambda;
}

}  // namespace

std::vector<double> LinearModel::predict(const Tensor& features) const {
  const std::size_t d = weights.size();
  if (features.rank() != 2 || features.cols() != d) {
    throw DimensionError("linear model expects " + std::to_string(d) + " features, got shape " +
                         to_string(features.shape()));
  }
  const std::size_t n = features.rows();
  const auto x = features.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double z = bias;
    for (std::size_t j = 0; j < d; ++j)
      if (active[j]) z += weights[j] * (x[i * d + j] - feature_mean[j]) / feature_std[j];
    out[i] = task == TaskKind::kRegression ? z : sigmoid_scalar(z);
  }
  return out;
}

LinearModel fit_linear(const Tensor& features, const Tensor& y, TaskKind task, const GlmOptions& options) {
  if (features.rank() != 2) throw DimensionError("fit_linear: features must be a matrix");
  const std::size_t n = features.rows(), d = features.cols();
  if (n == 0) throw ContractError("fit_linear: no training rows");
  if (y.size() != n) {
    throw DimensionError("fit_linear: " + std::to_string(n) + " feature rows but " +
                         std::to_string(y.size()) + " targets");
  }
  const auto xr = features.data();
  const auto yv = y.data();
  LinearModel m;
  m.task = task;
  m.weights.assign(d, 0.0);
  m.feature_mean.assign(d, 0.0);
  m.feature_std.assign(d, 1.0);
  m.active.assign(d, true);
  for (std::size_t j = 0; j < d; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += xr[i * d + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (xr[i * d + j] - mu) * (xr[i * d + j] - mu);
    const double sd = std::sqrt(var / static_cast<double>(n));
    m.feature_mean[j] = mu;
    if (sd <= 1e-12) {
      m.active[j] = false;
    } else {
      m.feature_std[j] = sd;
    }
  }
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < d; ++j)
    if (m.active[j]) cols.push_back(j);
  if (cols.size() < d) {
    warn(cols.empty() ? "all features are constant; fitting an intercept-only model"
                      : std::to_string(d - cols.size()) + " constant feature column(s) dropped");
  }
  // Column 0 is the intercept.
  const std::size_t p = cols.size() + 1;
  std::vector<double> z(n * p, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::size_t j = cols[c];
      z[i * p + c + 1] = (xr[i * d + j] - m.feature_mean[j]) / m.feature_std[j];
    }
  std::vector<double> gram(p * p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < p; ++b) gram[a * p + b] += z[i * p + a] * z[i * p + b];
  for (double& v : gram) v /= static_cast<double>(n);
  double lipschitz = top_eigenvalue(gram, p);
  if (task == TaskKind::kClassification) lipschitz *= 0.25;
  const double step = 1.0 / lipschitz;

  std::vector<double> w(p, 0.0), grad(p), resid(n);
  std::size_t it = 0;
  double gnorm = 0.0;
  for (;; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t a = 0; a < p; ++a) s += z[i * p + a] * w[a];
      resid[i] = (task == TaskKind::kRegression ? s : sigmoid_scalar(s)) - yv[i];
    }
    gnorm = 0.0;
    for (std::size_t a = 0; a < p; ++a) {
      double g = 0.0;
      for (std::size_t i = 0; i < n; ++i) g += z[i * p + a] * resid[i];
      grad[a] = g / static_cast<double>(n);
      gnorm += grad[a] * grad[a];
    }
    gnorm = std::sqrt(gnorm);
    if (!std::isfinite(gnorm)) throw NumericError("fit_linear: gradient diverged");
    if (gnorm < options.tolerance || it >= options.max_steps) break;
    for (std::size_t a = 0; a < p; ++a) w[a] -= step * grad[a];
  }
  m.bias = w[0];
  for (std::size_t c = 0; c < cols.size(); ++c) m.weights[cols[c]] = w[c + 1];
  m.steps = it;
  m.gradient_norm = gnorm;
  return m;
}

nlohmann::json to_json(const LinearModel& m) {
  return {{"task", to_string(m.task)},       {"weights", m.weights},
          {"bias", m.bias},                  {"feature_mean", m.feature_mean},
          {"feature_std", m.feature_std},    {"active", m.active},
          {"steps", m.steps},                {"gradient_norm", m.gradient_norm}};
}

LinearModel linear_model_from_json(const nlohmann::json& j) {
  LinearModel m;
  m.task = j.at("task").get<std::string>() == "classification" ? TaskKind::kClassification
                                                              : TaskKind::kRegression;
  m.weights = j.at("weights").get<std::vector<double>>();
  m.bias = j.at("bias").get<double>();
  m.feature_mean = j.at("feature_mean").get<std::vector<double>>();
  m.feature_std = j.at("feature_std").get<std::vector<double>>();
  m.active = j.at("active").get<std::vector<bool>>();
  m.steps = j.at("steps").get<std::size_t>();
  m.gradient_norm = j.at("gradient_norm").get<double>();
  return m;
}

DownstreamFit downstream_predict(const Tensor& k_means, const Tensor& y_train, TaskKind task,
                                 const GlmOptions& options) {
  DownstreamFit f;
  f.model = fit_linear(k_means, y_train, task, options);
  f.predictions = f.model.predict(k_means);
  return f;
}

}  // namespace cftk
