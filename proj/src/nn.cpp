#include "cftk/nn.hpp"

#include <cmath>
#include <numbers>

#include "cftk/error.hpp"
#include "cftk/rng.hpp"

namespace cftk {

namespace {

Tensor uniform_array(const std::string& name, std::size_t rows, std::size_t cols, double bound,
                     std::uint64_t seed) {
  const CounterRng rng(seed, streams::kInit);
  const std::uint64_t key = stable_hash(name);
  std::vector<double> v(rows * cols);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = bound * (2.0 * rng.uniform(key, 0, i) - 1.0);
  return Tensor::matrix(rows, cols, std::move(v));
}

}  // namespace

void init_mlp(ParameterStore& store, const std::string& prefix, const MlpLayout& layout,
              std::uint64_t seed) {
  if (layout.in == 0 || layout.hidden == 0 || layout.out == 0) {
    throw ContractError("mlp '" + prefix + "': layer widths must be positive");
  }
  const double b0 = 1.0 / std::sqrt(static_cast<double>(layout.in));
  const double b1 = 1.0 / std::sqrt(static_cast<double>(layout.hidden));
  store.add(prefix + ".w0", uniform_array(prefix + ".w0", layout.in, layout.hidden, b0, seed));
  store.add(prefix + ".b0", uniform_array(prefix + ".b0", 1, layout.hidden, b0, seed));
  store.add(prefix + ".w1", uniform_array(prefix + ".w1", layout.hidden, layout.out, b1, seed));
  store.add(prefix + ".b1", uniform_array(prefix + ".b1", 1, layout.out, b1, seed));
}

void init_constant(ParameterStore& store, const std::string& name, std::size_t rows,
                   std::size_t cols, double value) {
  store.add(name, Tensor::full({rows, cols}, value));
}

Tensor mlp(const ParamView& p, const std::string& prefix, const Tensor& input) {
  const Tensor h = softplus(matmul(input, p[prefix + ".w0"]) + p[prefix + ".b0"]);
  return matmul(h, p[prefix + ".w1"]) + p[prefix + ".b1"];
}

Tensor gaussian_nll(const Tensor& x, const Tensor& mean, const Tensor& logvar) {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  return scale(add_scalar(logvar + square(x - mean) * exp(-logvar), log2pi), 0.5);
}

Tensor kl_standard_normal(const Tensor& mu, const Tensor& logvar) {
  return scale(add_scalar(exp(logvar) + square(mu) - logvar, -1.0), 0.5);
}

Tensor kl_normal(const Tensor& mu_q, const Tensor& lv_q, const Tensor& mu_p, const Tensor& lv_p) {
  return scale(add_scalar(lv_p - lv_q + (exp(lv_q) + square(mu_q - mu_p)) * exp(-lv_p), -1.0), 0.5);
}

Tensor categorical_nll(const Tensor& onehot, const Tensor& logits) {
  return neg(row_sum(onehot * log_softmax(logits)));
}

Tensor feature_nll(const std::vector<FeatureBlock>& blocks, const Tensor& x, const Tensor& out,
                   const Tensor& logvar) {
  const std::size_t d = x.cols();
  std::vector<double> mask(d, 0.0);
  bool any_continuous = false;
  for (const auto& b : blocks)
    if (b.kind == ColumnKind::kContinuous) {
      mask[b.offset] = 1.0;
      any_continuous = true;
    }
  Tensor total;
  bool have = false;
  if (any_continuous) {
    total = row_sum(gaussian_nll(x, out, logvar) * Tensor::matrix(1, d, mask));
    have = true;
  }
  for (const auto& b : blocks) {
    if (b.kind != ColumnKind::kCategorical) continue;
    const Tensor t = categorical_nll(slice_cols(x, b.offset, b.offset + b.width),
                                     slice_cols(out, b.offset, b.offset + b.width));
    total = have ? total + t : t;
    have = true;
  }
  if (!have) throw ContractError("feature_nll: no feature blocks");
  return total;
}

Tensor target_nll(TaskKind task, const Tensor& y, const Tensor& out, const Tensor& logvar) {
  if (task == TaskKind::kRegression) return gaussian_nll(y, out, logvar);
  // -(y * l - softplus(l))
  return softplus(out) - y * out;
}

Tensor feature_means(const std::vector<FeatureBlock>& blocks, const Tensor& out) {
  std::vector<Tensor> parts;
  for (const auto& b : blocks) {
    const Tensor slice = slice_cols(out, b.offset, b.offset + b.width);
    parts.push_back(b.kind == ColumnKind::kCategorical ? exp(log_softmax(slice)) : slice);
  }
  return concat_cols(parts);
}

Tensor target_mean(TaskKind task, const Tensor& out) {
  return task == TaskKind::kRegression ? out : sigmoid(out);
}

GaussianParams split_gaussian(const Tensor& out) {
  if (out.cols() % 2 != 0) throw DimensionError("split_gaussian: odd width " + to_string(out.shape()));
  const std::size_t d = out.cols() / 2;
  return {slice_cols(out, 0, d), slice_cols(out, d, 2 * d)};
}

}  // namespace cftk
