#include "doctest.h"

#include <cmath>

#include "cftk/glm.hpp"
#include "cftk/log.hpp"
#include "cftk/metrics.hpp"

using namespace cftk;

TEST_CASE("realizable linear regression is recovered") {
  std::vector<double> k, y;
  for (int i = 0; i < 40; ++i) {
    const double a = std::cos(i * 1.3), b = std::sin(i * 0.4) * 3.0;
    k.insert(k.end(), {a, b});
    y.push_back(2.0 * a - 0.5 * b + 1.25);
  }
  const Tensor kt = Tensor::matrix(40, 2, k);
  const DownstreamFit f = downstream_predict(kt, Tensor::matrix(40, 1, y), TaskKind::kRegression);
  CHECK(rmse(f.predictions, y) < 1e-6);
}

TEST_CASE("constant posteriors predict the training mean") {
  std::vector<std::string> warnings;
  const auto old = set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
  const DownstreamFit f = downstream_predict(Tensor::matrix(4, 1, {0.3, 0.3, 0.3, 0.3}),
                                             Tensor::matrix(4, 1, {1, 2, 3, 6}), TaskKind::kRegression);
  set_warning_sink(old);
  CHECK(warnings.size() == 1);
  for (double p : f.predictions) CHECK(p == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("two separable points land on the correct sides of one half") {
  const DownstreamFit f = downstream_predict(Tensor::matrix(2, 1, {-1.0, 1.0}), Tensor::matrix(2, 1, {0, 1}),
                                             TaskKind::kClassification);
  CHECK(f.predictions[0] < 0.5);
  CHECK(f.predictions[1] > 0.5);
  CHECK(f.model.steps == 10000);
}

TEST_CASE("linear model round-trips") {
  const DownstreamFit f = downstream_predict(Tensor::matrix(3, 1, {0, 1, 3}), Tensor::matrix(3, 1, {1, 0, 1}),
                                             TaskKind::kClassification);
  const LinearModel back = linear_model_from_json(nlohmann::json::parse(to_json(f.model).dump()));
  CHECK(back.predict(Tensor::matrix(1, 1, {2.0}))[0] == f.model.predict(Tensor::matrix(1, 1, {2.0}))[0]);
}
