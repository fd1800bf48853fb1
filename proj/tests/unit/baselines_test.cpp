#include "doctest.h"

#include <cmath>

#include "cftk/baselines.hpp"
#include "cftk/error.hpp"
#include "cftk/metrics.hpp"
#include "cftk/rng.hpp"

using namespace cftk;

namespace {

Schema schema(bool classification, bool standardize_target = true) {
  nlohmann::json j{{"name", "base-mini"},
                   {"standardize_target", standardize_target},
                   {"columns",
                    {{{"name", "s"}, {"kind", "sensitive"}, {"categories", {"p", "q"}}},
                     {{"name", "x1"}, {"kind", "continuous"}},
                     {{"name", "x2"}, {"kind", "continuous"}},
                     {{"name", "y"},
                      {"kind", classification ? "binary-target" : "continuous-target"},
                      {"positive", {"1"}},
                      {"negative", {"0"}}}}}};
  return schema_from_json(j);
}

// y = 1.5 x1 - 0.7 x2 + 2 [s = q] + 0.3, no noise.
TabularDataset linear_data(std::size_t n, bool standardize_target = true) {
  const CounterRng rng(5, streams::kSimulation);
  std::vector<double> x, y;
  std::vector<std::size_t> s, ids;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.normal(0, 0, i), b = 2.0 * rng.normal(1, 0, i);
    const std::size_t g = i % 2;
    x.insert(x.end(), {a, b});
    y.push_back(1.5 * a - 0.7 * b + 2.0 * static_cast<double>(g) + 0.3);
    s.push_back(g);
    ids.push_back(i);
  }
  return make_dataset(schema(false, standardize_target), x, s, y, ids);
}

TabularDataset with_s(const TabularDataset& d, std::vector<std::size_t> s) {
  return make_dataset(d.schema(), d.raw_x(), std::move(s), d.raw_y(), d.ids(), d.stats());
}

}  // namespace

TEST_CASE("constant regression predicts the training mean") {
  const TabularDataset d = make_dataset(schema(false, false), {0, 0, 1, 1, 2, 2}, {0, 1, 0}, {1, 2, 3}, {0, 1, 2});
  const BaselinePredictor p = fit_constant(d);
  CHECK(p.constant() == 2.0);
  for (double v : p.predict(d)) CHECK(v == 2.0);
}

TEST_CASE("constant classifier follows the majority class") {
  std::vector<double> x, y;
  std::vector<std::size_t> s, ids;
  for (std::size_t i = 0; i < 10; ++i) {
    x.insert(x.end(), {static_cast<double>(i), 1.0});
    y.push_back(i < 7 ? 1.0 : 0.0);
    s.push_back(i % 2);
    ids.push_back(i);
  }
  const TabularDataset d = make_dataset(schema(true), x, s, y, ids);
  const BaselinePredictor p = fit_constant(d);
  const auto scores = p.predict(d);
  CHECK(scores[0] == doctest::Approx(0.7));
  CHECK(accuracy(scores, d.y().data()) == doctest::Approx(0.7));
}

TEST_CASE("constant predictions have zero counterfactual divergence") {
  const TabularDataset d = linear_data(30);
  const BaselinePredictor p = fit_constant(d);
  PredictionSet ps;
  ps.arms = {p.predict(d), p.predict(with_s(d, std::vector<std::size_t>(30, 1)))};
  CHECK(pairwise_cf_divergence(ps, DivergenceMetric::kMmd).mean == 0.0);
  CHECK(pairwise_cf_divergence(ps, DivergenceMetric::kWasserstein).mean == 0.0);
}

TEST_CASE("Full recovers noiseless linear data") {
  const TabularDataset d = linear_data(80);
  const BaselinePredictor p = fit_full(d);
  CHECK(rmse(p.predict(d), d.y().data()) < 1e-6);
}

TEST_CASE("Unaware ignores S and Full does not") {
  const TabularDataset d = linear_data(60);
  const TabularDataset flipped = with_s(d, [&] {
    std::vector<std::size_t> s = d.s();
    for (auto& v : s) v = 1 - v;
    return s;
  }());
  const BaselinePredictor u = fit_unaware(d);
  const auto ua = u.predict(d), ub = u.predict(flipped);
  // raw-unit round trip in with_s costs a few ulps
  for (std::size_t i = 0; i < ua.size(); ++i) CHECK(std::abs(ua[i] - ub[i]) < 1e-12);
  const BaselinePredictor f = fit_full(d);
  const auto a = f.predict(d), b = f.predict(flipped);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) > 0.1);
}

TEST_CASE("Fair-K predictor is deterministic and reads data only through K") {
  const TabularDataset d = linear_data(80);
  TrainConfig c;
  c.epochs = 30;
  c.seed = 4;
  const BaselinePredictor a = fit_fairk(d, c, 8);
  const BaselinePredictor b = fit_fairk(d, c, 8);
  CHECK(a.predict(d) == b.predict(d));
  CHECK(a.latent_model()->params().same_values(b.latent_model()->params()));
  CHECK(a.train_log().entries.size() == 30);
  CHECK(a.predict(d) == a.linear().predict(infer_posterior(*a.latent_model(), d).k));
  const BaselinePredictor back = predictor_from_json(nlohmann::json::parse(to_json(a).dump()));
  CHECK(back.predict(d) == a.predict(d));
}

TEST_CASE("predictors reject other schemas") {
  const TabularDataset d = linear_data(20);
  const BaselinePredictor p = fit_unaware(d);
  const TabularDataset other = make_dataset(schema(false, false), d.raw_x(), d.s(), d.raw_y(), d.ids());
  CHECK_THROWS_AS(p.predict(other), ContractError);
}
