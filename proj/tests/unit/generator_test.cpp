#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "cftk/error.hpp"
#include "cftk/generator.hpp"
#include "cftk/log.hpp"
#include "cftk/metrics.hpp"
#include "cftk/rng.hpp"
#include "../support/gradcheck.hpp"

using namespace cftk;
namespace fs = std::filesystem;

namespace {

Schema gen_schema(std::size_t groups, bool classification = false) {
  nlohmann::json cats = nlohmann::json::array();
  for (std::size_t g = 0; g < groups; ++g) cats.push_back("g" + std::to_string(g));
  nlohmann::json j{{"name", "gen-mini"},
                   {"columns",
                    {{{"name", "s"}, {"kind", "sensitive"}, {"categories", cats}},
                     {{"name", "x1"}, {"kind", "continuous"}},
                     {{"name", "tier"}, {"kind", "categorical"}, {"categories", {"lo", "mid", "hi"}}},
                     {{"name", "y"},
                      {"kind", classification ? "binary-target" : "continuous-target"},
                      {"positive", {"1"}},
                      {"negative", {"0"}}}}}};
  return schema_from_json(j);
}

TabularDataset gen_data(std::size_t n, std::size_t groups, std::uint64_t seed, bool classification = false) {
  const CounterRng rng(seed, streams::kSimulation);
  std::vector<double> x, y;
  std::vector<std::size_t> s, ids;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t g = static_cast<std::size_t>(rng.uniform(0, 0, i) * static_cast<double>(groups));
    const double k = rng.normal(1, 0, i);
    const std::size_t tier = k + 0.5 * g < -0.4 ? 0 : (k + 0.5 * g < 0.6 ? 1 : 2);
    x.push_back(k + 0.7 * static_cast<double>(g) + 0.2 * rng.normal(2, 0, i));
    for (std::size_t t = 0; t < 3; ++t) x.push_back(t == tier ? 1.0 : 0.0);
    const double target = 0.8 * k + 0.4 * static_cast<double>(g);
    y.push_back(classification ? (target > 0.3 ? 1.0 : 0.0) : target + 0.1 * rng.normal(3, 0, i));
    s.push_back(g);
    ids.push_back(100 + i);
  }
  return make_dataset(gen_schema(groups, classification), x, s, y, ids);
}

GeneratorSpec small_spec(double tau = 1.0) {
  GeneratorSpec g;
  g.latent_dim = 3;
  g.hidden = 6;
  g.tau = tau;
  return g;
}

GeneratorModel trained_copy(GeneratorModel m) {
  m.mark_trained();
  return m;
}

// `unbiased` drops the i == j terms from the within-group averages.
double oracle_mmd2(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b, double h,
                   bool unbiased = true) {
  auto k = [h](const std::vector<double>& u, const std::vector<double>& v) {
    double d = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) d += (u[i] - v[i]) * (u[i] - v[i]);
    return std::exp(-d / (2 * h * h));
  };
  auto avg = [&](const auto& p, const auto& q, bool self) {
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < q.size(); ++j) {
        if (self && unbiased && i == j) continue;
        s += k(p[i], q[j]);
        ++count;
      }
    return s / static_cast<double>(count);
  };
  return avg(a, a, true) + avg(b, b, true) - 2 * avg(a, b, false);
}

// Mean pairwise biased MMD^2 between the codes of different groups.
double latent_mmd(const Tensor& codes, const std::vector<std::size_t>& s, std::size_t groups) {
  std::vector<std::vector<std::vector<double>>> by(groups);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto r = codes.data().subspan(i * codes.cols(), codes.cols());
    by[s[i]].emplace_back(r.begin(), r.end());
  }
  const double h = median_heuristic(codes.data(), codes.cols());
  double total = 0.0;
  for (std::size_t a = 0; a < groups; ++a)
    for (std::size_t b = a + 1; b < groups; ++b) total += oracle_mmd2(by[a], by[b], h, false);
  return total / static_cast<double>(num_pairs(groups));
}

}  // namespace

TEST_CASE("pair count is |S|(|S|-1)/2") {
  CHECK(num_pairs(2) == 1);
  CHECK(num_pairs(3) == 3);
  CHECK(num_pairs(4) == 6);
}

TEST_CASE("penalty averages pairwise MMD^2 over N_p") {
  for (std::size_t groups : {2u, 3u, 4u}) {
    CAPTURE(groups);
    const std::size_t n = 4 * groups + 3;
    const CounterRng rng(groups, 9);
    std::vector<double> codes(n * 2);
    for (std::size_t i = 0; i < codes.size(); ++i) codes[i] = rng.normal(0, 0, i);
    std::vector<std::size_t> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = i % groups;
    const PenaltyTerms p = distribution_matching_penalty(Tensor::matrix(n, 2, codes), s, groups);
    std::vector<std::vector<std::vector<double>>> by(groups);
    for (std::size_t i = 0; i < n; ++i) by[s[i]].push_back({codes[2 * i], codes[2 * i + 1]});
    double total = 0.0;
    for (std::size_t a = 0; a < groups; ++a)
      for (std::size_t b = a + 1; b < groups; ++b) total += oracle_mmd2(by[a], by[b], p.bandwidth);
    CHECK(p.pairs_used == num_pairs(groups));
    CHECK(p.value.item() == doctest::Approx(total / static_cast<double>(num_pairs(groups))).epsilon(1e-12));
  }
}

TEST_CASE("pairs with an absent or singleton group are skipped but N_p is kept") {
  const Tensor codes = Tensor::matrix(5, 1, {0.0, 1.0, 2.0, 3.5, 7.0});
  const std::vector<std::size_t> s{0, 0, 1, 1, 3};
  const PenaltyTerms p = distribution_matching_penalty(codes, s, 4);
  CHECK(p.pairs_used == 1);
  CHECK(p.pairs_skipped == 5);
  const double one = oracle_mmd2({{0.0}, {1.0}}, {{2.0}, {3.5}}, p.bandwidth);
  CHECK(p.value.item() == doctest::Approx(one / 6.0).epsilon(1e-12));
}

TEST_CASE("tau = 0 leaves the reconstruction objective alone") {
  const TabularDataset d = gen_data(40, 3, 1);
  GeneratorObjective obj(make_generator(small_spec(0.0), d, 2), d);
  std::vector<std::size_t> rows(d.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  TrainConfig c;
  const StepLosses l = obj.loss(ParamView(obj.parameters()), {0, 0, rows}, c);
  CHECK(l.total.item() == l.elbo);
  CHECK(l.control == 0.0);
  GeneratorObjective with(make_generator(small_spec(1.0), d, 2), d);
  const StepLosses l1 = with.loss(ParamView(with.parameters()), {0, 0, rows}, c);
  CHECK(l1.elbo == l.elbo);
  CHECK(l1.total.item() == doctest::Approx(l1.elbo + l1.control).epsilon(1e-14));
}

TEST_CASE("generator loss gradients match finite differences") {
  const TabularDataset d = gen_data(12, 3, 4);
  GeneratorObjective obj(make_generator(small_spec(0.0), d, 3), d);
  std::vector<std::size_t> rows(d.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  std::map<std::string, Tensor> params(obj.parameters().begin(), obj.parameters().end());
  TrainConfig c;
  auto recon = [&](const std::map<std::string, Tensor>& p) {
    return obj.loss(ParamView(p), {0, 0, rows}, c).total;
  };
  CHECK(testing::max_gradient_error(params, recon) < 1e-5);
  // The penalty with its bandwidth held fixed (the median heuristic is
  // detached in training, so finite differences would see it move).
  const std::map<std::string, Tensor> codes{{"h", Tensor::matrix(6, 2, {0.1, 0.4, -0.3, 1.2, 0.8, -0.5, 1.5, 0.2, -1.1, 0.3, 0.6, 0.9})}};
  const std::vector<std::size_t> s{0, 1, 2, 0, 1, 2};
  auto penalty = [&](const std::map<std::string, Tensor>& p) {
    return distribution_matching_penalty(p.at("h"), s, 3, 0.9).value;
  };
  CHECK(testing::max_gradient_error(codes, penalty) < 1e-5);
}

TEST_CASE("encoder is blind to S") {
  const TabularDataset d = gen_data(30, 3, 5);
  const GeneratorModel m = make_generator(small_spec(), d, 1);
  std::vector<std::size_t> s = d.s();
  std::rotate(s.begin(), s.begin() + 7, s.end());
  const TabularDataset permuted = make_dataset(d.schema(), d.raw_x(), s, d.raw_y(), d.ids(), d.stats());
  CHECK(encode(m, d).same_values(encode(m, permuted)));
}

TEST_CASE("counterfactual arms") {
  const TabularDataset d = gen_data(25, 3, 6);
  const GeneratorModel m = trained_copy(make_generator(small_spec(), d, 1));
  CHECK_THROWS_AS(generate_counterfactuals(make_generator(small_spec(), d, 1), d), ContractError);
  const CounterfactualSet cf = generate_counterfactuals(m, d, 3);
  CHECK(cf.num_arms() == 3);
  for (const auto& arm : cf.arm_y) CHECK(arm.size() == d.size());
  CHECK(cf.ids == d.ids());

  SUBCASE("identical individuals have identical sets") {
    const TabularDataset twins = d.subset({4, 4});
    const CounterfactualSet t = generate_counterfactuals(m, twins);
    for (std::size_t a = 0; a < 3; ++a) {
      CHECK(t.arm_y[a][0] == t.arm_y[a][1]);
      for (std::size_t j = 0; j < t.num_features(); ++j)
        CHECK(t.arm_x[a][j] == t.arm_x[a][t.num_features() + j]);
    }
  }
  SUBCASE("a decoder that ignores S gives identical arms") {
    ParameterStore p = m.params();
    const Tensor w = p.at("gen.dec.w0");
    std::vector<double> v = w.to_vector();
    for (std::size_t r = m.spec().latent_dim; r < w.rows(); ++r)
      for (std::size_t c = 0; c < w.cols(); ++c) v[r * w.cols() + c] = 0.0;
    p.set("gen.dec.w0", Tensor(w.shape(), v));
    GeneratorModel blind = m;
    blind.set_params(p);
    const CounterfactualSet b = generate_counterfactuals(blind, d);
    for (std::size_t a = 1; a < 3; ++a) {
      CHECK(b.arm_x[a] == b.arm_x[0]);
      CHECK(b.arm_y[a] == b.arm_y[0]);
    }
  }
  SUBCASE("categorical arms are probability vectors") {
    for (std::size_t i = 0; i < cf.size(); ++i) {
      double s = 0.0;
      for (std::size_t k = 1; k < 4; ++k) s += cf.arm_x[1][i * 4 + k];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("counterfactual CSV round-trips exactly") {
  const TabularDataset d = gen_data(10, 3, 7, true);
  const GeneratorModel m = trained_copy(make_generator(small_spec(), d, 1));
  const CounterfactualSet cf = generate_counterfactuals(m, d);
  const fs::path path = fs::temp_directory_path() / "cftk_cf_roundtrip.csv";
  cf.save(path);
  const CounterfactualSet back = load_counterfactuals(path, d.schema());
  CHECK(back.ids == cf.ids);
  CHECK(back.factual_s == cf.factual_s);
  CHECK(back.arm_x == cf.arm_x);
  CHECK(back.arm_y == cf.arm_y);
  const std::vector<std::size_t> pick{105, 101};
  const CounterfactualSet sub = cf.select(pick);
  CHECK(sub.ids == pick);
  CHECK(sub.arm_y[2][0] == cf.arm_y[2][5]);
  const std::vector<std::size_t> missing{999};
  CHECK_THROWS_AS(cf.select(missing), ContractError);
  const TabularDataset arm = cf.arm_dataset(2, d.stats());
  for (std::size_t s : arm.s()) CHECK(s == 2);
}

TEST_CASE("synthesis") {
  const TabularDataset d = gen_data(300, 3, 8);
  const GeneratorModel m = trained_copy(make_generator(small_spec(), d, 2));
  CHECK_THROWS_AS(synthesize_dataset(m, 0, 1), ContractError);
  const SyntheticData big = synthesize_dataset(m, 50000, 4);
  std::vector<double> freq(3, 0.0);
  for (std::size_t s : big.data.s()) freq[s] += 1.0 / 50000.0;
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(freq[k] - m.s_frequencies()[k]) <= 0.02);
  CHECK(big.counterfactuals.size() == 50000);
  CHECK(big.counterfactuals.num_arms() == 3);

  const SyntheticData a = synthesize_dataset(m, 200, 9);
  const SyntheticData b = synthesize_dataset(m, 200, 9);
  const SyntheticData c = synthesize_dataset(m, 200, 10);
  CHECK(a.data.raw_x() == b.data.raw_x());
  CHECK(a.counterfactuals.arm_y == b.counterfactuals.arm_y);
  CHECK(a.data.raw_x() != c.data.raw_x());
  // Factual categorical cells are sampled one-hot rows.
  const auto raw = a.data.raw_x();
  for (std::size_t i = 0; i < 200; ++i) CHECK(raw[i * 4 + 1] + raw[i * 4 + 2] + raw[i * 4 + 3] == 1.0);
}

TEST_CASE("distribution matching lowers the latent MMD") {
  const TabularDataset d = gen_data(400, 3, 11);
  TrainConfig c;
  c.epochs = 150;
  c.seed = 3;
  std::vector<double> mmd;
  for (double tau : {0.0, 1.0}) {
    std::vector<std::string> warnings;
    const auto old = set_warning_sink([&](const std::string& w) { warnings.push_back(w); });
    const GeneratorTraining g = train_generator(d, small_spec(tau), c);
    set_warning_sink(old);
    CHECK(warnings.empty());
    CHECK(g.model.trained());
    CHECK(g.log.to_csv().find(tau == 0.0 ? "# tau=0\n" : "# tau=1\n") != std::string::npos);
    mmd.push_back(latent_mmd(encode(g.model, d), d.s(), 3));
  }
  CHECK(mmd[1] < mmd[0]);
}
