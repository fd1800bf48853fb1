#include "cftk/simulate.hpp"

#include <array>
#include <cmath>

#include "cftk/error.hpp"
#include "cftk/rng.hpp"

namespace cftk {
namespace {

Schema parse(const nlohmann::json& j) { return schema_from_json(j); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Race from the exogenous factor: base log-odds shifted by slope * a.
std::size_t draw_race(const CounterRng& rng, std::size_t i, double a, std::span<const double> base,
                      std::span<const double> slope) {
  std::vector<double> cum(base.size());
  double acc = 0.0;
  for (std::size_t r = 0; r < base.size(); ++r) {
    acc += std::exp(std::log(base[r]) + slope[r] * a);
    cum[r] = acc;
  }
  return rng.categorical(cum, 9, 0, i);
}

}  // namespace

Schema law_schema() {
  return parse({{"name", "law"},
                {"standardize_target", true},
                {"columns",
                 {{{"name", "race"}, {"kind", "sensitive"}, {"categories", {"White", "Black", "Asian"}}},
                  {{"name", "UGPA"}, {"kind", "continuous"}},
                  {{"name", "LSAT"}, {"kind", "continuous"}},
                  {{"name", "ZFYA"}, {"kind", "continuous-target"}}}}});
}

Schema adult_schema() {
  return parse({{"name", "adult"},
                {"standardize_target", false},
                {"columns",
                 {{{"name", "race"},
                   {"kind", "sensitive"},
                   {"categories", {"White", "Black", "Asian-Pac-Islander"}}},
                  {{"name", "age"}, {"kind", "continuous"}},
                  {{"name", "education_num"}, {"kind", "continuous"}},
                  {{"name", "hours_per_week"}, {"kind", "continuous"}},
                  {{"name", "workclass"}, {"kind", "categorical"}, {"categories", {"Gov", "Private", "Self-emp"}}},
                  {{"name", "marital_status"}, {"kind", "categorical"}, {"categories", {"Married", "Not-married"}}},
                  {{"name", "income"}, {"kind", "binary-target"}, {"positive", {">50K"}}, {"negative", {"<=50K"}}}}}});
}

TabularDataset simulate_law(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("simulate_law: n must be positive");
  const CounterRng rng(seed, streams::kSimulation);
  constexpr std::array<double, 3> base{0.86, 0.065, 0.075};
  constexpr std::array<double, 3> slope{0.0, 1.2, -0.4};
  constexpr std::array<double, 3> gpa{0.0, -0.25, -0.05};
  constexpr std::array<double, 3> lsat{0.0, -6.0, -1.5};
  constexpr std::array<double, 3> fya{0.0, -0.45, -0.1};
  std::vector<double> x, y;
  std::vector<std::size_t> s, ids;
  x.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.normal(0, 0, i), k = rng.normal(1, 0, i);
    const std::size_t r = draw_race(rng, i, a, base, slope);
    x.push_back(3.1 + 0.3 * k + gpa[r] + 0.15 * rng.normal(2, 0, i));
    x.push_back(36.0 + 4.5 * k + lsat[r] + 2.5 * rng.normal(3, 0, i));
    y.push_back(0.8 * k + fya[r] - 0.3 * a + 0.5 * rng.normal(4, 0, i));
    s.push_back(r);
    ids.push_back(i);
  }
  return make_dataset(law_schema(), std::move(x), std::move(s), std::move(y), std::move(ids));
}

TabularDataset simulate_adult(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("simulate_adult: n must be positive");
  const CounterRng rng(seed, streams::kSimulation);
  constexpr std::array<double, 3> base{0.88, 0.09, 0.03};
  constexpr std::array<double, 3> slope{0.0, 1.0, -0.5};
  constexpr std::array<double, 3> edu{0.0, -1.2, 0.6};
  constexpr std::array<double, 3> hours{0.0, -2.5, 0.5};
  constexpr std::array<double, 3> married{0.0, -0.9, 0.2};
  constexpr std::array<double, 3> inc{0.0, -0.7, 0.1};
  std::vector<double> x, y;
  std::vector<std::size_t> s, ids;
  x.reserve(8 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.normal(0, 0, i), k = rng.normal(1, 0, i);
    const std::size_t r = draw_race(rng, i, a, base, slope);
    const double age = 38.0 + 12.0 * rng.normal(2, 0, i);
    const double e = 10.0 + 2.3 * k + edu[r] + 1.2 * rng.normal(3, 0, i);
    const double h = 40.0 + 6.0 * k + hours[r] + 8.0 * rng.normal(4, 0, i);
    const std::array<double, 3> w{std::exp(0.2), std::exp(1.5), std::exp(-0.3 + 0.6 * k)};
    const std::array<double, 3> wc{w[0], w[0] + w[1], w[0] + w[1] + w[2]};
    const std::size_t work = rng.categorical(wc, 5, 0, i);
    const bool wed = rng.uniform(7, 0, i) < sigmoid(0.3 + 0.4 * k + 0.02 * (age - 38.0) + married[r]);
    const double p = sigmoid(-1.1 + 1.6 * k + 0.03 * (age - 38.0) + (wed ? 0.5 : 0.0) + inc[r] - 0.3 * a);
    x.insert(x.end(), {age, e, h, work == 0 ? 1.0 : 0.0, work == 1 ? 1.0 : 0.0, work == 2 ? 1.0 : 0.0,
                       wed ? 1.0 : 0.0, wed ? 0.0 : 1.0});
    y.push_back(rng.uniform(6, 0, i) < p ? 1.0 : 0.0);
    s.push_back(r);
    ids.push_back(i);
  }
  return make_dataset(adult_schema(), std::move(x), std::move(s), std::move(y), std::move(ids));
}

std::vector<std::string> simulator_names() { return {"law", "adult"}; }

Schema simulator_schema(const std::string& name) {
  if (name == "law") return law_schema();
  if (name == "adult") return adult_schema();
  throw ContractError("unknown simulator '" + name + "' (expected law or adult)");
}

TabularDataset simulate(const std::string& name, std::size_t n, std::uint64_t seed) {
  if (name == "law") return simulate_law(n, seed);
  if (name == "adult") return simulate_adult(n, seed);
  throw ContractError("unknown simulator '" + name + "' (expected law or adult)");
}

}  // namespace cftk
