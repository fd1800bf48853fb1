#include "doctest.h"

#include <cmath>

#include "cftk/error.hpp"
#include "cftk/optim.hpp"

using namespace cftk;

TEST_CASE("zero gradient leaves parameters unchanged") {
  ParameterStore p;
  p.add("w", Tensor::vector({0.5, -1.0}));
  AdamState s;
  s.first_moment["w"] = {0.2, -0.4};
  s.second_moment["w"] = {0.01, 0.04};
  s.step = 3;
  const ParameterStore before = p;
  adam_step(p, {{"w", Tensor::zeros({2})}}, s);
  // Moments decay; the update is non-zero only through the stored moments.
  CHECK(s.first_moment["w"][0] == doctest::Approx(0.9 * 0.2));
  CHECK(s.second_moment["w"][1] == doctest::Approx(0.999 * 0.04));

  ParameterStore fresh;
  fresh.add("w", Tensor::vector({0.5, -1.0}));
  AdamState zero;
  adam_step(fresh, {{"w", Tensor::zeros({2})}}, zero);
  CHECK(fresh.same_values(before));
}

TEST_CASE("first Adam step moves by the step size") {
  // m1 = 0.1, v1 = 0.001; corrected m = 1, v = 1; update = 1e-3 / (1 + 1e-8).
  ParameterStore p;
  p.add("x", Tensor::scalar(2.0));
  AdamState s;
  adam_step(p, {{"x", Tensor::scalar(1.0)}}, s);
  CHECK(p.at("x").item() == doctest::Approx(2.0 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-14));
  CHECK(s.step == 1);
}

TEST_CASE("missing gradient names the parameter") {
  ParameterStore p;
  p.add("decoder.w", Tensor::scalar(1.0));
  AdamState s;
  try {
    adam_step(p, {}, s);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("decoder.w") != std::string::npos);
  }
}

TEST_CASE("Adam is deterministic over 100 steps") {
  auto run = [] {
    ParameterStore p;
    p.add("a", Tensor::vector({1.0, -2.0, 0.5}));
    AdamState s;
    for (int step = 0; step < 100; ++step) {
      const auto v = p.at("a").to_vector();
      std::vector<double> g(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) g[i] = 2.0 * v[i] + std::sin(step + 1.0 * i);
      adam_step(p, {{"a", Tensor::vector(g)}}, s);
    }
    return p;
  };
  CHECK(run().same_values(run()));
}

TEST_CASE("parameter store serialisation is exact") {
  ParameterStore p;
  p.add("w", Tensor::matrix(2, 2, {0.1, 1.0 / 3.0, -2.0e-300, 123456.789012345678}));
  p.add("b", Tensor::vector({std::nextafter(1.0, 2.0)}));
  const auto text = to_json(p).dump();
  const ParameterStore q = parameters_from_json(nlohmann::json::parse(text));
  CHECK(q.same_values(p));
  CHECK_THROWS_AS(p.add("w", Tensor::scalar(0.0)), ContractError);
}
