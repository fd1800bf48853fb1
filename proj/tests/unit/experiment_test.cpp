#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cftk/error.hpp"
#include "cftk/experiment.hpp"
#include "cftk/io.hpp"
#include "cftk/simulate.hpp"

namespace fs = std::filesystem;
using namespace cftk;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cftk_experiment_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig tiny(const fs::path& out) {
  ExperimentConfig c = preset_config("desk", "law");
  c.source_rows = 400;
  c.synthetic_rows = 300;
  c.seeds = {7};
  c.epochs = 3;
  c.generator_epochs = 3;
  c.out = out;
  return c;
}

std::size_t data_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++n;
  return n - 1;  // header
}

}  // namespace

TEST_CASE("spearman matches hand-ranked values") {
  CHECK(spearman({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3}, {10, 20, 30}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3}, {5, 5, 5}) == 0.0);
  CHECK(spearman({1}, {2}) == 0.0);
  // y ranks with a tie: 1.5, 1.5, 3, 4 against 1, 2, 3, 4.
  // Pearson on ranks: sxy = 4.5, sxx = 5, syy = 4.5.
  CHECK(spearman({1, 2, 3, 4}, {1, 1, 2, 3}) == doctest::Approx(4.5 / std::sqrt(5.0 * 4.5)));
  // rho = 1 - 6 * sum(d^2) / (n (n^2 - 1)) with d = (1, -1, 0): 1 - 12/24.
  CHECK(spearman({1, 2, 3}, {2, 1, 3}) == doctest::Approx(0.5));
}

TEST_CASE("trend verdicts and inversions") {
  const auto single = trend_verdict("mmd", {1.0}, {0.3});
  CHECK(single.verdict == "no trend");
  CHECK(single.inversions == 0);
  const auto down = trend_verdict("mmd", {1.0, 1.4, 1.8}, {3.0, 1.0, 2.0});
  CHECK(down.rho == doctest::Approx(-0.5));
  CHECK(down.verdict == "decreasing");
  CHECK(down.inversions == 1);
  // x given out of order: inversions follow x.
  const auto up = trend_verdict("rmse", {1.8, 1.0, 1.4}, {3.0, 1.0, 2.0});
  CHECK(up.verdict == "increasing");
  CHECK(up.inversions == 0);
}

TEST_CASE("mean and sample std formatting") {
  const MeanStd m = mean_std({1.0, 2.0, 3.0});
  CHECK(m.mean == doctest::Approx(2.0));
  CHECK(m.std == doctest::Approx(1.0));
  CHECK(mean_std({4.0}).std == 0.0);
  CHECK(format_mean_std({0.1234, 0.0041}) == "0.123±0.004");
  CHECK(format_mean_std({-0.0001, 0.0}) == "0.000±0.000");
  CHECK(format_mean_std({2.0, 1.0}) == "2.000±1.000");
}

TEST_CASE("config presets, JSON round trip and hash") {
  const auto desk = preset_config("desk", "law");
  CHECK(desk.synthetic_rows == 2000);
  CHECK(desk.epochs == 500);
  CHECK(desk.seeds.size() == 3);
  const auto paper = preset_config("paper", "law");
  CHECK(paper.source_rows == 20412);
  CHECK(paper.epochs == 8000);
  CHECK(paper.seeds.size() == 5);
  CHECK(paper.gamma_grid.size() == 6);
  CHECK(preset_config("paper", "adult").source_rows == 31979);
  CHECK_THROWS_AS(preset_config("huge", "law"), ContractError);
  CHECK_THROWS_AS(preset_config("desk", "credit"), ContractError);

  ExperimentConfig c = desk;
  c.gamma = 1.7;
  c.seeds = {4, 9};
  c.generator.tau = 0.5;
  c.mmd_report_scale = 1.0;
  const auto back = experiment_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(config_hash(back) == config_hash(c));

  ExperimentConfig moved = c;
  moved.out = "elsewhere";
  CHECK(config_hash(moved) == config_hash(c));
  moved.gamma = 1.8;
  CHECK(config_hash(moved) != config_hash(c));

  ExperimentConfig bad = desk;
  bad.split = {0.5, 0.1, 0.1};
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("config files load relative to their directory") {
  const fs::path dir = scratch("config");
  fs::create_directories(dir / "data");
  write_atomic(dir / "c.json", R"({"preset": "desk", "data_path": "data/x.csv", "schema_path": "data/x.json", "epochs": 7})");
  const auto c = load_experiment_config(dir / "c.json");
  CHECK(c.epochs == 7);
  CHECK(c.generator_epochs == 500);
  CHECK(c.data_path == dir / "data/x.csv");
  CHECK(c.schema_path == dir / "data/x.json");

  try {
    load_experiment_config(dir / "missing.json");
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("missing.json") != std::string::npos);
  }
}

TEST_CASE("shipped configs and schemas agree with the built-in ones") {
  const fs::path src = CFTK_SOURCE_DIR;
  for (const std::string ds : {"law", "adult"}) {
    CHECK(to_json(load_schema(src / "schemas" / (ds + ".json"))) == to_json(simulator_schema(ds)));
    for (const std::string preset : {"desk", "paper"}) {
      const auto c = load_experiment_config(src / "configs" / (ds + "-" + preset + ".json"));
      CHECK(config_hash(c) == config_hash(preset_config(preset, ds)));
    }
  }
}

TEST_CASE("missing source CSV names the path") {
  ExperimentConfig c = tiny(scratch("missing"));
  c.data_path = "/nonexistent/law.csv";
  c.schema_path = fs::path(CFTK_SOURCE_DIR) / "schemas" / "law.json";
  Experiment ex(c);
  try {
    cmd_prepare(ex);
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/law.csv") != std::string::npos);
  }
}

TEST_CASE("prepare is deterministic and the manifest verifies") {
  const fs::path a = scratch("prep_a"), b = scratch("prep_b");
  {
    Experiment ex(tiny(a));
    const auto r = cmd_prepare(ex);
    CHECK(r.status.exit_code() == 0);
    CHECK(r.source_rows == 400);
  }
  {
    Experiment ex(tiny(b));
    cmd_prepare(ex);
  }
  CHECK(read_file(a / "seed-7" / "split.json") == read_file(b / "seed-7" / "split.json"));
  CHECK(read_file(a / "source.csv") == read_file(b / "source.csv"));
  CHECK(verify_manifest(a).empty());

  std::ofstream(a / "source.csv", std::ios::app) << "tampered\n";
  const auto problems = verify_manifest(a);
  REQUIRE(problems.size() == 1);
  CHECK(problems.front().find("source.csv") != std::string::npos);
}

TEST_CASE("synthesize writes n rows and n times |S| arm records") {
  const fs::path out = scratch("synth");
  Experiment ex(tiny(out));
  const auto r = cmd_synthesize(ex);
  CHECK(r.status.exit_code() == 0);
  CHECK(r.rows.at(7) == 300);
  CHECK(r.arms.at(7) == 900);
  CHECK(data_lines(out / "seed-7" / "synthetic.csv") == 300);
  CHECK(data_lines(out / "seed-7" / "counterfactuals.csv") == 900);
  CHECK(verify_manifest(out).empty());
}

TEST_CASE("two seeds give distinct synthetic data, both in the manifest") {
  const fs::path out = scratch("two_seeds");
  ExperimentConfig c = tiny(out);
  c.seeds = {1, 2};
  Experiment ex(c);
  cmd_synthesize(ex);
  CHECK(read_file(out / "seed-1" / "synthetic.csv") != read_file(out / "seed-2" / "synthetic.csv"));
  const auto m = read_json(out / "manifest.json");
  CHECK(m.at("artifacts").contains("seed-1/synthetic.csv"));
  CHECK(m.at("artifacts").contains("seed-2/synthetic.csv"));
}

TEST_CASE("tau override reaches the generator log header") {
  const fs::path out = scratch("tau");
  ExperimentConfig c = tiny(out);
  c.generator.tau = 0.25;
  Experiment ex(c);
  cmd_train_generator(ex);
  CHECK(read_file(out / "seed-7" / "generator_log.csv").find("tau=0.25") != std::string::npos);
}

TEST_CASE("run emits five rows, constant fairness is zero, report rebuilds the table") {
  const fs::path out = scratch("run");
  Experiment ex(tiny(out));
  const auto r = cmd_run(ex);
  CHECK(r.status.exit_code() == 0);
  REQUIRE(r.rows.size() == 5);
  CHECK(r.rows[0].method == "Constant");
  CHECK(r.rows[0].runs.at(0).mmd.mean == 0.0);
  CHECK(r.rows[0].runs.at(0).wass.mean == 0.0);

  std::istringstream table(r.table);
  std::string line;
  std::getline(table, line);
  CHECK(line == "method,rmse,mae,mmd,wass,seeds");
  std::getline(table, line);
  CHECK(line.rfind("Constant,", 0) == 0);
  CHECK(line.find(",0.000±0.000,0.000±0.000,") != std::string::npos);

  CHECK(read_file(out / "table_law.csv") == r.table);
  CHECK(cmd_report(out) == r.table);
  CHECK(verify_manifest(out).empty());
}

TEST_CASE("bound rows use seeded random parameters") {
  ExperimentConfig c = tiny(scratch("bounds"));
  c.bound_sets = 2;
  c.bound_draws = 10000;
  Experiment ex(c);
  const auto rows = cmd_bounds(ex);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].label == "unit");
  CHECK(rows[0].delta_a == doctest::Approx(1.0 + 3.0 * std::sqrt(2.0)));
  CHECK(rows[0].delta_b == doctest::Approx(6.0));
  const auto p = random_bound_params(3, 1), q = random_bound_params(3, 1);
  CHECK(p.alpha == q.alpha);
  CHECK(p.s != p.s_star);
}
