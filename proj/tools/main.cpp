// cftk: command-line harness for the experiment pipeline.
//
// Exit codes: 0 success, 1 at least one seed failed, 2 input error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cftk/error.hpp"
#include "cftk/experiment.hpp"
#include "cftk/io.hpp"
#include "cftk/log.hpp"
#include "cftk/simulate.hpp"

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::string preset = "desk";
  std::string dataset = "law";
  std::string seeds;
  std::string gamma;
  std::optional<std::uint64_t> epochs;
  std::string out;
  std::size_t rows = 0;  // simulate only
};

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      if constexpr (std::is_same_v<T, double>) out.push_back(std::stod(item, &used));
      else out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw cftk::ContractError(std::string(flag) + ": cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw cftk::ContractError(std::string(flag) + ": empty list");
  return out;
}

cftk::ExperimentConfig build_config(const Options& o, bool gamma_is_grid) {
  cftk::ExperimentConfig c = o.config.empty() ? cftk::preset_config(o.preset, o.dataset)
                                              : cftk::load_experiment_config(o.config);
  if (!o.seeds.empty()) c.seeds = parse_list<std::uint64_t>(o.seeds, "--seed");
  if (!o.gamma.empty()) {
    const auto g = parse_list<double>(o.gamma, "--gamma");
    if (gamma_is_grid) {
      c.gamma_grid = g;
    } else {
      if (g.size() != 1) throw cftk::ContractError("--gamma takes a single value for this command");
      c.gamma = g.front();
    }
  }
  if (o.epochs) {
    c.epochs = *o.epochs;
    c.generator_epochs = *o.epochs;
  }
  if (!o.out.empty()) c.out = o.out;
  return c;
}

void print_status(const cftk::VerbStatus& s) {
  for (const auto& f : s.failed) std::cerr << "seed " << f.seed << " failed: " << f.error << '\n';
}

int run_verb(const std::string& verb, const Options& o) {
  if (verb == "simulate") {
    const cftk::Schema schema = cftk::simulator_schema(o.dataset);
    const std::size_t rows = o.rows ? o.rows : cftk::preset_config(o.preset, o.dataset).source_rows;
    const std::uint64_t seed = o.seeds.empty() ? 0 : parse_list<std::uint64_t>(o.seeds, "--seed").front();
    const fs::path out = o.out.empty() ? fs::path("runs") / (o.dataset + "-source") : fs::path(o.out);
    cftk::save_csv(cftk::simulate(o.dataset, rows, seed), out / (o.dataset + ".csv"));
    cftk::write_atomic(out / (o.dataset + ".schema.json"), cftk::to_json(schema).dump(2) + "\n");
    std::cout << "wrote " << rows << " rows to " << (out / (o.dataset + ".csv")).string() << '\n';
    return 0;
  }
  if (verb == "report") {
    const fs::path root = o.out.empty() ? build_config(o, false).out : fs::path(o.out);
    std::cout << cftk::cmd_report(root);
    return 0;
  }

  cftk::Experiment ex(build_config(o, verb == "ablate-gamma"));
  const auto& c = ex.config();
  std::cout << "config " << ex.hash() << " -> " << c.out.string() << '\n';
  int code = 0;
  if (verb == "prepare") {
    const auto r = cftk::cmd_prepare(ex);
    std::cout << "source rows: " << r.source_rows << " (dropped " << r.rows_dropped << ")\n";
    print_status(r.status);
    code = r.status.exit_code();
  } else if (verb == "train-generator") {
    const auto r = cftk::cmd_train_generator(ex);
    for (const auto& [seed, log] : r.logs)
      std::cout << "seed " << seed << ": final total " << log.entries.back().total << '\n';
    print_status(r.status);
    code = r.status.exit_code();
  } else if (verb == "synthesize") {
    const auto r = cftk::cmd_synthesize(ex);
    for (const auto& [seed, n] : r.rows)
      std::cout << "seed " << seed << ": " << n << " rows, " << r.arms.at(seed) << " counterfactual records\n";
    print_status(r.status);
    code = r.status.exit_code();
  } else if (verb == "run") {
    const auto r = cftk::cmd_run(ex);
    std::cout << r.table;
    print_status(r.status);
    code = r.status.exit_code();
  } else if (verb == "ablate-gamma") {
    const auto r = cftk::cmd_ablate_gamma(ex, c.gamma_grid);
    std::cout << r.table;
    for (const auto& v : r.verdicts)
      std::cout << "gamma vs " << v.metric << ": spearman " << v.rho << ", " << v.inversions << " inversion(s), "
                << v.verdict << '\n';
    print_status(r.status);
    code = r.status.exit_code();
  } else if (verb == "ablate-control") {
    const auto r = cftk::cmd_ablate_control(ex);
    std::cout << r.table;
    print_status(r.status);
    code = r.status.exit_code();
  } else if (verb == "bounds") {
    std::cout << cftk::bounds_csv(cftk::cmd_bounds(ex));
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  cftk::tune_allocator();
  CLI::App app{"Counterfactual fairness toolkit"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<std::string, std::string>> verbs{
      {"simulate", "Write a simulated source dataset and its schema"},
      {"prepare", "Load or simulate the source data and write seeded splits"},
      {"train-generator", "Train the counterfactual generator per seed"},
      {"synthesize", "Synthesize data with ground-truth counterfactuals per seed"},
      {"run", "Fit all predictors and emit the comparison table"},
      {"ablate-gamma", "EXOC over a gamma grid with trend verdicts"},
      {"ablate-control", "EXOC with the control node versus the prediction in the control loss"},
      {"bounds", "Analytic bound table with Monte Carlo coverage"},
      {"report", "Rebuild the comparison table from per-seed metrics"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : verbs) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", o.config, "Experiment config (JSON)");
    s->add_option("--preset", o.preset, "Preset when no config is given")->check(CLI::IsMember({"desk", "paper"}));
    s->add_option("--dataset", o.dataset, "Dataset for presets and simulate")->check(CLI::IsMember({"law", "adult"}));
    s->add_option("--seed", o.seeds, "Seed list, comma separated");
    s->add_option("--gamma", o.gamma, "Gamma (a comma separated grid for ablate-gamma)");
    s->add_option("--epochs", o.epochs, "Training epochs for models and generator");
    s->add_option("--out", o.out, "Output directory");
    if (name == "simulate") s->add_option("--rows", o.rows, "Rows to simulate");
    subs.push_back(s);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  std::string verb;
  for (CLI::App* s : subs)
    if (s->parsed()) verb = s->get_name();
  try {
    return run_verb(verb, o);
  } catch (const cftk::LoadError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const cftk::ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
