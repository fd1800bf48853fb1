#include "cftk/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "cftk/error.hpp"
#include "cftk/io.hpp"
#include "cftk/log.hpp"
#include "cftk/rng.hpp"
#include "cftk/simulate.hpp"

namespace cftk {
namespace {

namespace fs = std::filesystem;

std::string seed_dir(std::uint64_t seed) { return "seed-" + std::to_string(seed); }

std::string slug(const std::string& method) {
  std::string s;
  for (char c : method) s += c == ' ' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Shortest of %g forms that reads back exactly; keeps gamma labels tidy.
std::string short_num(double v) {
  char buf[32];
  for (int p = 1; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*g", p, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

nlohmann::json split_json(const SplitBundle& b) {
  return {{"seed", b.seed},
          {"ratios", b.ratios},
          {"train", b.train_rows},
          {"validation", b.validation_rows},
          {"test", b.test_rows}};
}

std::string log_key(const std::string& method, std::uint64_t seed) { return slug(method) + "/" + seed_dir(seed); }

}  // namespace

// ---------------------------------------------------------------- config

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ContractError("config: seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ContractError("config: seeds must be distinct");
  if (epochs == 0 || generator_epochs == 0) throw ContractError("config: epochs must be positive");
  if (!(gamma > 0.0)) throw ContractError("config: gamma must be positive");
  for (double g : gamma_grid)
    if (!(g > 0.0)) throw ContractError("config: gamma grid values must be positive");
  if (evaluation != "synthetic" && evaluation != "real")
    throw ContractError("config: evaluation must be 'synthetic' or 'real', got '" + evaluation + "'");
  if (evaluation == "synthetic" && synthetic_rows == 0) throw ContractError("config: synthetic_rows must be positive");
  if (data_path.empty()) {
    simulator_schema(simulator);
    if (source_rows == 0) throw ContractError("config: source_rows must be positive");
  } else if (schema_path.empty()) {
    throw ContractError("config: data_path needs a schema_path");
  }
  for (double r : split)
    if (!(r >= 0.0)) throw ContractError("config: split ratios must be nonnegative");
  if (std::abs(split[0] + split[1] + split[2] - 1.0) > 1e-9) throw ContractError("config: split ratios must sum to 1");
  if (generator_batch_size == 0) throw ContractError("config: generator_batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ContractError("config: learning_rate must be positive");
  if (mmd_report_scale && !(*mmd_report_scale > 0.0)) throw ContractError("config: mmd_report_scale must be positive");
  if (bound_draws < 10000) throw ContractError("config: bound_draws must be at least 10000");
  model.validate();
  if (model.variant != ModelVariant::kExoc) throw ContractError("config: model must be the EXOC variant");
  generator.validate();
}

ExperimentConfig preset_config(const std::string& preset, const std::string& dataset) {
  if (dataset != "law" && dataset != "adult") throw ContractError("unknown dataset '" + dataset + "'");
  ExperimentConfig c;
  c.preset = preset;
  c.dataset = dataset;
  c.simulator = dataset;
  if (preset == "desk") {
    // defaults above
  } else if (preset == "paper") {
    c.source_rows = dataset == "law" ? 20412 : 31979;
    c.synthetic_rows = c.source_rows;
    c.seeds = {1, 2, 3, 4, 5};
    c.epochs = 8000;
    c.generator_epochs = 8000;
    c.gamma_grid = {1.0, 1.2, 1.4, 1.6, 1.8, 2.0};
  } else {
    throw ContractError("unknown preset '" + preset + "' (expected desk or paper)");
  }
  c.out = fs::path("runs") / (dataset + "-" + preset);
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j{{"preset", c.preset},
                   {"dataset", c.dataset},
                   {"data_path", c.data_path.string()},
                   {"schema_path", c.schema_path.string()},
                   {"simulator", c.simulator},
                   {"source_rows", c.source_rows},
                   {"data_seed", c.data_seed},
                   {"evaluation", c.evaluation},
                   {"synthetic_rows", c.synthetic_rows},
                   {"split", c.split},
                   {"seeds", c.seeds},
                   {"epochs", c.epochs},
                   {"generator_epochs", c.generator_epochs},
                   {"generator_batch_size", c.generator_batch_size},
                   {"gamma", c.gamma},
                   {"gamma_grid", c.gamma_grid},
                   {"learning_rate", c.learning_rate},
                   {"generator", to_json(c.generator)},
                   {"model", to_json(c.model)},
                   {"bound_sets", c.bound_sets},
                   {"bound_draws", c.bound_draws},
                   {"out", c.out.string()}};
  j["mmd_report_scale"] = c.mmd_report_scale ? nlohmann::json(*c.mmd_report_scale) : nlohmann::json(nullptr);
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const fs::path& base) {
  if (!j.is_object()) throw LoadError("experiment config must be a JSON object");
  try {
    ExperimentConfig c = preset_config(j.value("preset", "desk"), j.value("dataset", "law"));
    c.simulator = j.value("simulator", c.simulator);
    c.data_path = resolve(j.value("data_path", std::string()), base);
    c.schema_path = resolve(j.value("schema_path", std::string()), base);
    c.source_rows = j.value("source_rows", c.source_rows);
    c.data_seed = j.value("data_seed", c.data_seed);
    c.evaluation = j.value("evaluation", c.evaluation);
    c.synthetic_rows = j.value("synthetic_rows", c.synthetic_rows);
    if (j.contains("split")) c.split = j.at("split").get<std::array<double, 3>>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.epochs = j.value("epochs", c.epochs);
    c.generator_epochs = j.value("generator_epochs", c.generator_epochs);
    c.generator_batch_size = j.value("generator_batch_size", c.generator_batch_size);
    c.gamma = j.value("gamma", c.gamma);
    if (j.contains("gamma_grid")) c.gamma_grid = j.at("gamma_grid").get<std::vector<double>>();
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    if (j.contains("generator")) c.generator = generator_spec_from_json(j.at("generator"));
    if (j.contains("model")) c.model = causal_spec_from_json(j.at("model"));
    if (j.contains("mmd_report_scale") && !j.at("mmd_report_scale").is_null())
      c.mmd_report_scale = j.at("mmd_report_scale").get<double>();
    c.bound_sets = j.value("bound_sets", c.bound_sets);
    c.bound_draws = j.value("bound_draws", c.bound_draws);
    // The output directory stays relative to the working directory.
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("experiment config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  if (!fs::exists(path)) throw LoadError("config file not found: " + path.string());
  return experiment_config_from_json(read_json(path), path.parent_path());
}

std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("out");
  return content_hash(j.dump());
}

// ---------------------------------------------------------------- artifacts

ArtifactStore::ArtifactStore(fs::path root, std::string hash, nlohmann::json config)
    : root_(std::move(root)), hash_(std::move(hash)), config_(std::move(config)) {}

void ArtifactStore::write(const std::string& relative, const std::string& contents, std::optional<std::uint64_t> seed) {
  write_atomic(root_ / relative, contents);
  artifacts_[relative] = content_hash(contents);
  if (seed) by_seed_[*seed].push_back(relative);
}

void ArtifactStore::record(const std::string& relative, std::optional<std::uint64_t> seed) {
  artifacts_[relative] = content_hash(read_file(root_ / relative));
  if (seed) by_seed_[*seed].push_back(relative);
}

void ArtifactStore::seed_status(std::uint64_t seed, const std::string& status, const std::string& error) {
  status_[seed] = {status, error};
}

void ArtifactStore::finalize() const {
  const fs::path path = root_ / "manifest.json";
  nlohmann::json m{{"format", "cftk-manifest/1"},
                   {"toolkit_version", kToolkitVersion},
                   {"config_hash", hash_},
                   {"config", config_},
                   {"artifacts", nlohmann::json::object()},
                   {"seeds", nlohmann::json::object()}};
  if (fs::exists(path)) {
    try {
      const nlohmann::json old = read_json(path);
      if (old.value("config_hash", "") == hash_) {
        m["artifacts"] = old.value("artifacts", nlohmann::json::object());
        m["seeds"] = old.value("seeds", nlohmann::json::object());
      } else {
        warn("replacing manifest written for config " + old.value("config_hash", std::string("?")));
      }
    } catch (const LoadError&) {
      warn("replacing unreadable manifest " + path.string());
    }
  }
  for (const auto& [rel, h] : artifacts_) m["artifacts"][rel] = h;
  for (const auto& [seed, files] : by_seed_) {
    auto& entry = m["seeds"][std::to_string(seed)];
    std::set<std::string> all;
    if (entry.contains("artifacts")) all = entry["artifacts"].get<std::set<std::string>>();
    all.insert(files.begin(), files.end());
    entry["artifacts"] = all;
  }
  for (const auto& [seed, st] : status_) {
    auto& entry = m["seeds"][std::to_string(seed)];
    entry["status"] = st.first;
    if (st.second.empty()) entry.erase("error");
    else entry["error"] = st.second;
  }
  write_atomic(path, m.dump(2) + "\n");
}

std::vector<std::string> verify_manifest(const fs::path& root) {
  std::vector<std::string> problems;
  const nlohmann::json m = read_json(root / "manifest.json");
  for (const auto& [rel, h] : m.at("artifacts").items()) {
    const fs::path p = root / rel;
    if (!fs::exists(p)) {
      problems.push_back("missing: " + rel);
    } else if (content_hash(read_file(p)) != h.get<std::string>()) {
      problems.push_back("hash mismatch: " + rel);
    }
  }
  for (const auto& [seed, entry] : m.at("seeds").items())
    for (const auto& rel : entry.value("artifacts", nlohmann::json::array()))
      if (!m.at("artifacts").contains(rel.get<std::string>()))
        problems.push_back("seed " + seed + " lists unrecorded artifact " + rel.get<std::string>());
  return problems;
}

// ---------------------------------------------------------------- stages

Experiment::Experiment(ExperimentConfig config)
    : config_((config.validate(), std::move(config))),
      hash_(config_hash(config_)),
      store_(config_.out, hash_, to_json(config_)) {}

const TabularDataset& Experiment::source() {
  if (source_) return *source_;
  if (config_.data_path.empty()) {
    source_ = simulate(config_.simulator, config_.source_rows, config_.data_seed);
    save_csv(*source_, store_.root() / "source.csv");
    store_.record("source.csv");
  } else {
    if (!fs::exists(config_.data_path)) throw LoadError("data file not found: " + config_.data_path.string());
    if (!fs::exists(config_.schema_path)) throw LoadError("schema file not found: " + config_.schema_path.string());
    source_ = load_csv(config_.data_path, load_schema(config_.schema_path));
  }
  return *source_;
}

const SplitBundle& Experiment::prepared(std::uint64_t seed) {
  if (auto it = prepared_.find(seed); it != prepared_.end()) return it->second;
  SplitBundle b = split(source(), config_.split, seed);
  store_.write(seed_dir(seed) + "/split.json", split_json(b).dump() + "\n", seed);
  return prepared_.emplace(seed, std::move(b)).first->second;
}

TrainConfig Experiment::train_config(std::uint64_t seed, double gamma) const {
  TrainConfig c;
  c.epochs = config_.epochs;
  c.gamma = gamma;
  c.seed = seed;
  c.adam.step_size = config_.learning_rate;
  return c;
}

const GeneratorTraining& Experiment::generator(std::uint64_t seed) {
  if (auto it = generators_.find(seed); it != generators_.end()) return it->second;
  const TabularDataset& train = prepared(seed).train;
  TrainConfig c = train_config(seed, config_.gamma);
  c.epochs = config_.generator_epochs;
  c.batch_size = std::min(config_.generator_batch_size, train.size());
  const std::string dir = seed_dir(seed);
  c.checkpoint_path = store_.root() / dir / "generator.json";
  GeneratorTraining g = train_generator(train, config_.generator, c);
  store_.record(dir + "/generator.json", seed);
  store_.write(dir + "/generator_log.csv", g.log.to_csv(), seed);
  return generators_.emplace(seed, std::move(g)).first->second;
}

const SyntheticData& Experiment::synthetic(std::uint64_t seed) {
  if (auto it = synthetic_.find(seed); it != synthetic_.end()) return it->second;
  SyntheticData s = synthesize_dataset(generator(seed).model, config_.synthetic_rows, seed);
  const std::string dir = seed_dir(seed);
  save_csv(s.data, store_.root() / dir / "synthetic.csv");
  store_.record(dir + "/synthetic.csv", seed);
  store_.write(dir + "/counterfactuals.csv", s.counterfactuals.to_csv(), seed);
  return synthetic_.emplace(seed, std::move(s)).first->second;
}

const EvaluationData& Experiment::evaluation(std::uint64_t seed) {
  if (auto it = evaluation_.find(seed); it != evaluation_.end()) return it->second;
  EvaluationData e;
  CounterfactualSet cf;
  const std::string dir = seed_dir(seed);
  if (config_.evaluation == "synthetic") {
    const SyntheticData& s = synthetic(seed);
    SplitBundle b = split(s.data, config_.split, seed ^ stable_hash("evaluation-split"));
    store_.write(dir + "/evaluation_split.json", split_json(b).dump() + "\n", seed);
    cf = s.counterfactuals.select(b.test.ids());
    e.train = std::move(b.train);
    e.test = std::move(b.test);
  } else {
    const SplitBundle& b = prepared(seed);
    cf = generate_counterfactuals(generator(seed).model, b.test, seed);
    store_.write(dir + "/test_counterfactuals.csv", cf.to_csv(), seed);
    e.train = b.train;
    e.test = b.test;
  }
  for (std::size_t a = 0; a < cf.num_arms(); ++a) e.arms.push_back(cf.arm_dataset(a, e.test.stats()));
  return evaluation_.emplace(seed, std::move(e)).first->second;
}

MetricsReport Experiment::evaluate(const BaselinePredictor& p, const EvaluationData& e, std::uint64_t seed,
                                   const std::string& method) const {
  MetricsReport r;
  r.dataset = config_.dataset;
  r.method = method;
  r.seed = seed;
  r.config_hash = hash_;
  r.classification = e.test.task() == TaskKind::kClassification;
  const std::vector<double> factual = p.predict(e.test);
  if (r.classification) {
    r.accuracy = accuracy(factual, e.test.y().data());
  } else {
    r.rmse = rmse(factual, e.test.y().data());
    r.mae = mae(factual, e.test.y().data());
  }
  PredictionSet ps;
  ps.scores = r.classification;
  for (const auto& arm : e.arms) ps.arms.push_back(p.predict(arm));
  MmdOptions o;
  o.report_scale = config_.mmd_report_scale;
  r.mmd = pairwise_cf_divergence(ps, DivergenceMetric::kMmd, o);
  r.wass = pairwise_cf_divergence(ps, DivergenceMetric::kWasserstein);
  return r;
}

// ---------------------------------------------------------------- tables

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

std::string format_mean_std(const MeanStd& m) {
  // Values that round to zero print unsigned.
  auto clean = [](double x) { return std::abs(x) < 5e-4 ? 0.0 : x; };
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f±%.3f", clean(m.mean), clean(m.std));
  return buf;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionError("spearman: length mismatch");
  if (x.size() < 2) return 0.0;
  const auto rx = ranks(x), ry = ranks(y);
  const MeanStd mx = mean_std(rx), my = mean_std(ry);
  double cov = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) cov += (rx[i] - mx.mean) * (ry[i] - my.mean);
  if (mx.std == 0.0 || my.std == 0.0) return 0.0;
  return cov / (static_cast<double>(rx.size() - 1) * mx.std * my.std);
}

TrendVerdict trend_verdict(const std::string& metric, const std::vector<double>& x, const std::vector<double>& y) {
  TrendVerdict t;
  t.metric = metric;
  t.rho = spearman(x, y);
  t.verdict = t.rho > 0.0 ? "increasing" : t.rho < 0.0 ? "decreasing" : "no trend";
  if (t.rho != 0.0) {
    std::vector<std::size_t> idx(x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    for (std::size_t i = 1; i < idx.size(); ++i) {
      const double step = y[idx[i]] - y[idx[i - 1]];
      if ((t.rho > 0.0 && step < 0.0) || (t.rho < 0.0 && step > 0.0)) ++t.inversions;
    }
  }
  return t;
}

std::string format_table(const std::vector<MethodRow>& rows, bool classification, const std::string& label) {
  std::ostringstream os;
  os << label << (classification ? ",accuracy,mmd,wass,seeds\n" : ",rmse,mae,mmd,wass,seeds\n");
  for (const auto& row : rows) {
    auto col = [&](auto get) {
      std::vector<double> v;
      for (const auto& r : row.runs) v.push_back(get(r));
      return format_mean_std(mean_std(v));
    };
    os << row.method;
    if (classification) {
      os << ',' << col([](const MetricsReport& r) { return r.accuracy; });
    } else {
      os << ',' << col([](const MetricsReport& r) { return r.rmse; }) << ','
         << col([](const MetricsReport& r) { return r.mae; });
    }
    os << ',' << col([](const MetricsReport& r) { return r.mmd.mean; }) << ','
       << col([](const MetricsReport& r) { return r.wass.mean; }) << ',' << row.runs.size() << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------- verbs

namespace {

// Runs `body` per seed; a failure aborts that seed only.
template <typename F>
VerbStatus for_each_seed(Experiment& ex, const std::string& verb, F body) {
  VerbStatus st;
  for (std::uint64_t seed : ex.config().seeds) {
    try {
      body(seed);
      st.succeeded.push_back(seed);
      ex.store().seed_status(seed, "ok");
    } catch (const std::exception& e) {
      warn(verb + ": seed " + std::to_string(seed) + " failed: " + e.what());
      st.failed.push_back({seed, e.what()});
      ex.store().seed_status(seed, "failed", verb + ": " + e.what());
    }
  }
  ex.store().finalize();
  return st;
}

std::string metrics_csv(const std::vector<MetricsReport>& reports) {
  std::string s = MetricsReport::csv_header() + "\n";
  for (const auto& r : reports) s += r.csv_row() + "\n";
  return s;
}

CausalModelSpec fairk_spec(const CausalModelSpec& exoc) {
  CausalModelSpec s;
  s.variant = ModelVariant::kFairK;
  s.dim_k = exoc.dim_k;
  s.hidden = exoc.hidden;
  return s;
}

// Trains a latent predictor with its checkpoint and log under `dir`.
BaselinePredictor fit_logged(Experiment& ex, const EvaluationData& e, const CausalModelSpec& spec, std::uint64_t seed,
                             double gamma, const std::string& dir, const std::string& name) {
  TrainConfig c = ex.train_config(seed, gamma);
  c.checkpoint_path = ex.store().root() / dir / (name + ".checkpoint.json");
  BaselinePredictor p = fit_latent(e.train, spec, c);
  ex.store().record(dir + "/" + name + ".checkpoint.json", seed);
  ex.store().write(dir + "/" + name + ".log.csv", p.train_log().to_csv(), seed);
  return p;
}

}  // namespace

PrepareResult cmd_prepare(Experiment& ex) {
  PrepareResult r;
  const TabularDataset& src = ex.source();
  r.source_rows = src.size() + src.rows_dropped();
  r.rows_dropped = src.rows_dropped();
  r.status = for_each_seed(ex, "prepare", [&](std::uint64_t seed) { ex.prepared(seed); });
  return r;
}

GeneratorResult cmd_train_generator(Experiment& ex) {
  GeneratorResult r;
  ex.source();
  r.status = for_each_seed(ex, "train-generator", [&](std::uint64_t seed) { r.logs[seed] = ex.generator(seed).log; });
  return r;
}

SynthesizeResult cmd_synthesize(Experiment& ex) {
  SynthesizeResult r;
  ex.source();
  r.status = for_each_seed(ex, "synthesize", [&](std::uint64_t seed) {
    const SyntheticData& s = ex.synthetic(seed);
    r.rows[seed] = s.data.size();
    r.arms[seed] = s.counterfactuals.size() * s.counterfactuals.num_arms();
  });
  return r;
}

RunResult cmd_run(Experiment& ex) {
  RunResult r;
  const std::vector<std::string> methods{"Constant", "Full", "Unaware", "Fair-K", "EXOC"};
  for (const auto& m : methods) r.rows.push_back({m, {}});
  r.classification = ex.source().task() == TaskKind::kClassification;
  r.status = for_each_seed(ex, "run", [&](std::uint64_t seed) {
    const EvaluationData& e = ex.evaluation(seed);
    const std::string dir = seed_dir(seed) + "/models";
    std::vector<BaselinePredictor> fitted;
    fitted.push_back(fit_constant(e.train));
    fitted.push_back(fit_full(e.train));
    fitted.push_back(fit_unaware(e.train));
    fitted.push_back(fit_logged(ex, e, fairk_spec(ex.config().model), seed, ex.config().gamma, dir, "fair-k"));
    fitted.push_back(fit_logged(ex, e, ex.config().model, seed, ex.config().gamma, dir, "exoc"));
    std::vector<MetricsReport> reports;
    nlohmann::json detail = nlohmann::json::array();
    for (std::size_t i = 0; i < methods.size(); ++i) {
      reports.push_back(ex.evaluate(fitted[i], e, seed, methods[i]));
      detail.push_back(to_json(reports.back()));
      ex.store().write(dir + "/" + slug(methods[i]) + ".predictor.json", to_json(fitted[i]).dump() + "\n", seed);
    }
    ex.store().write(seed_dir(seed) + "/metrics.csv", metrics_csv(reports), seed);
    ex.store().write(seed_dir(seed) + "/metrics.json", detail.dump(2) + "\n", seed);
    for (std::size_t i = 0; i < methods.size(); ++i) r.rows[i].runs.push_back(reports[i]);
    r.logs[log_key("Fair-K", seed)] = fitted[3].train_log();
    r.logs[log_key("EXOC", seed)] = fitted[4].train_log();
  });
  r.table = format_table(r.rows, r.classification);
  if (!r.status.succeeded.empty()) {
    ex.store().write("table_" + ex.config().dataset + ".csv", r.table);
    ex.store().finalize();
  }
  return r;
}

GammaAblationResult cmd_ablate_gamma(Experiment& ex, const std::vector<double>& gammas) {
  if (gammas.empty()) throw ContractError("ablate-gamma: empty gamma list");
  for (double g : gammas)
    if (!(g > 0.0)) throw ContractError("ablate-gamma: gamma values must be positive");
  GammaAblationResult r;
  r.gammas = gammas;
  for (double g : gammas) r.rows.push_back({"gamma=" + short_num(g), {}});
  r.classification = ex.source().task() == TaskKind::kClassification;
  std::string runs_csv = "gamma," + MetricsReport::csv_header() + "\n";
  r.status = for_each_seed(ex, "ablate-gamma", [&](std::uint64_t seed) {
    const EvaluationData& e = ex.evaluation(seed);
    const std::string dir = "ablate_gamma/" + seed_dir(seed);
    std::vector<MetricsReport> reports;
    std::map<std::string, TrainLog> logs;
    for (double g : gammas) {
      const std::string name = "gamma-" + short_num(g);
      const BaselinePredictor p = fit_logged(ex, e, ex.config().model, seed, g, dir, name);
      reports.push_back(ex.evaluate(p, e, seed, "EXOC"));
      logs["exoc-" + name + "/" + seed_dir(seed)] = p.train_log();
    }
    for (std::size_t i = 0; i < gammas.size(); ++i) {
      r.rows[i].runs.push_back(reports[i]);
      runs_csv += short_num(gammas[i]) + "," + reports[i].csv_row() + "\n";
    }
    r.logs.insert(logs.begin(), logs.end());
  });
  std::vector<double> mmd, perf;
  for (const auto& row : r.rows) {
    std::vector<double> m, p;
    for (const auto& rep : row.runs) {
      m.push_back(rep.mmd.mean);
      p.push_back(r.classification ? rep.accuracy : rep.rmse);
    }
    mmd.push_back(mean_std(m).mean);
    perf.push_back(mean_std(p).mean);
  }
  r.verdicts.push_back(trend_verdict("mmd", gammas, mmd));
  r.verdicts.push_back(trend_verdict(r.classification ? "accuracy" : "rmse", gammas, perf));
  r.table = format_table(r.rows, r.classification, "gamma");
  if (!r.status.succeeded.empty()) {
    std::string v = "metric,spearman,inversions,verdict\n";
    for (const auto& t : r.verdicts)
      v += t.metric + "," + num(t.rho) + "," + std::to_string(t.inversions) + "," + t.verdict + "\n";
    ex.store().write("ablate_gamma.csv", r.table);
    ex.store().write("ablate_gamma_runs.csv", runs_csv);
    ex.store().write("ablate_gamma_verdicts.csv", v);
    ex.store().finalize();
  }
  return r;
}

ControlAblationResult cmd_ablate_control(Experiment& ex) {
  ControlAblationResult r;
  r.classification = ex.source().task() == TaskKind::kClassification;
  const std::vector<std::pair<std::string, ControlTarget>> variants{{"S''", ControlTarget::kControlNode},
                                                                    {"Y-hat", ControlTarget::kPrediction}};
  for (const auto& v : variants) r.rows.push_back({v.first, {}});
  r.status = for_each_seed(ex, "ablate-control", [&](std::uint64_t seed) {
    const EvaluationData& e = ex.evaluation(seed);
    const std::string dir = "ablate_control/" + seed_dir(seed);
    std::vector<ControlRun> runs;
    for (const auto& [label, target] : variants) {
      CausalModelSpec spec = ex.config().model;
      spec.control_target = target;
      const std::string name = target == ControlTarget::kControlNode ? "control-node" : "prediction";
      const BaselinePredictor p = fit_logged(ex, e, spec, seed, ex.config().gamma, dir, name);
      ControlRun run;
      run.seed = seed;
      run.variant = label;
      run.epoch0_total = p.train_log().entries.front().total;
      run.epoch0_elbo = p.train_log().entries.front().elbo;
      run.report = ex.evaluate(p, e, seed, "EXOC " + label);
      r.logs[name + "/" + seed_dir(seed)] = p.train_log();
      runs.push_back(run);
    }
    for (std::size_t i = 0; i < runs.size(); ++i) r.rows[i].runs.push_back(runs[i].report);
    r.runs.insert(r.runs.end(), runs.begin(), runs.end());
  });
  r.table = format_table(r.rows, r.classification, "control_target");
  if (!r.status.succeeded.empty()) {
    std::string runs_csv = "variant,epoch0_total,epoch0_elbo," + MetricsReport::csv_header() + "\n";
    for (const auto& run : r.runs)
      runs_csv += run.variant + "," + num(run.epoch0_total) + "," + num(run.epoch0_elbo) + "," +
                  run.report.csv_row() + "\n";
    ex.store().write("ablate_control.csv", r.table);
    ex.store().write("ablate_control_runs.csv", runs_csv);
    ex.store().finalize();
  }
  return r;
}

bounds::LinearCaseParams random_bound_params(std::uint64_t seed, std::uint64_t index) {
  const CounterRng rng(seed, streams::kMonteCarlo);
  auto u = [&](std::uint64_t k, double lo, double hi) { return lo + (hi - lo) * rng.uniform(1000 + index, 0, k); };
  bounds::LinearCaseParams p;
  p.alpha = u(0, -3.0, 3.0);
  p.beta = u(1, -3.0, 3.0);
  p.sigma_k = u(2, 0.2, 2.0);
  p.aux_alpha = u(3, -3.0, 3.0);
  p.aux_beta = u(4, -3.0, 3.0);
  p.aux_sigma_k = u(5, 0.2, 2.0);
  p.aux_sigma_s = u(6, 0.2, 2.0);
  p.s = 0.0;
  p.s_star = u(7, 0.0, 1.0) < 0.5 ? 1.0 : 2.0;
  return p;
}

std::vector<BoundRow> cmd_bounds(Experiment& ex) {
  const auto& c = ex.config();
  std::vector<std::pair<std::string, bounds::LinearCaseParams>> sets;
  sets.push_back({"unit", {}});
  bounds::LinearCaseParams parity;
  parity.alpha = 10.0;
  sets.push_back({"large-parity", parity});
  const std::uint64_t seed = c.seeds.front();
  for (std::size_t i = 0; i < c.bound_sets; ++i)
    sets.push_back({"random-" + std::to_string(i), random_bound_params(seed, i)});
  std::vector<BoundRow> rows;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    BoundRow b;
    b.label = sets[i].first;
    b.params = sets[i].second;
    b.delta_a = bounds::delta_a(b.params);
    b.delta_b = bounds::delta_b(b.params);
    b.fairk_looser = bounds::fairk_bound_looser(b.params);
    b.coverage_a = bounds::monte_carlo_coverage(b.params, bounds::Variant::kFairK, c.bound_draws, seed + i);
    b.coverage_b = bounds::monte_carlo_coverage(b.params, bounds::Variant::kAuxiliary, c.bound_draws, seed + i);
    rows.push_back(b);
  }
  ex.store().write("bounds.csv", bounds_csv(rows));
  ex.store().finalize();
  return rows;
}

std::string bounds_csv(const std::vector<BoundRow>& rows) {
  std::ostringstream os;
  os << "label,alpha,beta,sigma_k,aux_alpha,aux_beta,aux_sigma_k,aux_sigma_s,s,s_star,delta_a,delta_b,"
        "fairk_looser,coverage_a,coverage_b\n";
  for (const auto& b : rows) {
    const auto& p = b.params;
    os << b.label;
    for (double v : {p.alpha, p.beta, p.sigma_k, p.aux_alpha, p.aux_beta, p.aux_sigma_k, p.aux_sigma_s, p.s,
                      p.s_star, b.delta_a, b.delta_b})
      os << ',' << num(v);
    os << ',' << (b.fairk_looser ? "true" : "false") << ',' << num(b.coverage_a) << ',' << num(b.coverage_b) << '\n';
  }
  return os.str();
}

std::string cmd_report(const fs::path& root) {
  if (!fs::is_directory(root)) throw LoadError("output directory not found: " + root.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && entry.path().filename().string().rfind("seed-", 0) == 0 &&
        fs::exists(entry.path() / "metrics.csv"))
      files.push_back(entry.path() / "metrics.csv");
  if (files.empty()) throw LoadError("no seed-*/metrics.csv under " + root.string());
  std::sort(files.begin(), files.end());
  std::vector<MethodRow> rows;
  std::string dataset;
  bool classification = false;
  for (const auto& f : files) {
    std::istringstream in(read_file(f));
    std::string line;
    std::getline(in, line);
    if (line != MetricsReport::csv_header()) throw LoadError("unexpected header in " + f.string());
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_csv_line(line);
      if (cells.size() != 10) throw LoadError("malformed row in " + f.string() + ": " + line);
      MetricsReport r;
      try {
        r.dataset = cells[0];
        r.method = cells[1];
        r.seed = std::stoull(cells[2]);
        r.config_hash = cells[3];
        r.classification = cells[4] == "classification";
        r.rmse = std::stod(cells[5]);
        r.mae = std::stod(cells[6]);
        r.accuracy = std::stod(cells[7]);
        r.mmd.mean = std::stod(cells[8]);
        r.wass.mean = std::stod(cells[9]);
      } catch (const std::exception&) {
        throw LoadError("malformed row in " + f.string() + ": " + line);
      }
      dataset = r.dataset;
      classification = r.classification;
      auto it = std::find_if(rows.begin(), rows.end(), [&](const MethodRow& m) { return m.method == r.method; });
      if (it == rows.end()) rows.push_back({r.method, {r}});
      else it->runs.push_back(r);
    }
  }
  const std::string table = format_table(rows, classification);
  const std::string rel = "table_" + dataset + ".csv";
  write_atomic(root / rel, table);
  if (fs::exists(root / "manifest.json")) {
    nlohmann::json m = read_json(root / "manifest.json");
    m["artifacts"][rel] = content_hash(table);
    write_atomic(root / "manifest.json", m.dump(2) + "\n");
  }
  return table;
}

}  // namespace cftk
