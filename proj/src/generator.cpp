#include "cftk/generator.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "cftk/error.hpp"
#include "cftk/io.hpp"
#include "cftk/log.hpp"
#include "cftk/metrics.hpp"
#include "cftk/rng.hpp"

namespace cftk {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json stats_json(const Standardization& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"target_mean", s.target_mean}, {"target_std", s.target_std}};
}

Standardization stats_from_json(const nlohmann::json& j) {
  Standardization s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  s.target_mean = j.at("target_mean").get<double>();
  s.target_std = j.at("target_std").get<double>();
  return s;
}

Tensor onehot_rows(std::size_t n, std::size_t width, std::size_t hot) {
  std::vector<double> v(n * width, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * width + hot] = 1.0;
  return Tensor::matrix(n, width, std::move(v));
}

Tensor encoder_input(const Tensor& x, const Tensor& y) { return concat_cols({x, y}); }

struct Decoded {
  Tensor x_out;  // n x d head parameters
  Tensor y_out;  // n x 1
};

Decoded decode(const GeneratorModel& m, const ParamView& p, const Tensor& h, const Tensor& s_onehot) {
  const Tensor out = mlp(p, "gen.dec", concat_cols({h, s_onehot}));
  const std::size_t d = m.num_features();
  return {slice_cols(out, 0, d), slice_cols(out, d, d + 1)};
}

// Raw-unit head means for codes `h` under S <- arm.
void decode_means_raw(const GeneratorModel& m, const Tensor& h, std::size_t arm, std::vector<double>& raw_x,
                      std::vector<double>& raw_y) {
  const std::size_t n = h.rows(), d = m.num_features();
  const ParamView p(m.params());
  const Decoded dec = decode(m, p, h, onehot_rows(n, m.schema().num_sensitive(), arm));
  const Tensor xm = feature_means(m.blocks(), dec.x_out);
  const Tensor ym = target_mean(m.schema().task(), dec.y_out);
  const auto& st = m.stats();
  raw_x.resize(n * d);
  raw_y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) raw_x[i * d + j] = xm[i * d + j] * st.std[j] + st.mean[j];
    raw_y[i] = m.schema().task() == TaskKind::kRegression ? ym[i] * st.target_std + st.target_mean : ym[i];
  }
}

std::vector<std::string> encoded_names(const std::vector<FeatureBlock>& blocks) {
  std::vector<std::string> names;
  for (const auto& b : blocks) {
    if (b.kind == ColumnKind::kCategorical) {
      for (const auto& l : b.labels) names.push_back(b.column + "=" + l);
    } else {
      names.push_back(b.column);
    }
  }
  return names;
}

}  // namespace

void GeneratorSpec::validate() const {
  if (latent_dim == 0 || hidden == 0) throw ContractError("generator widths must be >= 1");
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ContractError("tau must be a nonnegative real");
}

nlohmann::json to_json(const GeneratorSpec& s) {
  return {{"latent_dim", s.latent_dim}, {"hidden", s.hidden}, {"tau", s.tau}};
}

GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
  GeneratorSpec s;
  s.latent_dim = j.value("latent_dim", s.latent_dim);
  s.hidden = j.value("hidden", s.hidden);
  s.tau = j.value("tau", s.tau);
  s.validate();
  return s;
}

GeneratorModel::GeneratorModel(GeneratorSpec spec, Schema schema, Standardization stats,
                               std::vector<double> s_frequencies, ParameterStore params, std::uint64_t seed,
                               bool trained)
    : spec_(spec),
      schema_(std::move(schema)),
      stats_(std::move(stats)),
      s_frequencies_(std::move(s_frequencies)),
      params_(std::move(params)),
      seed_(seed),
      trained_(trained) {
  spec_.validate();
  schema_.validate();
  blocks_ = feature_blocks(schema_);
  if (schema_.num_sensitive() < 2) throw ContractError("generator needs at least 2 sensitive categories");
  if (s_frequencies_.size() != schema_.num_sensitive()) {
    throw DimensionError("sensitive frequencies do not match the schema");
  }
}

std::size_t GeneratorModel::num_features() const { return blocks_.back().offset + blocks_.back().width; }

GeneratorModel make_generator(const GeneratorSpec& spec, const TabularDataset& data, std::uint64_t seed) {
  spec.validate();
  const std::size_t d = data.num_features(), ns = data.num_sensitive();
  if (ns < 2) throw ContractError("generator needs at least 2 sensitive categories");
  ParameterStore p;
  init_mlp(p, "gen.enc", {d + 1, spec.hidden, 2 * spec.latent_dim}, seed);
  init_mlp(p, "gen.dec", {spec.latent_dim + ns, spec.hidden, d + 1}, seed);
  init_constant(p, "gen.dec.x.logvar", 1, d, 0.0);
  if (data.task() == TaskKind::kRegression) init_constant(p, "gen.dec.y.logvar", 1, 1, 0.0);
  std::vector<double> freq(ns, 0.0);
  for (std::size_t s : data.s()) freq[s] += 1.0;
  for (double& f : freq) f /= static_cast<double>(data.size());
  return GeneratorModel(spec, data.schema(), data.stats(), freq, std::move(p), seed, false);
}

nlohmann::json to_json(const GeneratorModel& m) {
  return {{"spec", to_json(m.spec())},         {"schema", to_json(m.schema())},
          {"stats", stats_json(m.stats())},    {"s_frequencies", m.s_frequencies()},
          {"parameters", to_json(m.params())}, {"seed", m.seed()},
          {"trained", m.trained()}};
}

GeneratorModel generator_from_json(const nlohmann::json& j) {
  return GeneratorModel(generator_spec_from_json(j.at("spec")), schema_from_json(j.at("schema")),
                        stats_from_json(j.at("stats")), j.at("s_frequencies").get<std::vector<double>>(),
                        parameters_from_json(j.at("parameters")), j.at("seed").get<std::uint64_t>(),
                        j.at("trained").get<bool>());
}

std::size_t num_pairs(std::size_t k) { return k * (k - 1) / 2; }

PenaltyTerms distribution_matching_penalty(const Tensor& codes, std::span<const std::size_t> s,
                                           std::size_t num_sensitive, std::optional<double> bandwidth) {
  if (codes.rank() != 2 || codes.rows() != s.size()) {
    throw DimensionError("penalty: " + std::to_string(s.size()) + " labels for codes of shape " +
                         to_string(codes.shape()));
  }
  PenaltyTerms out;
  std::vector<std::vector<std::size_t>> groups(num_sensitive);
  for (std::size_t i = 0; i < s.size(); ++i) groups.at(s[i]).push_back(i);
  out.bandwidth = bandwidth ? *bandwidth : median_heuristic(codes.data(), codes.cols());
  const double gamma = 1.0 / (2.0 * out.bandwidth * out.bandwidth);
  std::vector<Tensor> members(num_sensitive), within(num_sensitive);
  // Within-group terms drop the diagonal (unbiased estimate). The biased
  // version carries a (1 - E k) / n term per group that is cheapest to remove
  // by collapsing every code onto one point, which small batches then do.
  for (std::size_t g = 0; g < num_sensitive; ++g) {
    if (groups[g].size() < 2) continue;
    const double n = static_cast<double>(groups[g].size());
    members[g] = select_rows(codes, groups[g]);
    within[g] = add_scalar(scale(rbf_kernel_mean(members[g], members[g], gamma), n / (n - 1.0)), -1.0 / (n - 1.0));
  }
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t a = 0; a < num_sensitive; ++a)
    for (std::size_t b = a + 1; b < num_sensitive; ++b) {
      if (groups[a].size() < 2 || groups[b].size() < 2) {
        ++out.pairs_skipped;
        continue;
      }
      acc = acc + within[a] + within[b] - scale(rbf_kernel_mean(members[a], members[b], gamma), 2.0);
      ++out.pairs_used;
    }
  out.value = scale(acc, 1.0 / static_cast<double>(num_pairs(num_sensitive)));
  return out;
}

Tensor encode(const GeneratorModel& model, const TabularDataset& data) {
  if (data.schema().fingerprint() != model.schema().fingerprint()) {
    throw ContractError("schema mismatch: generator '" + model.schema().name + "' vs dataset '" +
                        data.schema().name + "'");
  }
  const TabularDataset d = data.restandardize(model.stats());
  return split_gaussian(mlp(ParamView(model.params()), "gen.enc", encoder_input(d.x(), d.y()))).mean;
}

GeneratorObjective::GeneratorObjective(GeneratorModel model, TabularDataset data)
    : model_(std::move(model)), data_(std::move(data)) {
  if (data_.schema().fingerprint() != model_.schema().fingerprint()) {
    throw ContractError("generator schema '" + model_.schema().name + "' does not match dataset schema '" +
                        data_.schema().name + "'");
  }
}

GeneratorObjective GeneratorObjective::from_checkpoint(const nlohmann::json& ck, TabularDataset data) {
  if (ck.at("schema_fingerprint").get<std::string>() != data.schema().fingerprint()) {
    throw ContractError("checkpoint schema '" + ck.at("schema_name").get<std::string>() +
                        "' does not match dataset schema '" + data.schema().name + "'");
  }
  return GeneratorObjective(generator_from_json(ck.at("model")), std::move(data));
}

StepLosses GeneratorObjective::loss(const ParamView& p, const BatchContext& ctx, const TrainConfig& config) {
  const std::size_t n = ctx.rows.size(), dh = model_.spec().latent_dim;
  const Tensor x = select_rows(data_.x(), ctx.rows);
  const Tensor y = select_rows(data_.y(), ctx.rows);
  const Tensor s = select_rows(data_.s_onehot(), ctx.rows);
  const GaussianParams q =
      split_gaussian(named_head("gen.enc", [&] { return mlp(p, "gen.enc", encoder_input(x, y)); }));
  const CounterRng rng(config.seed ^ splitmix64(4), streams::kTrainNoise);
  const Tensor eps = Tensor::matrix(n, dh, rng.normals(ctx.epoch, ctx.batch, n * dh));
  const Tensor h = named_head("gen.enc", [&] { return q.mean + exp(scale(q.logvar, 0.5)) * eps; });
  const Decoded dec = decode(model_, p, h, s);
  const TaskKind task = data_.task();
  const Tensor recon = named_head("gen.dec", [&] {
    const Tensor lvy = task == TaskKind::kRegression ? p["gen.dec.y.logvar"] : Tensor::zeros({1, 1});
    return feature_nll(model_.blocks(), x, dec.x_out, p["gen.dec.x.logvar"]) + target_nll(task, y, dec.y_out, lvy);
  });
  const Tensor kl = mean(row_sum(kl_standard_normal(q.mean, q.logvar)));
  const Tensor lr = named_head("gen.loss", [&] { return mean(recon) + kl; });
  StepLosses out;
  out.elbo = lr.item();
  out.kl = kl.item();
  if (model_.spec().tau == 0.0) {
    out.total = lr;
    return out;
  }
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = data_.s()[ctx.rows[i]];
  const PenaltyTerms pen = distribution_matching_penalty(q.mean, labels, data_.num_sensitive());
  if (pen.pairs_skipped != 0) {
    if (skipped_ == 0) {
      warn("sensitive group missing from a batch at epoch " + std::to_string(ctx.epoch) +
           "; its pair terms are skipped for that step");
    }
    skipped_ += pen.pairs_skipped;
  }
  out.control = pen.value.item();
  out.total = named_head("gen.penalty", [&] { return lr + scale(pen.value, model_.spec().tau); });
  return out;
}

std::vector<std::pair<std::string, std::string>> GeneratorObjective::log_header(const TrainConfig&) const {
  return {{"objective", kind()},
          {"tau", fmt(model_.spec().tau)},
          {"latent_dim", std::to_string(model_.spec().latent_dim)}};
}

GeneratorTraining train_generator(const TabularDataset& data, const GeneratorSpec& spec, const TrainConfig& config) {
  GeneratorObjective obj(make_generator(spec, data, config.seed), data);
  TrainResult r = train(obj, config);
  GeneratorModel m = obj.model();
  m.set_params(std::move(r.params));
  m.mark_trained();
  return {std::move(m), std::move(r.log)};
}

// ---- counterfactual sets ----------------------------------------------------

std::size_t CounterfactualSet::num_features() const {
  return ids.empty() || arm_x.empty() ? 0 : arm_x.front().size() / ids.size();
}

CounterfactualSet CounterfactualSet::select(std::span<const std::size_t> wanted) const {
  std::map<std::size_t, std::size_t> pos;
  for (std::size_t i = 0; i < ids.size(); ++i) pos.emplace(ids[i], i);
  const std::size_t d = num_features();
  CounterfactualSet out;
  out.schema = schema;
  out.seed = seed;
  out.arm_x.resize(num_arms());
  out.arm_y.resize(num_arms());
  for (std::size_t id : wanted) {
    const auto it = pos.find(id);
    if (it == pos.end()) throw ContractError("no counterfactuals for individual " + std::to_string(id));
    const std::size_t i = it->second;
    out.ids.push_back(id);
    out.factual_s.push_back(factual_s[i]);
    for (std::size_t a = 0; a < num_arms(); ++a) {
      out.arm_x[a].insert(out.arm_x[a].end(), arm_x[a].begin() + static_cast<std::ptrdiff_t>(i * d),
                          arm_x[a].begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
      out.arm_y[a].push_back(arm_y[a][i]);
    }
  }
  return out;
}

TabularDataset CounterfactualSet::arm_dataset(std::size_t arm, const Standardization& stats) const {
  if (arm >= num_arms()) throw ContractError("arm " + std::to_string(arm) + " out of range");
  return make_dataset(schema, arm_x[arm], std::vector<std::size_t>(size(), arm), arm_y[arm], ids, stats);
}

std::string CounterfactualSet::to_csv() const {
  std::ostringstream os;
  os << "id,arm";
  for (const auto& n : encoded_names(feature_blocks(schema))) os << ',' << n;
  os << ',' << schema.target().name << ",factual\n";
  const std::size_t d = num_features();
  const auto& labels = schema.sensitive().categories;
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t a = 0; a < num_arms(); ++a) {
      os << ids[i] << ',' << labels[a];
      for (std::size_t j = 0; j < d; ++j) os << ',' << fmt(arm_x[a][i * d + j]);
      os << ',' << fmt(arm_y[a][i]) << ',' << (factual_s[i] == a ? 1 : 0) << '\n';
    }
  return os.str();
}

void CounterfactualSet::save(const std::filesystem::path& path) const { write_atomic(path, to_csv()); }

CounterfactualSet load_counterfactuals(const std::filesystem::path& path, const Schema& schema) {
  std::istringstream in(read_file(path));
  std::string line;
  const auto names = encoded_names(feature_blocks(schema));
  const std::size_t d = names.size();
  const auto& labels = schema.sensitive().categories;
  if (!std::getline(in, line)) throw LoadError(path.string() + ": empty counterfactual file");
  const auto header = split_csv_line(line);
  if (header.size() != d + 4 || header[0] != "id" || header[1] != "arm" || header.back() != "factual") {
    throw LoadError(path.string() + ": header does not match schema '" + schema.name + "'");
  }
  CounterfactualSet cf;
  cf.schema = schema;
  cf.arm_x.resize(labels.size());
  cf.arm_y.resize(labels.size());
  std::map<std::size_t, std::size_t> seen;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != d + 4) throw LoadError(path.string() + ": row " + std::to_string(row) + " has wrong width");
    try {
      const std::size_t id = std::stoull(f[0]);
      const auto at = std::find(labels.begin(), labels.end(), f[1]);
      if (at == labels.end()) throw LoadError("unknown arm '" + f[1] + "'");
      const std::size_t arm = static_cast<std::size_t>(at - labels.begin());
      if (arm == 0) {
        if (seen.count(id)) throw LoadError("duplicate individual " + f[0]);
        seen.emplace(id, cf.ids.size());
        cf.ids.push_back(id);
        cf.factual_s.push_back(0);
      } else if (!seen.count(id) || cf.arm_y[arm].size() != seen[id]) {
        throw LoadError("arms out of order for individual " + f[0]);
      }
      for (std::size_t j = 0; j < d; ++j) cf.arm_x[arm].push_back(std::stod(f[2 + j]));
      cf.arm_y[arm].push_back(std::stod(f[2 + d]));
      if (f[3 + d] == "1") cf.factual_s[seen[id]] = arm;
    } catch (const std::logic_error& e) {
      throw LoadError(path.string() + ": row " + std::to_string(row) + ": " + e.what());
    }
  }
  for (const auto& a : cf.arm_y)
    if (a.size() != cf.ids.size()) throw LoadError(path.string() + ": incomplete counterfactual arms");
  if (cf.ids.empty()) throw LoadError(path.string() + ": no counterfactual records");
  return cf;
}

CounterfactualSet generate_counterfactuals(const GeneratorModel& model, const TabularDataset& data,
                                           std::uint64_t seed) {
  if (!model.trained()) throw ContractError("generate_counterfactuals: generator is untrained");
  const Tensor h = encode(model, data);
  CounterfactualSet cf;
  cf.schema = model.schema();
  cf.ids = data.ids();
  cf.factual_s = data.s();
  cf.seed = seed;
  const std::size_t ns = model.schema().num_sensitive();
  cf.arm_x.resize(ns);
  cf.arm_y.resize(ns);
  for (std::size_t a = 0; a < ns; ++a) decode_means_raw(model, h, a, cf.arm_x[a], cf.arm_y[a]);
  return cf;
}

SyntheticData synthesize_dataset(const GeneratorModel& model, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ContractError("synthesize_dataset: n must be >= 1");
  if (!model.trained()) throw ContractError("synthesize_dataset: generator is untrained");
  const CounterRng rng(seed, streams::kSynthesis);
  const std::size_t dh = model.spec().latent_dim, d = model.num_features(), ns = model.schema().num_sensitive();
  const Tensor h = Tensor::matrix(n, dh, rng.normals(0, 0, n * dh));
  std::vector<double> cumulative(ns);
  double acc = 0.0;
  for (std::size_t k = 0; k < ns; ++k) cumulative[k] = acc += model.s_frequencies()[k];
  std::vector<std::size_t> s(n);
  std::vector<double> sv(n * ns, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = rng.categorical(cumulative, 1, 0, i);
    sv[i * ns + s[i]] = 1.0;
  }
  const ParamView p(model.params());
  const Decoded dec = decode(model, p, h, Tensor::matrix(n, ns, sv));
  const Tensor xm = feature_means(model.blocks(), dec.x_out);
  const Tensor ym = target_mean(model.schema().task(), dec.y_out);
  const Tensor lvx = model.params().at("gen.dec.x.logvar");
  const auto& st = model.stats();
  std::vector<double> raw_x(n * d), raw_y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& b : model.blocks()) {
      if (b.kind == ColumnKind::kContinuous) {
        const double z = xm[i * d + b.offset] + std::exp(0.5 * lvx[b.offset]) * rng.normal(2, b.offset, i);
        raw_x[i * d + b.offset] = z * st.std[b.offset] + st.mean[b.offset];
      } else {
        std::vector<double> cum(b.width);
        double c = 0.0;
        for (std::size_t k = 0; k < b.width; ++k) cum[k] = c += xm[i * d + b.offset + k];
        const std::size_t pick = rng.categorical(cum, 3, b.offset, i);
        for (std::size_t k = 0; k < b.width; ++k) raw_x[i * d + b.offset + k] = k == pick ? 1.0 : 0.0;
      }
    }
    if (model.schema().task() == TaskKind::kRegression) {
      const double sd = std::exp(0.5 * model.params().at("gen.dec.y.logvar")[0]);
      raw_y[i] = (ym[i] + sd * rng.normal(4, 0, i)) * st.target_std + st.target_mean;
    } else {
      raw_y[i] = rng.uniform(5, 0, i) < ym[i] ? 1.0 : 0.0;
    }
  }
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  SyntheticData out{make_dataset(model.schema(), raw_x, s, raw_y, ids), {}};
  CounterfactualSet& cf = out.counterfactuals;
  cf.schema = model.schema();
  cf.ids = ids;
  cf.factual_s = s;
  cf.seed = seed;
  cf.arm_x.resize(ns);
  cf.arm_y.resize(ns);
  for (std::size_t a = 0; a < ns; ++a) decode_means_raw(model, h, a, cf.arm_x[a], cf.arm_y[a]);
  return out;
}

}  // namespace cftk
