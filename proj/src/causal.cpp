#include "cftk/causal.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "cftk/error.hpp"
#include "cftk/rng.hpp"

namespace cftk {

namespace {

const char* prefix_of(const std::string& node, bool guide) {
  if (guide) {
    if (node == "K") return "guide.k";
    if (node == "S'") return "guide.aux";
    if (node == "S''") return "guide.control";
  } else {
    if (node == "X") return "dec.x";
    if (node == "S") return "dec.s";
    if (node == "Y") return "dec.y";
    if (node == "S''") return "prior.control";
  }
  throw ContractError("no network for node " + node);
}

std::size_t width_of(const std::string& node, const CausalModelSpec& spec, std::size_t d,
                     std::size_t num_s) {
  if (node == "X") return d;
  if (node == "S") return num_s;
  if (node == "Y") return 1;
  if (node == "K") return spec.dim_k;
  if (node == "S'") return spec.dim_aux;
  if (node == "S''") return spec.dim_control;
  throw ContractError("unknown node " + node);
}

Tensor gather(const std::map<std::string, Tensor>& values, const std::vector<std::string>& parents) {
  std::vector<Tensor> parts;
  for (const auto& p : parents) parts.push_back(values.at(p));
  return parts.size() == 1 ? parts.front() : concat_cols(parts);
}

Latent reparameterize(const GaussianParams& g, const Tensor& noise) {
  return {g.mean, g.logvar, noise, g.mean + exp(scale(g.logvar, 0.5)) * noise};
}

}  // namespace

std::string to_string(ModelVariant v) { return v == ModelVariant::kFairK ? "fairk" : "exoc"; }
std::string to_string(ControlTarget t) {
  return t == ControlTarget::kControlNode ? "control-node" : "prediction";
}

void CausalModelSpec::validate() const {
  if (dim_k == 0) throw ContractError("dim_K must be >= 1");
  if (hidden == 0) throw ContractError("hidden width must be >= 1");
  if (variant == ModelVariant::kFairK) return;
  if (dim_aux == 0 || dim_control == 0) throw ContractError("dim_S' and dim_S'' must be >= 1");
  if (dim_aux != dim_control) {
    throw ContractError("EXOC requires dim_S' == dim_S'' (got " + std::to_string(dim_aux) + " and " +
                        std::to_string(dim_control) + ")");
  }
  if (control_target == ControlTarget::kPrediction && dim_aux != 1) {
    throw ContractError("prediction control target requires dim_S' == 1");
  }
  if (std::find(exoc_feature_parents.begin(), exoc_feature_parents.end(), "K") ==
      exoc_feature_parents.end()) {
    throw ContractError("EXOC feature head must have K as a parent");
  }
  for (const auto& p : exoc_feature_parents)
    if (p != "K" && p != "S" && p != "S'") throw ContractError("invalid feature-head parent " + p);
}

nlohmann::json to_json(const CausalModelSpec& s) {
  return {{"variant", to_string(s.variant)},
          {"dim_k", s.dim_k},
          {"dim_aux", s.dim_aux},
          {"dim_control", s.dim_control},
          {"hidden", s.hidden},
          {"control_target", to_string(s.control_target)},
          {"exoc_feature_parents", s.exoc_feature_parents}};
}

CausalModelSpec causal_spec_from_json(const nlohmann::json& j) {
  CausalModelSpec s;
  const std::string v = j.value("variant", "exoc");
  if (v == "fairk") s.variant = ModelVariant::kFairK;
  else if (v == "exoc") s.variant = ModelVariant::kExoc;
  else throw ContractError("unknown model variant '" + v + "'");
  s.dim_k = j.value("dim_k", s.dim_k);
  s.dim_aux = j.value("dim_aux", s.dim_aux);
  s.dim_control = j.value("dim_control", s.dim_control);
  s.hidden = j.value("hidden", s.hidden);
  const std::string t = j.value("control_target", "control-node");
  if (t == "control-node") s.control_target = ControlTarget::kControlNode;
  else if (t == "prediction") s.control_target = ControlTarget::kPrediction;
  else throw ContractError("unknown control target '" + t + "'");
  if (j.contains("exoc_feature_parents"))
    s.exoc_feature_parents = j.at("exoc_feature_parents").get<std::vector<std::string>>();
  s.validate();
  return s;
}

std::vector<HeadParents> decoder_parents(const CausalModelSpec& spec) {
  if (spec.variant == ModelVariant::kFairK) return {{"X", {"K", "S"}}, {"Y", {"K", "S"}}};
  return {{"X", spec.exoc_feature_parents}, {"S", {"S'"}}, {"Y", {"K", "S'"}}, {"S''", {"Y"}}};
}

std::vector<HeadParents> guide_parents(const CausalModelSpec& spec) {
  if (spec.variant == ModelVariant::kFairK) return {{"K", {"X", "Y", "S"}}};
  return {{"K", {"X", "Y", "S"}}, {"S'", {"X", "Y", "S"}}, {"S''", {"Y"}}};
}

CausalModel::CausalModel(CausalModelSpec spec, Schema schema, ParameterStore params, std::uint64_t seed)
    : spec_(std::move(spec)), schema_(std::move(schema)), params_(std::move(params)), seed_(seed) {
  spec_.validate();
  schema_.validate();
  blocks_ = feature_blocks(schema_);
}

std::size_t CausalModel::num_features() const {
  return blocks_.empty() ? 0 : blocks_.back().offset + blocks_.back().width;
}

ParameterStore build_model(const CausalModelSpec& spec, const Schema& schema, std::uint64_t seed) {
  spec.validate();
  schema.validate();
  const auto blocks = feature_blocks(schema);
  const std::size_t d = blocks.back().offset + blocks.back().width;
  const std::size_t ns = schema.num_sensitive();
  auto in_width = [&](const std::vector<std::string>& parents) {
    std::size_t w = 0;
    for (const auto& p : parents) w += width_of(p, spec, d, ns);
    return w;
  };
  ParameterStore store;
  for (const auto& g : guide_parents(spec)) {
    init_mlp(store, prefix_of(g.head, true),
             {in_width(g.parents), spec.hidden, 2 * width_of(g.head, spec, d, ns)}, seed);
  }
  for (const auto& h : decoder_parents(spec)) {
    const std::size_t out = h.head == "S''" ? 2 * spec.dim_control : width_of(h.head, spec, d, ns);
    init_mlp(store, prefix_of(h.head, false), {in_width(h.parents), spec.hidden, out}, seed);
  }
  init_constant(store, "dec.x.logvar", 1, d, 0.0);
  if (schema.task() == TaskKind::kRegression) init_constant(store, "dec.y.logvar", 1, 1, 0.0);
  return store;
}

CausalModel make_model(const CausalModelSpec& spec, const Schema& schema, std::uint64_t seed) {
  return CausalModel(spec, schema, build_model(spec, schema, seed), seed);
}

nlohmann::json to_json(const CausalModel& m) {
  return {{"spec", to_json(m.spec())},
          {"schema", to_json(m.schema())},
          {"seed", m.seed()},
          {"parameters", to_json(m.params())}};
}

CausalModel causal_model_from_json(const nlohmann::json& j) {
  return CausalModel(causal_spec_from_json(j.at("spec")), schema_from_json(j.at("schema")),
                     parameters_from_json(j.at("parameters")), j.at("seed").get<std::uint64_t>());
}

Batch make_batch(const TabularDataset& data) { return {data.x(), data.s_onehot(), data.y()}; }

Batch make_batch(const TabularDataset& data, std::span<const std::size_t> rows) {
  return {select_rows(data.x(), rows), select_rows(data.s_onehot(), rows), select_rows(data.y(), rows)};
}

LatentNoise draw_noise(const CausalModelSpec& spec, std::size_t n, std::uint64_t seed,
                       std::uint64_t epoch, std::uint64_t batch) {
  auto block = [&](std::uint64_t stream, std::size_t dim) {
    // Sub-streams keep each latent's draws independent of the others' dims.
    const CounterRng rng(seed ^ splitmix64(stream), streams::kTrainNoise);
    return Tensor::matrix(n, dim, rng.normals(epoch, batch, n * dim));
  };
  LatentNoise z;
  z.k = block(1, spec.dim_k);
  if (spec.variant == ModelVariant::kExoc) {
    z.aux = block(2, spec.dim_aux);
    z.control = block(3, spec.dim_control);
  }
  return z;
}

LatentNoise slice_noise(const LatentNoise& noise, std::span<const std::size_t> rows) {
  LatentNoise z;
  z.k = select_rows(noise.k, rows);
  if (noise.aux.rank() == 2) {
    z.aux = select_rows(noise.aux, rows);
    z.control = select_rows(noise.control, rows);
  }
  return z;
}

LossTerms model_losses(const CausalModel& model, const ParamView& p, const Batch& batch,
                       const LatentNoise& noise) {
  const auto& spec = model.spec();
  const TaskKind task = model.schema().task();
  if (batch.size() == 0) throw ContractError("empty batch");
  if (batch.x.cols() != model.num_features() || batch.s.cols() != model.schema().num_sensitive()) {
    throw DimensionError("batch shape " + to_string(batch.x.shape()) + " does not match model schema '" +
                         model.schema().name + "'");
  }
  const bool exoc = spec.variant == ModelVariant::kExoc;
  std::map<std::string, Tensor> values{{"X", batch.x}, {"S", batch.s}, {"Y", batch.y}};
  LossTerms out;
  Tensor kl_rows;
  for (const auto& g : guide_parents(spec)) {
    const std::string prefix = prefix_of(g.head, true);
    const GaussianParams q = split_gaussian(
        named_head(prefix, [&] { return mlp(p, prefix, gather(values, g.parents)); }));
    const Tensor& eps = g.head == "K" ? noise.k : g.head == "S'" ? noise.aux : noise.control;
    Latent z;
    named_head(prefix, [&] {
      z = reparameterize(q, eps);
      return z.sample;
    });
    values[g.head] = z.sample;
    if (g.head == "K") out.latents.k = z;
    else if (g.head == "S'") out.latents.aux = z;
    else out.latents.control = z;
  }
  Tensor recon;
  bool have_recon = false;
  auto add_recon = [&](const Tensor& t) {
    recon = have_recon ? recon + t : t;
    have_recon = true;
  };
  for (const auto& h : decoder_parents(spec)) {
    const std::string prefix = prefix_of(h.head, false);
    const Tensor in = gather(values, h.parents);
    if (h.head == "X") {
      add_recon(named_head(prefix, [&] {
        return feature_nll(model.blocks(), batch.x, mlp(p, prefix, in), p["dec.x.logvar"]);
      }));
    } else if (h.head == "S") {
      add_recon(named_head(prefix, [&] { return categorical_nll(batch.s, mlp(p, prefix, in)); }));
    } else if (h.head == "Y") {
      add_recon(named_head(prefix, [&] {
        const Tensor lv = task == TaskKind::kRegression ? p["dec.y.logvar"] : Tensor::zeros({1, 1});
        return target_nll(task, batch.y, mlp(p, prefix, in), lv);
      }));
    } else {
      // Conditional prior p(S''|Y) against the guide q(S''|Y).
      const GaussianParams prior = split_gaussian(named_head(prefix, [&] { return mlp(p, prefix, in); }));
      const Latent& c = out.latents.control;
      kl_rows = named_head(prefix, [&] {
        return row_sum(kl_normal(c.mean, c.logvar, prior.mean, prior.logvar));
      });
    }
  }
  Tensor kl = named_head("kl.k", [&] {
    return row_sum(kl_standard_normal(out.latents.k.mean, out.latents.k.logvar));
  });
  if (exoc) {
    kl = kl + named_head("kl.aux", [&] {
           return row_sum(kl_standard_normal(out.latents.aux.mean, out.latents.aux.logvar));
         });
    kl = kl + kl_rows;
  }
  const Tensor kl_mean = mean(kl);
  const Tensor recon_mean = mean(recon);
  out.elbo = named_head("elbo", [&] { return recon_mean + kl_mean; });
  out.kl = kl_mean.item();
  out.recon = recon_mean.item();
  if (!exoc) {
    out.control = Tensor::scalar(0.0);
    return out;
  }
  if (spec.control_target == ControlTarget::kControlNode) {
    out.control = control_loss(out.latents.aux.mean, out.latents.control.mean);
  } else {
    std::map<std::string, Tensor> means{{"K", out.latents.k.mean}, {"S'", out.latents.aux.mean},
                                        {"S", batch.s}};
    std::vector<std::string> y_parents;
    for (const auto& h : decoder_parents(spec))
      if (h.head == "Y") y_parents = h.parents;
    const Tensor y_hat = target_mean(task, mlp(p, "dec.y", gather(means, y_parents)));
    out.control = control_loss(out.latents.aux.mean, y_hat);
  }
  return out;
}

Tensor elbo_loss(const CausalModel& model, const ParamView& p, const Batch& batch,
                 const LatentNoise& noise) {
  return model_losses(model, p, batch, noise).elbo;
}

Tensor control_loss(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 2) {
    throw DimensionError("control_loss: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                         " differ");
  }
  return mean(row_sum(square(a - b)));
}

Tensor total_loss(const CausalModelSpec& spec, const Tensor& elbo, const Tensor& lc, double gamma,
                  double r) {
  if (spec.variant == ModelVariant::kFairK) throw ContractError("total_loss: Fair-K has no control term");
  if (!(gamma > 0.0) || !(r > 0.0)) throw ContractError("total_loss: gamma and R must be positive");
  return elbo + scale(lc, gamma * r);
}

double normalization_scale(double elbo, double lc) { return std::abs(elbo) / (std::abs(lc) + 1e-12); }

double normalization_scale(const CausalModel& model, const Batch& first_batch, const LatentNoise& noise) {
  const LossTerms t = model_losses(model, ParamView(model.params()), first_batch, noise);
  return normalization_scale(t.elbo.item(), t.control.item());
}

PosteriorMeans infer_posterior(const CausalModel& model, const TabularDataset& data) {
  if (data.schema().fingerprint() != model.schema().fingerprint()) {
    throw ContractError("schema mismatch: model '" + model.schema().name + "' vs dataset '" +
                        data.schema().name + "'");
  }
  const ParamView p(model.params());
  std::map<std::string, Tensor> values{{"X", data.x()}, {"S", data.s_onehot()}, {"Y", data.y()}};
  PosteriorMeans out;
  for (const auto& g : guide_parents(model.spec())) {
    const std::string prefix = prefix_of(g.head, true);
    const Tensor m = split_gaussian(mlp(p, prefix, gather(values, g.parents))).mean;
    if (g.head == "K") out.k = m;
    else if (g.head == "S'") out.aux = m;
    else out.control = m;
  }
  return out;
}

}  // namespace cftk
