#include "cftk/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cftk/io.hpp"
#include "cftk/rng.hpp"

namespace cftk {

namespace {

constexpr const char* kCheckpointFormat = "cftk-checkpoint/1";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct LoopState {
  ParameterStore params;
  AdamState adam;
  TrainLog log;
  std::uint64_t epoch = 0;
};

TrainResult run_loop(TrainingObjective& obj, const TrainConfig& config, LoopState st, std::uint64_t until) {
  const std::size_t n = obj.num_rows();
  const std::size_t bs = config.effective_batch_size(n);
  const std::size_t num_batches = (n + bs - 1) / bs;
  const CounterRng order(config.seed, streams::kBatchOrder);
  auto write = [&](const LoopState& s) {
    if (config.checkpoint_path.empty()) return;
    obj.set_parameters(s.params);
    save_checkpoint(config.checkpoint_path, make_checkpoint(obj, config, s.adam, s.epoch, s.log));
  };
  for (; st.epoch < until; ++st.epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> perm;
    if (num_batches == 1) {
      perm.resize(n);
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    } else {
      perm = order.permutation(n, st.epoch, 0);
    }
    TrainLogEntry entry;
    entry.epoch = st.epoch;
    const LoopState last_good = st;
    for (std::size_t b = 0; b < num_batches; ++b) {
      const std::size_t lo = b * bs, hi = std::min(n, lo + bs);
      const BatchContext ctx{st.epoch, b, std::span<const std::size_t>(perm.data() + lo, hi - lo)};
      std::map<std::string, Tensor> grads;
      StepLosses l;
      try {
        Tape tape;
        const TrackedParameters tracked(tape, st.params);
        l = obj.loss(ParamView(tracked), ctx, config);
        grads = tracked.gradients(l.total);
        for (const auto& [name, g] : grads)
          for (double v : g.data())
            if (!std::isfinite(v)) throw NumericError("non-finite gradient for parameter '" + name + "'");
      } catch (const NumericError& e) {
        write(last_good);
        obj.set_parameters(last_good.params);
        throw TrainingAborted("training aborted at epoch " + std::to_string(st.epoch) + ": " + e.what(),
                              st.epoch);
      }
      adam_step(st.params, grads, st.adam);
      const double w = static_cast<double>(hi - lo) / static_cast<double>(n);
      entry.elbo += w * l.elbo;
      entry.control += w * l.control;
      entry.total += w * l.total.item();
      entry.kl += w * l.kl;
    }
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    st.log.entries.push_back(entry);
    if (config.checkpoint_interval != 0 && (st.epoch + 1) % config.checkpoint_interval == 0 &&
        st.epoch + 1 < until) {
      LoopState snap = st;
      ++snap.epoch;
      write(snap);
    }
  }
  obj.set_parameters(st.params);
  write(st);
  return {st.params, st.log, st.adam, st.epoch};
}

}  // namespace

std::size_t TrainConfig::effective_batch_size(std::size_t rows) const {
  if (batch_size != 0) return batch_size;
  return rows <= 4096 ? rows : 1024;
}

void TrainConfig::validate(std::size_t rows) const {
  if (epochs == 0) throw ContractError("epochs must be >= 1");
  if (!(gamma > 0.0)) throw ContractError("gamma must be positive");
  if (rows == 0) throw ContractError("no training rows");
  if (batch_size > rows) {
    throw ContractError("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                        std::to_string(rows));
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"gamma", c.gamma},
          {"seed", c.seed},
          {"adam",
           {{"step_size", c.adam.step_size},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"epsilon", c.adam.epsilon}}},
          {"checkpoint_interval", c.checkpoint_interval}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.gamma = j.value("gamma", c.gamma);
  c.seed = j.value("seed", c.seed);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    c.adam.step_size = a.value("step_size", c.adam.step_size);
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.epsilon = a.value("epsilon", c.adam.epsilon);
  }
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  return c;
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  for (const auto& [k, v] : header) os << "# " << k << '=' << v << '\n';
  os << "# R=" << fmt(r) << '\n';
  os << "epoch,elbo,l_c,total,kl,seconds\n";
  for (const auto& e : entries) {
    os << e.epoch << ',' << fmt(e.elbo) << ',' << fmt(e.control) << ',' << fmt(e.total) << ','
       << fmt(e.kl) << ',' << fmt(e.seconds) << '\n';
  }
  return os.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const { write_atomic(path, to_csv()); }

nlohmann::json to_json(const TrainLog& log) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : log.entries)
    rows.push_back({e.epoch, e.elbo, e.control, e.total, e.kl, e.seconds});
  nlohmann::json header = nlohmann::json::array();
  for (const auto& [k, v] : log.header) header.push_back({k, v});
  return {{"r", log.r}, {"header", header}, {"entries", rows}};
}

TrainLog train_log_from_json(const nlohmann::json& j) {
  TrainLog log;
  log.r = j.at("r").get<double>();
  for (const auto& h : j.at("header")) log.header.emplace_back(h.at(0).get<std::string>(), h.at(1).get<std::string>());
  for (const auto& e : j.at("entries")) {
    log.entries.push_back({e.at(0).get<std::uint64_t>(), e.at(1).get<double>(), e.at(2).get<double>(),
                           e.at(3).get<double>(), e.at(4).get<double>(), e.at(5).get<double>()});
  }
  return log;
}

TrainResult train(TrainingObjective& obj, const TrainConfig& config) {
  const std::size_t n = obj.num_rows();
  config.validate(n);
  const std::size_t bs = config.effective_batch_size(n);
  // The first batch of epoch 0, exactly as the loop will see it.
  std::vector<std::size_t> first;
  if (bs >= n) {
    first.resize(n);
    for (std::size_t i = 0; i < n; ++i) first[i] = i;
  } else {
    first = CounterRng(config.seed, streams::kBatchOrder).permutation(n, 0, 0);
    first.resize(bs);
  }
  obj.prepare({0, 0, first}, config);
  LoopState st;
  st.params = obj.parameters();
  st.adam.config = config.adam;
  st.log.r = obj.normalization();
  st.log.header = obj.log_header(config);
  st.log.header.emplace_back("seed", std::to_string(config.seed));
  return run_loop(obj, config, std::move(st), config.epochs);
}

nlohmann::json make_checkpoint(const TrainingObjective& obj, const TrainConfig& config, const AdamState& optimizer,
                               std::uint64_t epochs_completed, const TrainLog& log) {
  return {{"format", kCheckpointFormat},
          {"objective", obj.kind()},
          {"schema_fingerprint", obj.schema().fingerprint()},
          {"schema_name", obj.schema().name},
          {"model", obj.model_json()},
          {"R", obj.normalization()},
          {"train_config", to_json(config)},
          {"optimizer", to_json(optimizer)},
          {"epochs_completed", epochs_completed},
          {"log", to_json(log)}};
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& checkpoint) {
  write_atomic(path, checkpoint.dump(1) + "\n");
}

nlohmann::json load_checkpoint(const std::filesystem::path& path) {
  const nlohmann::json j = read_json(path);
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
    throw LoadError("corrupt checkpoint " + path.string() + ": missing or unknown format tag");
  }
  for (const char* key : {"objective", "model", "optimizer", "epochs_completed", "train_config", "log"}) {
    if (!j.contains(key)) throw LoadError("corrupt checkpoint " + path.string() + ": missing '" + key + "'");
  }
  return j;
}

TrainResult resume(const nlohmann::json& ck, TrainingObjective& obj, std::uint64_t remaining,
                   std::optional<std::filesystem::path> checkpoint_path) {
  if (ck.at("objective").get<std::string>() != obj.kind()) {
    throw ContractError("checkpoint holds a '" + ck.at("objective").get<std::string>() + "', not a '" +
                        obj.kind() + "'");
  }
  if (ck.at("schema_fingerprint").get<std::string>() != obj.schema().fingerprint()) {
    throw ContractError("checkpoint schema '" + ck.at("schema_name").get<std::string>() +
                        "' does not match dataset schema '" + obj.schema().name + "'");
  }
  TrainConfig config = train_config_from_json(ck.at("train_config"));
  if (checkpoint_path) config.checkpoint_path = *checkpoint_path;
  LoopState st;
  st.params = obj.parameters();
  st.adam = adam_state_from_json(ck.at("optimizer"));
  st.log = train_log_from_json(ck.at("log"));
  st.epoch = ck.at("epochs_completed").get<std::uint64_t>();
  obj.set_normalization(ck.at("R").get<double>());
  if (remaining == 0) return {st.params, st.log, st.adam, st.epoch};
  config.epochs = st.epoch + remaining;
  return run_loop(obj, config, std::move(st), config.epochs);
}

CausalObjective::CausalObjective(CausalModel model, TabularDataset data)
    : model_(std::move(model)), data_(std::move(data)) {
  if (data_.schema().fingerprint() != model_.schema().fingerprint()) {
    throw ContractError("model schema '" + model_.schema().name + "' does not match dataset schema '" +
                        data_.schema().name + "'");
  }
}

CausalObjective CausalObjective::from_checkpoint(const nlohmann::json& ck, TabularDataset data) {
  if (ck.at("schema_fingerprint").get<std::string>() != data.schema().fingerprint()) {
    throw ContractError("checkpoint schema '" + ck.at("schema_name").get<std::string>() +
                        "' does not match dataset schema '" + data.schema().name + "'");
  }
  CausalObjective obj(causal_model_from_json(ck.at("model")), std::move(data));
  obj.r_ = ck.at("R").get<double>();
  return obj;
}

void CausalObjective::prepare(const BatchContext& first, const TrainConfig& config) {
  if (model_.spec().variant != ModelVariant::kExoc) return;
  const Batch b = make_batch(data_, first.rows);
  r_ = normalization_scale(model_, b, draw_noise(model_.spec(), b.size(), config.seed, first.epoch, first.batch));
}

StepLosses CausalObjective::loss(const ParamView& p, const BatchContext& ctx, const TrainConfig& config) {
  const Batch b = make_batch(data_, ctx.rows);
  const LossTerms t = model_losses(model_, p, b, draw_noise(model_.spec(), b.size(), config.seed, ctx.epoch, ctx.batch));
  StepLosses out;
  out.elbo = t.elbo.item();
  out.control = t.control.item();
  out.kl = t.kl;
  out.total = model_.spec().variant == ModelVariant::kExoc ? total_loss(model_.spec(), t.elbo, t.control, config.gamma, r_)
                                                          : t.elbo;
  return out;
}

std::vector<std::pair<std::string, std::string>> CausalObjective::log_header(const TrainConfig& config) const {
  std::vector<std::pair<std::string, std::string>> h{{"objective", kind()},
                                                     {"variant", to_string(model_.spec().variant)}};
  if (model_.spec().variant == ModelVariant::kExoc) {
    h.emplace_back("control_target", to_string(model_.spec().control_target));
    h.emplace_back("gamma", fmt(config.gamma));
  }
  return h;
}

}  // namespace cftk
