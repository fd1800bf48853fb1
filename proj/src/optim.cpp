#include "cftk/optim.hpp"

#include <cmath>

#include "cftk/error.hpp"

namespace cftk {

void ParameterStore::add(const std::string& name, Tensor value) {
  if (!params_.emplace(name, value.detach()).second) {
    throw ContractError("parameter '" + name + "' registered twice");
  }
}

void ParameterStore::set(const std::string& name, Tensor value) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  if (it->second.shape() != value.shape()) {
    throw DimensionError("parameter '" + name + "' has shape " + to_string(it->second.shape()) +
                         ", new value has " + to_string(value.shape()));
  }
  it->second = value.detach();
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

bool ParameterStore::same_values(const ParameterStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first || !a->second.same_values(b->second)) return false;
  }
  return true;
}

TrackedParameters::TrackedParameters(Tape& tape, const ParameterStore& store) : tape_(&tape) {
  for (const auto& [name, value] : store) leaves_.emplace(name, tape.leaf(value));
}

const Tensor& TrackedParameters::operator[](const std::string& name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

std::map<std::string, Tensor> TrackedParameters::gradients(const Tensor& root) const {
  const Gradients g = backward(*tape_, root);
  std::map<std::string, Tensor> out;
  for (const auto& [name, leaf] : leaves_) out.emplace(name, g.wrt(leaf));
  return out;
}

void adam_step(ParameterStore& params, const std::map<std::string, Tensor>& grads,
               AdamState& state) {
  for (const auto& [name, value] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) throw ContractError("adam_step: no gradient for parameter '" + name + "'");
    if (g->second.shape() != value.shape()) {
      throw DimensionError("adam_step: gradient for '" + name + "' has shape " +
                           to_string(g->second.shape()) + ", parameter has " +
                           to_string(value.shape()));
    }
  }
  ++state.step;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);

  for (const auto& [name, value] : params) {
    const auto g = grads.at(name).data();
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.empty()) m.assign(g.size(), 0.0);
    if (v.empty()) v.assign(g.size(), 0.0);
    std::vector<double> p = value.to_vector();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      p[i] -= c.step_size * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + c.epsilon);
    }
    params.set(name, Tensor(value.shape(), std::move(p)));
  }
}

nlohmann::json to_json(const Tensor& t) {
  return {{"shape", t.shape()}, {"data", t.to_vector()}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  try {
    return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed tensor: ") + e.what());
  }
}

nlohmann::json to_json(const ParameterStore& store) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, value] : store) j[name] = to_json(value);
  return j;
}

ParameterStore parameters_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw LoadError("parameter block must be an object");
  ParameterStore store;
  for (const auto& [name, value] : j.items()) store.add(name, tensor_from_json(value));
  return store;
}

nlohmann::json to_json(const AdamState& s) {
  return {{"step_size", s.config.step_size},
          {"beta1", s.config.beta1},
          {"beta2", s.config.beta2},
          {"epsilon", s.config.epsilon},
          {"step", s.step},
          {"first_moment", s.first_moment},
          {"second_moment", s.second_moment}};
}

AdamState adam_state_from_json(const nlohmann::json& j) {
  try {
    AdamState s;
    s.config.step_size = j.at("step_size").get<double>();
    s.config.beta1 = j.at("beta1").get<double>();
    s.config.beta2 = j.at("beta2").get<double>();
    s.config.epsilon = j.at("epsilon").get<double>();
    s.step = j.at("step").get<std::uint64_t>();
    s.first_moment = j.at("first_moment").get<std::map<std::string, std::vector<double>>>();
    s.second_moment = j.at("second_moment").get<std::map<std::string, std::vector<double>>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed optimizer state: ") + e.what());
  }
}

}  // namespace cftk
