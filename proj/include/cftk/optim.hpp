#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "json.hpp"

#include "cftk/tensor.hpp"

namespace cftk {

// Named trainable arrays. Iteration order is the lexicographic name order,
// which keeps every sweep over the store deterministic.
class ParameterStore {
 public:
  void add(const std::string& name, Tensor value);
  void set(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  std::size_t size() const { return params_.size(); }
  bool empty() const { return params_.empty(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Bitwise comparison of names, shapes and values.
  bool same_values(const ParameterStore& other) const;

 private:
  std::map<std::string, Tensor> params_;
};

// A view of a ParameterStore whose arrays are leaves on a tape.
class TrackedParameters {
 public:
  TrackedParameters(Tape& tape, const ParameterStore& store);
  const Tensor& operator[](const std::string& name) const;
  // Gradient of `root` for every parameter, keyed by name.
  std::map<std::string, Tensor> gradients(const Tensor& root) const;

 private:
  Tape* tape_;
  std::map<std::string, Tensor> leaves_;
};

struct AdamConfig {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
};

// One bias-corrected Adam update of every parameter in `params`.
void adam_step(ParameterStore& params, const std::map<std::string, Tensor>& grads,
               AdamState& state);

nlohmann::json to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ParameterStore& store);
ParameterStore parameters_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdamState& state);
AdamState adam_state_from_json(const nlohmann::json& j);

}  // namespace cftk
