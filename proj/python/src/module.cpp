#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cftk/bounds.hpp"
#include "cftk/error.hpp"
#include "cftk/experiment.hpp"
#include "cftk/io.hpp"
#include "cftk/metrics.hpp"
#include "cftk/simulate.hpp"

namespace py = pybind11;

namespace {

// nlohmann::json <-> Python objects by way of the json module.
py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }
nlohmann::json from_py(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

cftk::MmdOptions mmd_options(std::optional<double> bandwidth, std::optional<double> report_scale) {
  cftk::MmdOptions o;
  o.bandwidth = bandwidth;
  o.report_scale = report_scale;
  return o;
}

cftk::bounds::LinearCaseParams params_from(const py::dict& d) {
  cftk::bounds::LinearCaseParams p;
  for (auto [k, v] : d) {
    const auto key = k.cast<std::string>();
    const double x = v.cast<double>();
    if (key == "alpha") p.alpha = x;
    else if (key == "beta") p.beta = x;
    else if (key == "sigma_k") p.sigma_k = x;
    else if (key == "aux_alpha") p.aux_alpha = x;
    else if (key == "aux_beta") p.aux_beta = x;
    else if (key == "aux_sigma_k") p.aux_sigma_k = x;
    else if (key == "aux_sigma_s") p.aux_sigma_s = x;
    else if (key == "s") p.s = x;
    else if (key == "s_star") p.s_star = x;
    else throw cftk::ContractError("unknown bound parameter '" + key + "'");
  }
  return p;
}

cftk::bounds::Variant variant_from(const std::string& v) {
  if (v == "fairk") return cftk::bounds::Variant::kFairK;
  if (v == "auxiliary") return cftk::bounds::Variant::kAuxiliary;
  throw cftk::ContractError("variant must be 'fairk' or 'auxiliary'");
}

py::dict divergence(const std::vector<std::vector<double>>& arms, const std::string& metric, bool scores,
                    std::optional<double> bandwidth, std::optional<double> report_scale) {
  cftk::PredictionSet p;
  p.arms = arms;
  p.scores = scores;
  const auto m = metric == "mmd" ? cftk::DivergenceMetric::kMmd
                 : metric == "wass" ? cftk::DivergenceMetric::kWasserstein
                                    : throw cftk::ContractError("metric must be 'mmd' or 'wass'");
  const auto s = cftk::pairwise_cf_divergence(p, m, mmd_options(bandwidth, report_scale));
  py::list pairs;
  for (const auto& q : s.pairs) pairs.append(py::make_tuple(q.arm_a, q.arm_b, q.value));
  py::dict out;
  out["mean"] = s.mean;
  out["pairs"] = pairs;
  return out;
}

}  // namespace

PYBIND11_MODULE(_cftk, m) {
  m.doc() = "Counterfactual fairness toolkit: metrics, bounds, simulators and the experiment pipeline";
  m.attr("__version__") = cftk::kToolkitVersion;

  py::register_exception<cftk::ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<cftk::LoadError>(m, "LoadError", PyExc_OSError);

  m.def("rmse", [](std::vector<double> p, std::vector<double> t) { return cftk::rmse(p, t); });
  m.def("mae", [](std::vector<double> p, std::vector<double> t) { return cftk::mae(p, t); });
  m.def("accuracy", [](std::vector<double> s, std::vector<double> t) { return cftk::accuracy(s, t); });
  m.def(
      "mmd",
      [](std::vector<double> a, std::vector<double> b, std::optional<double> bandwidth,
         std::optional<double> report_scale) {
        const auto r = cftk::mmd(a, b, mmd_options(bandwidth, report_scale));
        py::dict d;
        d["mmd2"] = r.mmd2;
        d["bandwidth"] = r.bandwidth;
        d["value"] = r.value;
        return d;
      },
      py::arg("a"), py::arg("b"), py::arg("bandwidth") = py::none(), py::arg("report_scale") = py::none(),
      "Biased MMD^2 with an RBF kernel (median heuristic unless `bandwidth` is given).");
  m.def("wasserstein1", [](std::vector<double> a, std::vector<double> b) { return cftk::wasserstein1(a, b); });
  m.def("pairwise_cf_divergence", &divergence, py::arg("arms"), py::arg("metric") = "mmd", py::arg("scores") = false,
        py::arg("bandwidth") = py::none(), py::arg("report_scale") = py::none(),
        "Mean divergence over every pair of counterfactual arms; arms[s][i] is individual i under S <- s.");

  m.def("delta_a", [](const py::dict& p) { return cftk::bounds::delta_a(params_from(p)); });
  m.def("delta_b", [](const py::dict& p) { return cftk::bounds::delta_b(params_from(p)); });
  m.def(
      "coverage",
      [](const py::dict& p, const std::string& variant, std::uint64_t draws, std::uint64_t seed) {
        return cftk::bounds::monte_carlo_coverage(params_from(p), variant_from(variant), draws, seed);
      },
      py::arg("params"), py::arg("variant"), py::arg("draws") = 100000, py::arg("seed") = 0);

  m.def("spearman", &cftk::spearman);
  m.def("simulator_names", &cftk::simulator_names);
  m.def("simulator_schema", [](const std::string& name) { return to_py(cftk::to_json(cftk::simulator_schema(name))); });
  m.def(
      "simulate_csv",
      [](const std::string& name, std::size_t rows, std::uint64_t seed, const std::filesystem::path& path) {
        cftk::save_csv(cftk::simulate(name, rows, seed), path);
      },
      py::arg("name"), py::arg("rows"), py::arg("seed"), py::arg("path"));

  m.def(
      "preset_config",
      [](const std::string& preset, const std::string& dataset) {
        return to_py(cftk::to_json(cftk::preset_config(preset, dataset)));
      },
      py::arg("preset") = "desk", py::arg("dataset") = "law");
  m.def("config_hash", [](const py::object& config) {
    return cftk::config_hash(cftk::experiment_config_from_json(from_py(config)));
  });
  m.def(
      "run",
      [](const py::object& config) {
        cftk::Experiment ex(cftk::experiment_config_from_json(from_py(config)));
        cftk::RunResult r;
        {
          py::gil_scoped_release release;
          r = cftk::cmd_run(ex);
        }
        py::dict out;
        out["table"] = r.table;
        out["exit_code"] = r.status.exit_code();
        py::dict methods;
        for (const auto& row : r.rows) {
          py::list runs;
          for (const auto& rep : row.runs) runs.append(to_py(cftk::to_json(rep)));
          methods[py::str(row.method)] = runs;
        }
        out["methods"] = methods;
        return out;
      },
      py::arg("config"), "Fit all five predictors for every seed and return the comparison table.");
  m.def("verify_manifest", &cftk::verify_manifest);
}
