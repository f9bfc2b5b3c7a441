#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <limits>

#include "cforge/config.hpp"
#include "cforge/diagnostics.hpp"
#include "cforge/io.hpp"
#include "cforge/pipeline.hpp"
#include "cforge/sd_estimator.hpp"

namespace py = pybind11;
using namespace cforge;

namespace {

SamplerConfig sampler_from(int chains, int iterations, int warmup, std::uint64_t seed) {
  SamplerConfig s;
  s.chains = chains;
  s.iterations = iterations;
  s.warmup = warmup < 0 ? iterations / 2 : warmup;
  s.seed = seed;
  s.validate();
  return s;
}

py::dict fit_dict(const FitResult& f) {
  py::dict ates;
  for (const auto& a : f.ates) {
    py::dict d;
    d["mean"] = a.mean;
    d["sd"] = a.sd;
    d["q2.5"] = a.q025;
    d["median"] = a.median;
    d["q97.5"] = a.q975;
    d["heavy_tailed"] = a.heavy_tailed;
    ates[py::str(a.name)] = d;
  }
  py::dict out;
  out["ate"] = ates;
  out["rhat_ok"] = f.diagnostics.rhat_ok;
  out["mcse_ok"] = f.diagnostics.mcse_ok;
  out["ess_ok"] = f.diagnostics.ess_ok;
  out["divergences"] = f.diagnostics.divergences;
  out["warnings"] = f.warnings;
  out["parameters"] = f.draws.names;
  return out;
}

}  // namespace

PYBIND11_MODULE(_cforge, m) {
  m.doc() = "Bayesian causal models for noncompliance with unmeasured confounding";

  m.def("simulate", [](int scenario, std::uint64_t seed, bool big_effect, const std::string& confounder,
                       double never_taker_share, int n) {
    ScenarioConfig sc = scenario == 5 ? scenario5_default(seed) : ScenarioConfig{};
    sc.scenario = scenario;
    sc.seed = seed;
    sc.big_effect = big_effect;
    if (!confounder.empty()) sc.confounder = parse_confounder_dist(confounder);
    sc.never_taker_share = never_taker_share;
    sc.n = n;
    sc.validate();
    const auto sim = generate(sc);
    py::dict cols;
    std::vector<int> z;
    std::vector<double> w, y;
    for (const auto& o : sim.data.observations) {
      z.push_back(o.z);
      w.push_back(o.w_missing.at(0) ? std::numeric_limits<double>::quiet_NaN() : o.w.at(0));
      y.push_back(o.y_missing ? std::numeric_limits<double>::quiet_NaN() : o.y);
    }
    cols["z"] = z;
    cols["w"] = w;
    cols["y"] = y;
    cols["u_prime"] = sim.truth.u_prime;
    cols["truth"] = sim.truth.parameters;
    return cols;
  }, py::arg("scenario"), py::arg("seed") = 1, py::arg("big_effect") = true, py::arg("confounder") = "",
     py::arg("never_taker_share") = 0.1, py::arg("n") = 300);

  m.def("preset_ids", &preset_ids);

  m.def("fit_preset", [](const std::string& id, std::uint64_t seed, int chains, int iterations, int warmup) {
    const auto p = preset(id, seed);
    FitResult f;
    {
      py::gil_scoped_release release;
      f = run_preset(p, sampler_from(chains, iterations, warmup, seed));
    }
    return fit_dict(f);
  }, py::arg("id"), py::arg("seed") = 1, py::arg("chains") = 4, py::arg("iterations") = 2000, py::arg("warmup") = -1);

  m.def("fit_config", [](const std::string& json_text, const std::string& base_dir) {
    const RunConfig rc = parse_run_config(json_text, base_dir);
    const auto loaded = load_data(rc);
    FitResult f;
    {
      py::gil_scoped_release release;
      f = run_fit(loaded.data, resolve_sigma_estimates(rc.spec, loaded.data, rc.sigma_auto), rc.sampler);
    }
    return fit_dict(f);
  }, py::arg("json_text"), py::arg("base_dir") = "");

  m.def("pooled_sd", [](const std::map<std::string, std::vector<double>>& groups) { return pooled_sd(groups); });

  m.def("split_rhat", [](const ChainMatrix& c) { return split_rhat(c).value; });
  m.def("ess", [](const ChainMatrix& c) { return ess(c).value; });
  m.def("prior_sensitivity", &prior_sensitivity);

  m.def("reproduce_catalog", &reproduce_catalog);

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SpecError>(m, "SpecError", PyExc_ValueError);
}
