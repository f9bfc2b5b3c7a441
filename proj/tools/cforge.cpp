#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cforge/config.hpp"
#include "cforge/io.hpp"
#include "cforge/pipeline.hpp"
#include "cforge/sd_estimator.hpp"

namespace fs = std::filesystem;
using namespace cforge;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kSampler = 3, kReproduce = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> chains, iters, warmup;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON run configuration");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--chains", c.chains, "number of chains");
  app->add_option("--iters", c.iters, "iterations per chain, warmup included");
  app->add_option("--warmup", c.warmup, "warmup iterations per chain");
}

void apply_sampler(const Common& c, SamplerConfig& s) {
  if (c.seed) s.seed = *c.seed;
  if (c.chains) s.chains = *c.chains;
  if (c.iters) s.iterations = *c.iters;
  if (c.warmup) s.warmup = *c.warmup;
  else if (c.iters) s.warmup = *c.iters / 2;
  s.validate();
}

struct ScenarioFlags {
  std::optional<int> scenario;
  std::string effect;
  std::string confounder;
  std::optional<double> nt_share;
  std::optional<int> n;
};

void add_scenario_flags(CLI::App* app, ScenarioFlags& f) {
  app->add_option("--scenario", f.scenario, "simulation scenario 1-7");
  app->add_option("--effect", f.effect, "big or small")->check(CLI::IsMember({"big", "small"}));
  app->add_option("--confounder", f.confounder, "normal, lognormal or poisson");
  app->add_option("--nt-share", f.nt_share, "never-taker share (scenario 2)");
  app->add_option("--n", f.n, "sample size");
}

// Merges command-line scenario flags into `sc`; returns false when none was given.
bool apply_scenario(const ScenarioFlags& f, std::optional<ScenarioConfig>& sc, std::optional<std::uint64_t> seed) {
  const bool any = f.scenario || !f.effect.empty() || !f.confounder.empty() || f.nt_share || f.n;
  if (!any && !sc) return false;
  if (!sc) sc = f.scenario == 5 ? scenario5_default() : ScenarioConfig{};
  if (f.scenario) {
    if (*f.scenario == 5 && sc->scenario != 5) sc->confounder = ConfounderDist::lognormal;
    sc->scenario = *f.scenario;
  }
  if (!f.effect.empty()) sc->big_effect = f.effect == "big";
  if (!f.confounder.empty()) sc->confounder = parse_confounder_dist(f.confounder);
  if (f.nt_share) sc->never_taker_share = *f.nt_share;
  if (f.n) sc->n = *f.n;
  if (seed) sc->seed = *seed;
  sc->validate();
  return true;
}

RunConfig base_config(const Common& c) {
  RunConfig rc = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (!c.out.empty()) rc.out_dir = c.out;
  return rc;
}

int cmd_simulate(const Common& c, const ScenarioFlags& f) {
  std::optional<ScenarioConfig> sc;
  if (!c.config.empty()) sc = load_run_config(c.config).scenario;
  if (!apply_scenario(f, sc, c.seed)) throw ConfigError("scenario: --scenario or a config with a scenario is required");
  const auto sim = generate(*sc);
  const auto [data_path, truth_path] = write_scenario(sim, *sc, c.out.empty() ? "." : c.out);
  std::cout << data_path << '\n' << truth_path << '\n';
  return kOk;
}

struct FitFlags {
  bool strict = false;
  std::string preset;
  std::string comparison;
  std::vector<std::string> restrict;
  std::string draws_format;
};

int cmd_fit(const Common& c, const ScenarioFlags& sf, const FitFlags& ff) {
  RunConfig rc = base_config(c);
  if (!ff.preset.empty()) {
    auto p = preset(ff.preset, c.seed.value_or(1));
    rc.scenario = p.scenario;
    rc.spec = p.spec;
    rc.sigma_auto = p.sigma_auto;
  }
  apply_scenario(sf, rc.scenario, c.seed);
  if (!ff.comparison.empty()) {
    rc.spec.comparison = parse_comparison(ff.comparison);
    if (rc.spec.comparison == Comparison::association) rc.spec.exposure_model = false;
  }
  for (const auto& r : ff.restrict) apply_restriction_flag(rc.spec, r);
  if (!ff.draws_format.empty()) rc.draws_format = ff.draws_format;
  apply_sampler(c, rc.sampler);

  auto loaded = load_data(rc);
  FitOptions opt;
  if (loaded.truth && !loaded.truth->u_prime.empty()) opt.true_u_prime = loaded.truth->u_prime;
  const ModelSpec spec = resolve_sigma_estimates(rc.spec, loaded.data, rc.sigma_auto);
  const auto fit = run_fit(loaded.data, spec, rc.sampler, opt);
  write_fit_outputs(fit, rc.out_dir, rc.draws_format);
  std::cout << fit_report_text(fit);
  if (ff.strict && !fit.diagnostics.all_ok()) {
    std::cerr << "diagnostics failed (--strict)\n";
    return kFailure;
  }
  return kOk;
}

int cmd_sensitivity(const Common& c, const ScenarioFlags& sf) {
  RunConfig rc = base_config(c);
  apply_scenario(sf, rc.scenario, c.seed);
  apply_sampler(c, rc.sampler);
  const auto loaded = load_data(rc);
  const auto rows = run_sensitivity(loaded.data, rc.spec, rc.sigma_auto, rc.sweep, rc.sampler);
  const auto csv = sensitivity_csv(rows);
  fs::create_directories(rc.out_dir);
  write_text((fs::path(rc.out_dir) / "sensitivity.csv").string(), csv);
  std::cout << csv;
  return kOk;
}

int cmd_reproduce(const Common& c, const std::string& table) {
  const auto catalog = reproduce_catalog();
  bool known = false;
  for (const auto& [id, _] : catalog) known = known || id == table;
  if (!known) {
    std::cerr << "unknown table '" << table << "'; available:\n";
    for (const auto& [id, desc] : catalog) std::cerr << "  " << id << "  " << desc << '\n';
    return kUsage;
  }
  SamplerConfig s;
  apply_sampler(c, s);
  const auto report = reproduce(table, s, c.seed.value_or(1));
  const auto text = repro_report_text(report);
  std::cout << text;
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_text((fs::path(c.out) / ("reproduce_" + table + ".txt")).string(), text);
  }
  return report.all_pass() ? kOk : kReproduce;
}

int cmd_sd(const Common& c, const ScenarioFlags& sf, int B, const std::string& grouping) {
  RunConfig rc = base_config(c);
  apply_scenario(sf, rc.scenario, c.seed);
  const auto loaded = load_data(rc);
  const auto& d = loaded.data;
  std::ostringstream out;
  out << "variable,point,lo,hi\n";
  auto row = [&](const std::string& var, SdGrouping g) {
    const auto r = bootstrap_interval(d, var, g, B, c.seed.value_or(1));
    out << var << ',' << format_fixed(r.point, 4) << ',' << format_fixed(r.lo, 4) << ',' << format_fixed(r.hi, 4)
        << '\n';
    for (const auto& w : r.warnings) std::cerr << "warning: " << var << ": " << w << '\n';
    if (r.skipped > 0) std::cerr << "warning: " << var << ": " << r.skipped << " bootstrap replicates skipped\n";
  };
  const std::size_t k = static_cast<std::size_t>(d.n_exposures);
  for (std::size_t j = 0; j < k; ++j) {
    const std::string name = k == 1 ? "w" : "w" + std::to_string(j + 1);
    row(name, grouping.empty() ? SdGrouping::treated_compliers : parse_sd_grouping(grouping));
  }
  row("y", grouping.empty() ? SdGrouping::complier_vs_rest : parse_sd_grouping(grouping));
  fs::create_directories(rc.out_dir);
  write_text((fs::path(rc.out_dir) / "sd_bootstrap.csv").string(), out.str());
  std::cout << out.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian causal models for noncompliance with unmeasured confounding"};
  app.require_subcommand(1);

  Common common;
  ScenarioFlags sflags;
  FitFlags fflags;
  std::string table;
  int boot_b = 100;
  std::string grouping;

  auto* sim = app.add_subcommand("simulate", "generate a simulated dataset and its ground truth");
  add_common(sim, common);
  add_scenario_flags(sim, sflags);

  auto* fit = app.add_subcommand("fit", "fit a model and write draws, diagnostics and ATE summaries");
  add_common(fit, common);
  add_scenario_flags(fit, sflags);
  fit->add_flag("--strict", fflags.strict, "exit nonzero when convergence diagnostics fail");
  fit->add_option("--preset", fflags.preset, "named simulation fit")->check(CLI::IsMember(preset_ids()));
  fit->add_option("--comparison", fflags.comparison, "comparison model");
  fit->add_option("--restrict", fflags.restrict, "sign restriction, e.g. alpha9=nonpos");
  fit->add_option("--draws-format", fflags.draws_format, "binary or csv")->check(CLI::IsMember({"binary", "csv"}));

  auto* sens = app.add_subcommand("sensitivity", "refit under each prior override in the config's sweep");
  add_common(sens, common);
  add_scenario_flags(sens, sflags);

  auto* rep = app.add_subcommand("reproduce", "rerun a simulation table and compare with published values");
  add_common(rep, common);
  rep->add_option("table", table, "table id")->required();

  auto* sd = app.add_subcommand("sd", "pooled sample sds with bootstrap intervals");
  add_common(sd, common);
  add_scenario_flags(sd, sflags);
  sd->add_option("--bootstrap", boot_b, "bootstrap replicates")->check(CLI::Range(2, 100000));
  sd->add_option("--grouping", grouping, "complier_vs_rest, treated_compliers, treated_by_compliance, whole_sample");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*sim) return cmd_simulate(common, sflags);
    if (*fit) return cmd_fit(common, sflags, fflags);
    if (*sens) return cmd_sensitivity(common, sflags);
    if (*rep) return cmd_reproduce(common, table);
    if (*sd) return cmd_sd(common, sflags, boot_b, grouping);
  } catch (const InitializationError& e) {
    std::cerr << "sampler initialization failed: " << e.what() << '\n';
    return kSampler;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
