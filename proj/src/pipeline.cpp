#include "cforge/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "cforge/io.hpp"
#include "cforge/sd_estimator.hpp"
#include "json.hpp"

namespace cforge {

const AteSummary& FitResult::ate(const std::string& name) const {
  for (const auto& a : ates)
    if (a.name == name) return a;
  throw std::out_of_range("fit has no ATE named '" + name + "'");
}

ModelSpec resolve_sigma_estimates(ModelSpec spec, const Dataset& data, bool sigma_auto) {
  if (!sigma_auto) return spec;
  const auto est = sample_sigma_estimates(data);
  spec.sigma_mode = SigmaMode::informative;
  spec.sigma_y_estimate = est.sigma_y;
  spec.sigma_w_estimates = est.sigma_w;
  return spec;
}

namespace {

std::optional<double> prior_sd_of(const LogPosterior& model, const std::string& block) {
  const auto* b = model.space().find(block);
  if (!b || b->prior.kind != PriorSpec::Kind::normal) return std::nullopt;
  return b->prior.sd;
}

std::vector<std::string> scalar_names(const PosteriorDraws& d, const std::string& block) {
  std::vector<std::string> out;
  if (d.index_of(block)) out.push_back(block);
  for (std::size_t i = 1; d.index_of(block + "[" + std::to_string(i) + "]"); ++i)
    out.push_back(block + "[" + std::to_string(i) + "]");
  return out;
}

IdentifiabilityReport identifiability(const FitResult& f, const FitOptions& opt) {
  IdentifiabilityReport r;
  const auto& d = f.draws;
  const auto sw = scalar_names(d, "sigma_w");
  if (!sw.empty() && d.index_of("sigma_y")) r.sd_correlation = sd_pair_correlation(d.pooled(sw.front()), d.pooled("sigma_y"));
  for (const char* block : {"alpha_u", "beta_u", "alpha_z"}) {
    const auto sd = prior_sd_of(*f.model, block);
    for (const auto& n : scalar_names(d, block)) {
      const auto x = d.pooled(n);
      if (x.size() >= 500) r.bimodality.push_back({n, bimodality_check(x)});
      if (sd) r.zero_estimates.push_back({n, zero_estimate(x, *sd)});
    }
  }
  if (d.index_of("u_prime[1]")) {
    std::optional<std::vector<double>> truth;
    const auto& rows = f.model->latent_rows();
    if (opt.true_u_prime && f.model->spec().reparam == Reparam::random_intercept) {
      truth.emplace();
      for (std::size_t row : rows) truth->push_back(opt.true_u_prime->at(row));
    }
    const double prior_sd = prior_sd_of(*f.model, "u_prime").value_or(3.0);
    if (f.model->spec().reparam == Reparam::random_intercept) r.u_fit = u_fit_report(d, "u_prime", truth, prior_sd);
  }
  return r;
}

}  // namespace

FitResult run_fit(const Dataset& data, const ModelSpec& spec, const SamplerConfig& sampler, const FitOptions& opt) {
  FitResult f;
  f.model = build_model(data, spec);
  f.warnings = f.model->warnings();
  const auto model = f.model;
  f.draws = nuts_run(model->function(), model->space(), sampler);
  const auto dn = model->derived_names();
  if (!dn.empty()) f.draws.add_derived(dn, [&](std::span<const double> row) { return model->derived(row); });
  f.diagnostics = diagnose(f.draws);
  f.ates = extract_ate(f.draws, *model);
  for (const auto& a : f.ates)
    if (a.heavy_tailed)
      f.warnings.push_back(a.name + ": first-stage coefficient draws change sign; the ratio is heavy-tailed, "
                                    "report the median and interval");
  if (ratio_reanchor_advised(f.draws))
    f.warnings.push_back("beta_u interval covers 0; pin a different U' entry to 1 (ratio_anchor)");
  if (f.diagnostics.divergences > 0)
    f.warnings.push_back(std::to_string(f.diagnostics.divergences) + " divergent transitions after warmup");
  if (opt.identifiability) {
    f.identifiability = identifiability(f, opt);
    for (const auto& [name, b] : f.identifiability.bimodality)
      if (b.suspected_bimodal) f.warnings.push_back(name + ": suspected bimodal posterior (" + b.warning + ")");
    for (const auto& [name, z] : f.identifiability.zero_estimates)
      if (z) f.warnings.push_back(name + ": estimated as zero; the causal model degenerates");
    if (f.identifiability.sd_correlation && f.identifiability.sd_correlation->flagged)
      f.warnings.push_back("sigma_w and sigma_y draws are correlated (|r| > 0.1)");
    if (f.identifiability.u_fit && f.identifiability.u_fit->constant_flag)
      f.warnings.push_back("U' posterior means are nearly constant across subjects");
  }
  return f;
}

namespace {

nlohmann::ordered_json num(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

std::string identifiability_json(const FitResult& f) {
  nlohmann::ordered_json j;
  const auto& r = f.identifiability;
  if (r.sd_correlation) {
    j["sd_pair_correlation"] = {{"r", num(r.sd_correlation->r)},
                                {"flagged", r.sd_correlation->flagged},
                                {"degenerate", r.sd_correlation->degenerate}};
  }
  auto& bm = j["bimodality"];
  bm = nlohmann::ordered_json::array();
  for (const auto& [name, b] : r.bimodality) {
    bm.push_back({{"parameter", name},
                  {"suspected_bimodal", b.suspected_bimodal},
                  {"bic_improvement", num(b.bic_improvement)},
                  {"separation", num(b.separation)},
                  {"minor_weight", num(b.minor_weight)},
                  {"converged", b.converged}});
  }
  auto& ze = j["zero_estimates"];
  ze = nlohmann::ordered_json::array();
  for (const auto& [name, z] : r.zero_estimates) ze.push_back({{"parameter", name}, {"zero", z}});
  if (r.u_fit) {
    j["u_fit"] = {{"spread", num(r.u_fit->spread)},
                  {"constant_flag", r.u_fit->constant_flag},
                  {"rmse", r.u_fit->rmse ? num(*r.u_fit->rmse) : nlohmann::ordered_json(nullptr)}};
  }
  j["warnings"] = f.warnings;
  return j.dump(2) + "\n";
}

}  // namespace

void write_fit_outputs(const FitResult& f, const std::string& dir, const std::string& draws_format) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path p(dir);
  if (draws_format == "csv")
    write_draws_csv((p / "draws.csv").string(), f.draws);
  else
    write_draws_binary((p / "draws.bin").string(), f.draws);
  write_text((p / "diagnostics.json").string(), diagnostics_json(f.diagnostics));
  write_text((p / "diagnostics.csv").string(), diagnostics_csv(f.diagnostics));
  write_text((p / "ate_summary.csv").string(), ate_csv(f.ates));
  write_text((p / "identifiability.json").string(), identifiability_json(f));
}

std::string fit_report_text(const FitResult& f) {
  std::ostringstream out;
  for (const auto& a : f.ates)
    out << a.name << ": " << format_fixed(a.mean, 3) << " (" << format_fixed(a.q025, 3) << ", "
        << format_fixed(a.q975, 3) << ")" << (a.heavy_tailed ? " [heavy-tailed; median " + format_fixed(a.median, 3) + "]" : "")
        << '\n';
  const auto& d = f.diagnostics;
  out << "divergences: " << d.divergences << ", max-depth hits: " << d.depth_saturations << '\n';
  out << "rhat_ok=" << d.rhat_ok << " mcse_ok=" << d.mcse_ok << " ess_ok=" << d.ess_ok << '\n';
  for (const auto& w : f.warnings) out << "warning: " << w << '\n';
  return out.str();
}

LoadedData load_data(const RunConfig& rc) {
  LoadedData out;
  if (rc.scenario) {
    auto sim = generate(*rc.scenario);
    out.data = std::move(sim.data);
    out.truth = std::move(sim.truth);
    return out;
  }
  if (!rc.data_path) throw ConfigError("data: a dataset path or a scenario is required");
  CsvLayout layout = rc.layout;
  out.data = read_dataset_csv(*rc.data_path, layout);
  return out;
}

std::vector<SensitivityRow> run_sensitivity(const Dataset& data, const ModelSpec& base, bool sigma_auto,
                                            const std::vector<SensitivityOverride>& sweep,
                                            const SamplerConfig& sampler) {
  std::vector<SensitivityRow> rows;
  std::vector<SensitivityOverride> all{{"base", {}, std::nullopt, {}}};
  all.insert(all.end(), sweep.begin(), sweep.end());
  const std::string ate_name = base.n_exposures == 1 ? "e_ate" : "e_ate[1]";
  for (const auto& ov : all) {
    SensitivityRow row;
    row.label = ov.label;
    try {
      ModelSpec s = resolve_sigma_estimates(base, data, sigma_auto);
      for (const auto& [k, p] : ov.priors) s.priors[k] = p;
      if (ov.sigma_y_estimate) s.sigma_y_estimate = ov.sigma_y_estimate;
      if (!ov.sigma_w_estimates.empty()) s.sigma_w_estimates = ov.sigma_w_estimates;
      FitOptions opt;
      opt.identifiability = false;
      const auto f = run_fit(data, s, sampler, opt);
      row.ate = f.ate(ate_name);
      row.ok = f.diagnostics.all_ok() && f.diagnostics.divergences == 0;
      if (!row.ok) row.note = "diagnostics failed";
      if (ov.priors.size() == 1) {
        const auto& [block, prior] = *ov.priors.begin();
        const auto* b = f.model->space().find(block);
        if (b && b->length == 1) row.s_p = prior_sensitivity(f.draws.pooled(block), prior.sd);
      }
    } catch (const std::exception& e) {
      row.ok = false;
      row.note = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sensitivity_csv(const std::vector<SensitivityRow>& rows) {
  std::ostringstream out;
  out << "label,mean,q2.5,q97.5,s_p\n";
  for (const auto& r : rows) {
    out << r.label << ',';
    if (!r.ok) {
      out << "-,-,-,-\n";
      continue;
    }
    out << format_fixed(r.ate.mean, 2) << ',' << format_fixed(r.ate.q025, 2) << ',' << format_fixed(r.ate.q975, 2)
        << ',' << (r.s_p ? format_fixed(*r.s_p, 3) : "") << '\n';
  }
  return out.str();
}

// Presets ----------------------------------------------------------------

namespace {

ModelSpec outcome_only() {
  ModelSpec s;
  s.exposure_model = false;
  return s;
}

ModelSpec latent_spec() {
  ModelSpec s;
  s.unmeasured = Unmeasured::one_latent;
  s.reparam = Reparam::random_intercept;
  return s;
}

struct PresetDef {
  const char* id;
  const char* description;
};

constexpr PresetDef kPresets[] = {
    {"sim1_big", "scenario 1, effect 2, simplest framework"},
    {"sim1_small", "scenario 1, effect 0.1, simplest framework"},
    {"sim2_big_nt10_simplest", "scenario 2, effect 2, 10% never-takers, simplest framework"},
    {"sim2_small_nt10_simplest", "scenario 2, effect 0.1, 10% never-takers, simplest framework"},
    {"sim2_big_nt40_simplest", "scenario 2, effect 2, 40% never-takers, simplest framework"},
    {"sim2_small_nt40_simplest", "scenario 2, effect 0.1, 40% never-takers, simplest framework"},
    {"sim2_big_nt10_variation", "scenario 2, effect 2, 10% never-takers, additive-G variation"},
    {"sim2_small_nt10_variation", "scenario 2, effect 0.1, 10% never-takers, additive-G variation"},
    {"sim2_big_nt40_variation", "scenario 2, effect 2, 40% never-takers, additive-G variation"},
    {"sim2_small_nt40_variation", "scenario 2, effect 0.1, 40% never-takers, additive-G variation"},
    {"sim3_big_simplest", "scenario 3, big effects, simplest framework"},
    {"sim3_small_simplest", "scenario 3, small effects, simplest framework"},
    {"sim3_big_variation", "scenario 3, big effects, GxW mixture variation"},
    {"sim3_small_variation", "scenario 3, small effects, GxW mixture variation"},
    {"sim4_normal", "scenario 4, normal confounder, random intercept, informative sigmas"},
    {"sim4_lognormal", "scenario 4, lognormal confounder, random intercept, informative sigmas"},
    {"sim4_poisson", "scenario 4, poisson confounder, random intercept, informative sigmas"},
    {"sim5", "scenario 5 (lognormal confounder), random intercept, informative sigmas"},
    {"sim6", "scenario 6, measured plus unmeasured confounder"},
    {"sim6_ri_outcome", "scenario 6, random-intercept outcome model"},
    {"sim7_unconstrained", "scenario 7, combined U', alpha_u unrestricted"},
    {"sim7_solution1", "scenario 7, combined U', alpha_u <= 0"},
    {"sim7_solution2", "scenario 7, combined U', alpha_u >= 0"},
    {"sim7_association", "scenario 7, association model"},
};

}  // namespace

std::vector<std::string> preset_ids() {
  std::vector<std::string> out;
  for (const auto& p : kPresets) out.push_back(p.id);
  return out;
}

Preset preset(const std::string& id, std::uint64_t seed) {
  Preset p;
  p.id = id;
  for (const auto& d : kPresets)
    if (id == d.id) p.description = d.description;
  if (p.description.empty()) throw std::invalid_argument("unknown preset '" + id + "'");
  auto& sc = p.scenario;
  sc.seed = seed;
  auto has = [&](const char* s) { return id.find(s) != std::string::npos; };
  sc.big_effect = !has("_small");

  if (has("sim1")) {
    sc.scenario = 1;
    p.spec = outcome_only();
  } else if (has("sim2")) {
    sc.scenario = 2;
    sc.never_taker_share = has("nt40") ? 0.4 : 0.1;
    if (has("simplest")) {
      p.spec = outcome_only();
    } else {
      p.spec.family = Family::variation_additive_g;
      p.spec.compliance = ComplianceModel::bernoulli;
      p.spec.exposure_support_lower = 0.5;
    }
  } else if (has("sim3")) {
    sc.scenario = 3;
    if (has("simplest")) {
      p.spec = outcome_only();
    } else {
      p.spec.family = Family::variation_gxw;
      p.spec.compliance = ComplianceModel::dirichlet;
      p.spec.exposure_support_lower = 0.5;
    }
  } else if (has("sim4") || id == "sim5") {
    sc.scenario = id == "sim5" ? 5 : 4;
    sc.confounder = (has("lognormal") || id == "sim5") ? ConfounderDist::lognormal
                                                         : (has("poisson") ? ConfounderDist::poisson : ConfounderDist::normal);
    p.spec = latent_spec();
    p.sigma_auto = true;
  } else if (has("sim6")) {
    sc.scenario = 6;
    p.spec = latent_spec();
    p.spec.outcome_covariates = {"M"};
    p.spec.exposure_covariates = {"M"};
    if (has("ri_outcome")) p.spec.comparison = Comparison::random_intercept_outcome;
    p.sigma_auto = true;
  } else if (has("sim7")) {
    sc.scenario = 7;
    if (has("association")) {
      p.spec = outcome_only();
      p.spec.unmeasured = Unmeasured::two_latent;
      p.spec.comparison = Comparison::association;
    } else {
      p.spec = latent_spec();
      p.spec.unmeasured = Unmeasured::two_latent;
      p.spec = combine_two_confounders(p.spec);
      p.sigma_auto = true;
      if (has("solution1")) {
        p.spec.sign_restrictions["alpha_u"] = SignRestriction::nonpos;
        p.spec.priors["alpha_u"] = {-0.5, 1.0};
      } else if (has("solution2")) {
        p.spec.sign_restrictions["alpha_u"] = SignRestriction::nonneg;
        p.spec.priors["alpha_u"] = {1.0, 0.5};
      }
    }
  }
  return p;
}

FitResult run_preset(const Preset& p, const SamplerConfig& sampler) {
  auto sim = generate(p.scenario);
  const ModelSpec spec = resolve_sigma_estimates(p.spec, sim.data, p.sigma_auto);
  FitOptions opt;
  if (!sim.truth.u_prime.empty()) opt.true_u_prime = sim.truth.u_prime;
  return run_fit(sim.data, spec, sampler, opt);
}

// Reproduction -----------------------------------------------------------

bool ReproReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return !checks.empty();
}

std::vector<std::pair<std::string, std::string>> reproduce_catalog() {
  return {
      {"sim1", "scenario 1, simplest framework, big and small effects"},
      {"sim2", "scenario 2, simplest framework and additive-G variation, four cells"},
      {"sim3", "scenario 3, two-sided noncompliance, simplest framework vs GxW mixture"},
      {"sim4", "scenario 4, normal confounder with informative sample-sd priors"},
      {"sim4_distributions", "scenario 4, normal / lognormal / poisson confounders"},
      {"sim6", "scenario 6, measured confounder, structural and random-intercept outcome models"},
      {"sim7", "scenario 7, two confounders: bimodality and two posterior solutions"},
  };
}

namespace {

std::string interval(const AteSummary& a) {
  return format_fixed(a.mean, 2) + " (" + format_fixed(a.q025, 2) + ", " + format_fixed(a.q975, 2) + ")";
}

ReproCheck within(const std::string& label, const std::string& paper, const AteSummary& a, double target, double tol) {
  return {label, paper, interval(a), "|mean - " + format_fixed(target, 2) + "| <= " + format_fixed(tol, 2),
          std::fabs(a.mean - target) <= tol};
}

}  // namespace

ReproReport reproduce(const std::string& table, const SamplerConfig& sampler, std::uint64_t seed) {
  ReproReport rep;
  rep.table = table;
  auto fit = [&](const std::string& id) { return run_preset(preset(id, seed), sampler); };
  auto& c = rep.checks;

  if (table == "sim1") {
    const auto big = fit("sim1_big");
    c.push_back(within("big effect e_ate", "2.00 (1.96, 2.04)", big.ate(), 2.0, 0.10));
    c.push_back({"big effect interval covers 2", "2.00 (1.96, 2.04)", interval(big.ate()), "q2.5 <= 2 <= q97.5",
                 big.ate().q025 <= 2.0 && 2.0 <= big.ate().q975});
    const auto small = fit("sim1_small");
    c.push_back(within("small effect e_ate", "0.10 (0.05, 0.14)", small.ate(), 0.10, 0.05));
  } else if (table == "sim2") {
    struct Cell {
      const char* tag;
      double ate, p;
      const char* paper_p;
    };
    for (const Cell& cell : {Cell{"big_nt10", 2.0, 0.9, "0.92 (0.88, 0.95)"}, Cell{"small_nt10", 0.1, 0.9, "0.91 (0.88, 0.94)"},
                             Cell{"big_nt40", 2.0, 0.6, "0.63 (0.57, 0.68)"}, Cell{"small_nt40", 0.1, 0.6, "-"}}) {
      const std::string tag = cell.tag;
      const auto s = fit("sim2_" + tag + "_simplest");
      c.push_back(within(tag + " simplest e_ate", "-", s.ate(), cell.ate, 0.15));
      const auto v = fit("sim2_" + tag + "_variation");
      c.push_back(within(tag + " variation e_ate", "-", v.ate(), cell.ate, 0.15));
      const auto pd = v.draws.pooled("p");
      AteSummary ps{"p", mean(pd), sd(pd), quantile(pd, 0.025), quantile(pd, 0.975), quantile(pd, 0.5), false};
      c.push_back(within(tag + " variation p", cell.paper_p, ps, cell.p, 0.05));
    }
  } else if (table == "sim3") {
    const auto s = fit("sim3_big_simplest");
    c.push_back({"simplest e_ate between subgroup effects", "2.42 (2.37, 2.47)", interval(s.ate()), "2.0 < mean < 2.5",
                 s.ate().mean > 2.0 && s.ate().mean < 2.5});
    const auto v = fit("sim3_big_variation");
    c.push_back(within("variation complier e_ate", "2.47 (2.42, 2.52)", v.ate("e_ate_co"), 2.5, 0.10));
  } else if (table == "sim4" || table == "sim4_distributions") {
    const auto n = fit("sim4_normal");
    const auto& a = n.ate();
    c.push_back({"normal: interval covers 2", "2.07 (1.93, 2.20)", interval(a), "q2.5 <= 2 <= q97.5",
                 a.q025 <= 2.0 && 2.0 <= a.q975});
    c.push_back({"normal: mean in [1.90, 2.25]", "2.07 (1.93, 2.20)", interval(a), "1.90 <= mean <= 2.25",
                 a.mean >= 1.90 && a.mean <= 2.25});
    if (table == "sim4") {
      const auto& spec = n.model->spec();
      const double sy = n.diagnostics.at("sigma_y").mean;
      const double sw = n.diagnostics.at("sigma_w").mean;
      c.push_back({"sigma_y equals its prior mean", "1.93 (1.91, 1.94)",
                   format_fixed(sy, 3) + " vs " + format_fixed(*spec.sigma_y_estimate, 3), "|diff| <= 0.02",
                   std::fabs(sy - *spec.sigma_y_estimate) <= 0.02});
      c.push_back({"sigma_w equals its prior mean", "1.38 (1.36, 1.40)",
                   format_fixed(sw, 3) + " vs " + format_fixed(spec.sigma_w_estimates.front(), 3), "|diff| <= 0.02",
                   std::fabs(sw - spec.sigma_w_estimates.front()) <= 0.02});
      const auto& r = n.identifiability.sd_correlation;
      c.push_back({"sigma pair correlation", "no correlation", r ? format_fixed(r->r, 3) : "n/a", "|r| < 0.1",
                   r && std::fabs(r->r) < 0.1});
    } else {
      const auto l = fit("sim4_lognormal");
      c.push_back({"lognormal: biased below 2", "1.46 (1.33, 1.59)", interval(l.ate()), "mean <= 1.75",
                   l.ate().mean <= 1.75});
      const auto p = fit("sim4_poisson");
      c.push_back(within("poisson e_ate", "1.72 (1.63, 1.82)", p.ate(), 1.72, 0.25));
    }
  } else if (table == "sim6") {
    const auto s = fit("sim6");
    c.push_back(within("structural model e_ate", "1.88 (1.57, 2.23)", s.ate(), 1.88, 0.30));
    const auto r = fit("sim6_ri_outcome");
    c.push_back(within("random-intercept outcome e_ate", "2.11 (1.82, 2.41)", r.ate(), 2.11, 0.30));
  } else if (table == "sim7") {
    const auto u = fit("sim7_unconstrained");
    bool bimodal = false;
    for (const auto& [name, b] : u.identifiability.bimodality)
      if (name == "alpha_u") bimodal = b.suspected_bimodal;
    c.push_back({"unconstrained alpha_u bimodal", "bimodal", bimodal ? "flagged" : "not flagged", "suspected_bimodal",
                 bimodal});
    const auto s1 = fit("sim7_solution1");
    const auto s2 = fit("sim7_solution2");
    const auto as = fit("sim7_association");
    c.push_back(within("solution 1 (alpha_u <= 0)", "1.92 (1.59, 2.24)", s1.ate(), 1.92, 0.20));
    c.push_back(within("association", "1.83 (1.68, 1.98)", as.ate(), 1.83, 0.20));
    c.push_back(within("solution 2 (alpha_u >= 0)", "1.44 (1.10, 1.79)", s2.ate(), 1.44, 0.20));
    c.push_back({"ordering", "1.92 > 1.83 > 1.44",
                 format_fixed(s1.ate().mean, 2) + " > " + format_fixed(as.ate().mean, 2) + " > " +
                     format_fixed(s2.ate().mean, 2),
                 "solution 1 > association > solution 2",
                 s1.ate().mean > as.ate().mean && as.ate().mean > s2.ate().mean});
  } else {
    throw std::invalid_argument("unknown table '" + table + "'");
  }
  return rep;
}

std::string repro_report_text(const ReproReport& r) {
  std::ostringstream out;
  out << "table " << r.table << '\n';
  for (const auto& c : r.checks)
    out << (c.pass ? "PASS" : "FAIL") << "  " << c.label << ": paper " << c.paper << ", reproduced " << c.reproduced
        << ", rule " << c.tolerance << '\n';
  out << (r.all_pass() ? "all checks passed" : "some checks failed") << '\n';
  return out.str();
}

}  // namespace cforge
