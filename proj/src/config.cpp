#include "cforge/config.hpp"

#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace cforge {

namespace {

using nlohmann::json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError((path.empty() ? std::string("config") : path) + ": " + msg);
}

// Field reader that rejects unknown keys once every expected key was read.
class Object {
 public:
  Object(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }
  std::string path(const std::string& k) const { return join(path_, k); }

  const json* raw(const std::string& k) {
    seen_.insert(k);
    const auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  std::optional<std::string> str(const std::string& k) {
    const json* v = raw(k);
    if (!v) return std::nullopt;
    if (!v->is_string()) fail(path(k), "expected a string");
    return v->get<std::string>();
  }
  std::optional<double> num(const std::string& k) {
    const json* v = raw(k);
    if (!v) return std::nullopt;
    if (!v->is_number()) fail(path(k), "expected a number");
    return v->get<double>();
  }
  std::optional<long long> integer(const std::string& k, long long lo, long long hi) {
    const json* v = raw(k);
    if (!v) return std::nullopt;
    if (!v->is_number_integer() && !v->is_number_unsigned()) fail(path(k), "expected an integer");
    const long long x = v->get<long long>();
    if (x < lo || x > hi) fail(path(k), "must be between " + std::to_string(lo) + " and " + std::to_string(hi));
    return x;
  }
  std::optional<bool> boolean(const std::string& k) {
    const json* v = raw(k);
    if (!v) return std::nullopt;
    if (!v->is_boolean()) fail(path(k), "expected true or false");
    return v->get<bool>();
  }
  std::optional<std::vector<std::string>> strings(const std::string& k) {
    const json* v = raw(k);
    if (!v) return std::nullopt;
    if (!v->is_array()) fail(path(k), "expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string()) fail(path(k) + "[" + std::to_string(i) + "]", "expected a string");
      out.push_back((*v)[i].get<std::string>());
    }
    return out;
  }
  std::optional<std::vector<double>> numbers(const std::string& k) {
    const json* v = raw(k);
    if (!v) return std::nullopt;
    if (v->is_number()) return std::vector<double>{v->get<double>()};
    if (!v->is_array()) fail(path(k), "expected a number or an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) fail(path(k) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      (void)v;
      if (!seen_.count(k)) fail(path(k), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
auto parse_enum(const std::string& path, const std::string& value, F parse) {
  try {
    return parse(value);
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
}

NormalPrior parse_prior(const json& j, const std::string& path) {
  Object o(j, path);
  NormalPrior p;
  p.mean = o.num("mean").value_or(0.0);
  const auto sd = o.num("sd");
  if (!sd) fail(o.path("sd"), "required");
  if (!(*sd > 0.0)) fail(o.path("sd"), "must be positive");
  p.sd = *sd;
  o.finish();
  return p;
}

std::map<std::string, NormalPrior> parse_priors(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object of {mean, sd} priors");
  std::map<std::string, NormalPrior> out;
  for (const auto& [k, v] : j.items()) out[k == "alpha9" ? "alpha_u" : k] = parse_prior(v, join(path, k));
  return out;
}

void parse_sigma_estimates(const json& j, const std::string& path, std::optional<double>& sy, std::vector<double>& sw) {
  Object o(j, path);
  sy = o.num("sigma_y");
  if (sy && !(*sy > 0.0)) fail(o.path("sigma_y"), "must be positive");
  sw = o.numbers("sigma_w").value_or(std::vector<double>{});
  for (double v : sw)
    if (!(v > 0.0)) fail(o.path("sigma_w"), "must be positive");
  o.finish();
}

CovariateInfo parse_covariate(const json& j, const std::string& path) {
  Object o(j, path);
  CovariateInfo c;
  const auto name = o.str("name");
  if (!name || name->empty()) fail(o.path("name"), "required");
  c.name = *name;
  const auto type = o.str("type").value_or("continuous");
  if (type == "categorical") {
    c.categorical = true;
    c.levels = o.strings("levels").value_or(std::vector<std::string>{});
    if (c.levels.size() < 2) fail(o.path("levels"), "a categorical covariate needs at least two levels");
    c.reference = o.str("reference").value_or(c.levels.front());
    try {
      (void)c.reference_index();
    } catch (const std::invalid_argument&) {
      fail(o.path("reference"), "'" + c.reference + "' is not one of the levels");
    }
  } else if (type != "continuous") {
    fail(o.path("type"), "expected continuous or categorical");
  }
  o.finish();
  return c;
}

void parse_data(const json& j, const std::string& path, const std::string& base_dir, RunConfig& rc) {
  Object o(j, path);
  const auto p = o.str("path");
  if (!p || p->empty()) fail(o.path("path"), "required");
  std::filesystem::path fp(*p);
  if (fp.is_relative() && !base_dir.empty()) fp = std::filesystem::path(base_dir) / fp;
  rc.data_path = fp.string();
  auto& l = rc.layout;
  l.id = o.str("id").value_or("");
  l.z = o.str("z").value_or("z");
  if (const auto w = o.strings("w")) {
    if (w->size() != 1 && w->size() != 3) fail(o.path("w"), "expected one or three exposure columns");
    l.w = *w;
  }
  l.y = o.str("y").value_or("y");
  l.compliance = o.str("compliance").value_or("");
  if (const auto s = o.str("sidedness")) l.sidedness = parse_enum(o.path("sidedness"), *s, parse_sidedness);
  if (const json* cov = o.raw("covariates")) {
    if (!cov->is_array()) fail(o.path("covariates"), "expected an array");
    for (std::size_t i = 0; i < cov->size(); ++i)
      l.covariates.push_back(parse_covariate((*cov)[i], o.path("covariates") + "[" + std::to_string(i) + "]"));
  }
  o.finish();
}

ScenarioConfig parse_scenario(const json& j, const std::string& path) {
  Object o(j, path);
  ScenarioConfig c;
  const auto id = o.integer("id", 1, 7);
  if (!id) fail(o.path("id"), "required");
  c.scenario = static_cast<int>(*id);
  if (c.scenario == 5) c.confounder = ConfounderDist::lognormal;
  if (const auto e = o.str("effect")) {
    if (*e != "big" && *e != "small") fail(o.path("effect"), "expected big or small");
    c.big_effect = *e == "big";
  }
  if (const auto s = o.num("never_taker_share")) {
    if (!(*s >= 0.0 && *s < 1.0)) fail(o.path("never_taker_share"), "must lie in [0, 1)");
    c.never_taker_share = *s;
  }
  if (const auto s = o.str("confounder")) c.confounder = parse_enum(o.path("confounder"), *s, parse_confounder_dist);
  if (const auto s = o.num("lognormal_meanlog")) c.lognormal_meanlog = *s;
  if (const auto s = o.num("lognormal_sdlog")) {
    if (!(*s > 0.0)) fail(o.path("lognormal_sdlog"), "must be positive");
    c.lognormal_sdlog = *s;
  }
  if (const auto n = o.integer("n", 2, 10000000)) c.n = static_cast<int>(*n);
  if (const auto s = o.integer("seed", 0, std::numeric_limits<long long>::max())) c.seed = static_cast<std::uint64_t>(*s);
  o.finish();
  return c;
}

void parse_model(const json& j, const std::string& path, RunConfig& rc) {
  Object o(j, path);
  ModelSpec& s = rc.spec;
  if (const auto v = o.str("family")) s.family = parse_enum(o.path("family"), *v, parse_family);
  if (const auto v = o.integer("n_exposures", 1, 3)) {
    if (*v == 2) fail(o.path("n_exposures"), "must be 1 or 3");
    s.n_exposures = static_cast<int>(*v);
  }
  if (const auto v = o.str("unmeasured")) s.unmeasured = parse_enum(o.path("unmeasured"), *v, parse_unmeasured);
  if (const auto v = o.str("reparam")) s.reparam = parse_enum(o.path("reparam"), *v, parse_reparam);
  if (const auto v = o.integer("ratio_anchor", 0, std::numeric_limits<int>::max()))
    s.ratio_anchor = static_cast<std::size_t>(*v);
  if (const auto v = o.boolean("control_is_natural_zero")) s.control_is_natural_zero = *v;
  if (const auto v = o.str("comparison")) s.comparison = parse_enum(o.path("comparison"), *v, parse_comparison);
  if (const auto v = o.str("compliance"))
    s.compliance = parse_enum(o.path("compliance"), *v, parse_compliance_model);
  if (const auto v = o.boolean("exposure_model")) s.exposure_model = *v;
  if (const auto v = o.num("exposure_support_lower")) s.exposure_support_lower = *v;
  if (const auto v = o.strings("outcome_covariates")) s.outcome_covariates = *v;
  if (const auto v = o.strings("exposure_covariates")) s.exposure_covariates = *v;
  if (const auto v = o.strings("compliance_covariates")) s.compliance_covariates = *v;
  if (const auto v = o.strings("covariate_models")) s.covariate_models = *v;
  if (const auto v = o.boolean("standardize")) s.standardize = *v;
  if (const json* v = o.raw("latent_in_exposure")) {
    if (!v->is_array()) fail(o.path("latent_in_exposure"), "expected an array of booleans");
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_boolean()) fail(o.path("latent_in_exposure") + "[" + std::to_string(i) + "]", "expected a boolean");
      s.latent_in_exposure.push_back((*v)[i].get<bool>());
    }
  }
  if (const json* v = o.raw("priors")) s.priors = parse_priors(*v, o.path("priors"));
  if (const json* v = o.raw("sign_restrictions")) {
    if (!v->is_object()) fail(o.path("sign_restrictions"), "expected an object");
    for (const auto& [k, r] : v->items()) {
      const auto p = join(o.path("sign_restrictions"), k);
      if (!r.is_string()) fail(p, "expected free, nonneg or nonpos");
      s.sign_restrictions[k == "alpha9" ? "alpha_u" : k] = parse_enum(p, r.get<std::string>(), parse_sign_restriction);
    }
  }
  if (const auto v = o.str("sigma_mode")) {
    if (*v == "sampled")
      s.sigma_mode = SigmaMode::sampled;
    else if (*v == "informative")
      s.sigma_mode = SigmaMode::informative;
    else
      fail(o.path("sigma_mode"), "expected sampled or informative");
  }
  if (const auto v = o.num("informative_sd")) {
    if (!(*v > 0.0)) fail(o.path("informative_sd"), "must be positive");
    s.informative_sd = *v;
  }
  if (const json* v = o.raw("sigma_estimates")) {
    if (v->is_string()) {
      if (v->get<std::string>() != "auto") fail(o.path("sigma_estimates"), "expected \"auto\" or an object");
      rc.sigma_auto = true;
    } else {
      parse_sigma_estimates(*v, o.path("sigma_estimates"), s.sigma_y_estimate, s.sigma_w_estimates);
    }
  }
  if (const auto v = o.str("two_latent_mode")) {
    if (*v == "drop_residual")
      s.two_latent_mode = TwoLatentMode::drop_residual;
    else if (*v == "residual_intercept")
      s.two_latent_mode = TwoLatentMode::residual_intercept;
    else
      fail(o.path("two_latent_mode"), "expected drop_residual or residual_intercept");
  }
  if (s.unmeasured == Unmeasured::two_latent) s.confounders_combined = true;
  if (const auto v = o.num("dirichlet_concentration")) {
    if (!(*v > 0.0)) fail(o.path("dirichlet_concentration"), "must be positive");
    s.dirichlet_concentration = *v;
  }
  o.finish();

  if (s.sigma_mode == SigmaMode::informative && !rc.sigma_auto && !s.sigma_y_estimate)
    fail(o.path("sigma_estimates"), "informative sigma mode needs estimates or \"auto\"");
  if (!s.latent_in_exposure.empty() && static_cast<int>(s.latent_in_exposure.size()) != s.n_exposures)
    fail(o.path("latent_in_exposure"), "needs one flag per exposure");
  try {
    if (!rc.sigma_auto) s.validate();
  } catch (const SpecError& e) {
    fail(path, e.what());
  }
}

void parse_sampler(const json& j, const std::string& path, SamplerConfig& c) {
  Object o(j, path);
  if (const auto v = o.integer("chains", 1, 64)) c.chains = static_cast<int>(*v);
  if (const auto v = o.integer("iterations", 2, 10000000)) c.iterations = static_cast<int>(*v);
  if (const auto v = o.integer("warmup", 0, 10000000)) c.warmup = static_cast<int>(*v);
  if (const auto v = o.num("target_accept")) c.target_accept = *v;
  if (const auto v = o.integer("max_tree_depth", 1, 30)) c.max_tree_depth = static_cast<int>(*v);
  if (const auto v = o.integer("seed", 0, std::numeric_limits<long long>::max())) c.seed = static_cast<std::uint64_t>(*v);
  o.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON (") + e.what() + ")");
  }
  RunConfig rc;
  Object root(j, "");
  if (const json* d = root.raw("data")) parse_data(*d, "data", base_dir, rc);
  if (const json* s = root.raw("scenario")) rc.scenario = parse_scenario(*s, "scenario");
  if (rc.data_path && rc.scenario) fail("data", "give either data or scenario, not both");
  if (const json* m = root.raw("model")) parse_model(*m, "model", rc);
  if (const json* s = root.raw("sampler")) parse_sampler(*s, "sampler", rc.sampler);
  if (const json* out = root.raw("output")) {
    Object o(*out, "output");
    rc.out_dir = o.str("dir").value_or(rc.out_dir);
    rc.draws_format = o.str("draws_format").value_or(rc.draws_format);
    if (rc.draws_format != "binary" && rc.draws_format != "csv") fail(o.path("draws_format"), "expected binary or csv");
    o.finish();
  }
  if (const json* sw = root.raw("sensitivity")) {
    if (!sw->is_array()) fail("sensitivity", "expected an array of overrides");
    for (std::size_t i = 0; i < sw->size(); ++i) {
      const std::string p = "sensitivity[" + std::to_string(i) + "]";
      Object o((*sw)[i], p);
      SensitivityOverride ov;
      ov.label = o.str("label").value_or("override " + std::to_string(i + 1));
      if (const json* pr = o.raw("priors")) ov.priors = parse_priors(*pr, o.path("priors"));
      if (const json* se = o.raw("sigma_estimates"))
        parse_sigma_estimates(*se, o.path("sigma_estimates"), ov.sigma_y_estimate, ov.sigma_w_estimates);
      o.finish();
      rc.sweep.push_back(std::move(ov));
    }
  }
  root.finish();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), std::filesystem::path(path).parent_path().string());
}

void apply_restriction_flag(ModelSpec& spec, const std::string& flag) {
  const auto eq = flag.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--restrict: expected BLOCK=free|nonneg|nonpos");
  std::string block = flag.substr(0, eq);
  if (block == "alpha9") block = "alpha_u";
  try {
    spec.sign_restrictions[block] = parse_sign_restriction(flag.substr(eq + 1));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("--restrict: ") + e.what());
  }
}

}  // namespace cforge
