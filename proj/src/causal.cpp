#include "cforge/causal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "cforge/diagnostics.hpp"
#include "cforge/io.hpp"

namespace cforge {

int h_interaction(int z, Compliance g, Sidedness sidedness, bool natural_zero) {
  if (g == Compliance::unknown) throw std::logic_error("h_interaction: compliance must be resolved or marginalized");
  if (natural_zero) return (z == 0 && g == Compliance::complier) ? 0 : 1;
  if (sidedness == Sidedness::one_sided) return (z == 1 && g == Compliance::complier) ? 1 : 0;
  const bool takes = g == Compliance::complier || g == Compliance::always_taker;
  return ((z == 1 && takes) || (z == 0 && g == Compliance::always_taker)) ? 1 : 0;
}

double compliance_code(Compliance g, Sidedness sidedness) {
  if (sidedness == Sidedness::one_sided) return g == Compliance::complier ? 1.0 : 0.0;
  switch (g) {
    case Compliance::never_taker: return 1.0;
    case Compliance::always_taker: return 2.0;
    case Compliance::complier: return 3.0;
    case Compliance::unknown: break;
  }
  throw std::logic_error("compliance_code: unknown class");
}

double LogPosterior::log_density(std::span<const double> theta, std::span<double> grad) const {
  thread_local Tape tape;
  thread_local std::vector<Var> in;
  tape.clear();
  in.clear();
  for (double x : theta) in.push_back(tape.input(x));
  const Var lp = eval(tape, in, true);
  const auto& adj = tape.backward(lp);
  for (std::size_t i = 0; i < in.size(); ++i) grad[i] = adj[in[i].idx];
  return lp.val;
}

double LogPosterior::log_density(std::span<const double> theta) const {
  std::vector<Var> in(theta.begin(), theta.end());
  thread_local Tape tape;
  tape.clear();
  return eval(tape, in, true).val;
}

double LogPosterior::log_likelihood(std::span<const double> theta) const {
  std::vector<Var> in(theta.begin(), theta.end());
  thread_local Tape tape;
  tape.clear();
  return eval(tape, in, false).val;
}

LogDensityFn LogPosterior::function() const {
  return [this](std::span<const double> theta, std::span<double> grad) { return log_density(theta, grad); };
}

namespace {

constexpr int kConstant = -1;
constexpr int kAnchor = -2;

struct Slot {
  double value = 0.0;
  int param = kConstant;
};

inline Var get(const Slot& s, std::span<const Var> th) { return s.param < 0 ? Var(s.value) : th[s.param]; }

// Accumulates c + sum(a_i) + sum(a_j * b_j) as a single tape node.
class Linear {
 public:
  void reset(double c = 0.0) {
    value_ = c;
    ops_.clear();
    partials_.clear();
  }
  void add(const Var& a) {
    value_ += a.val;
    if (!a.is_constant()) {
      ops_.push_back(a);
      partials_.push_back(1.0);
    }
  }
  void mul(const Var& a, const Var& b) {
    value_ += a.val * b.val;
    if (!a.is_constant()) {
      ops_.push_back(a);
      partials_.push_back(b.val);
    }
    if (!b.is_constant()) {
      ops_.push_back(b);
      partials_.push_back(a.val);
    }
  }
  Var done(Tape& tape) const {
    if (ops_.empty()) return Var(value_);
    return tape.push(OpKind::sum, value_, ops_, partials_);
  }

 private:
  double value_ = 0.0;
  std::vector<Var> ops_;
  std::vector<double> partials_;
};

struct Column {
  std::string name;
  int source = 0;   // covariate index in the dataset
  int level = -1;   // dummy level for categorical covariates
  double center = 0.0;
  double scale = 1.0;
};

struct Design {
  std::vector<Column> columns;
  std::map<std::string, std::vector<int>> by_covariate;

  std::vector<int> columns_for(const std::vector<std::string>& names) const {
    std::vector<int> out;
    for (const auto& n : names) {
      const auto& cols = by_covariate.at(n);
      out.insert(out.end(), cols.begin(), cols.end());
    }
    return out;
  }
  std::vector<std::string> names_for(const std::vector<int>& cols) const {
    std::vector<std::string> out;
    for (int c : cols) out.push_back(columns[c].name);
    return out;
  }
};

Design build_design(const Dataset& data, const std::vector<std::vector<std::string>>& uses, bool standardize,
                    std::vector<Standardization>& record) {
  Design d;
  for (const auto& list : uses) {
    for (const auto& name : list) {
      if (d.by_covariate.count(name)) continue;
      const int k = data.covariate_index(name);
      if (k < 0) throw SpecError("model: covariate '" + name + "' is not in the dataset schema");
      const auto& info = data.covariates[k];
      auto& cols = d.by_covariate[name];
      if (info.categorical) {
        const int ref = info.reference_index();
        for (std::size_t l = 0; l < info.levels.size(); ++l) {
          if (static_cast<int>(l) == ref) continue;
          cols.push_back(static_cast<int>(d.columns.size()));
          d.columns.push_back({name + "[" + info.levels[l] + "]", k, static_cast<int>(l), 0.0, 1.0});
        }
        continue;
      }
      Column c{name, k, -1, 0.0, 1.0};
      if (standardize) {
        std::vector<double> vals;
        for (const auto& o : data.observations)
          if (!o.covariate_missing[k]) vals.push_back(o.covariates[k]);
        if (vals.size() >= 2) {
          c.center = mean(vals);
          const double s = sd(vals);
          c.scale = s > 0.0 ? s : 1.0;
        }
        record.push_back({name, c.center, c.scale});
      }
      cols.push_back(static_cast<int>(d.columns.size()));
      d.columns.push_back(c);
    }
  }
  return d;
}

void add_normal_priors(Tape& tape, const ParameterSpace& space, std::span<const Var> th, std::vector<Var>& acc) {
  (void)tape;
  for (const auto& b : space.blocks()) {
    if (b.prior.kind != PriorSpec::Kind::normal) continue;
    for (std::size_t i = 0; i < b.length; ++i)
      acc.push_back(normal_lpdf(th[b.natural_offset + i], b.prior.mean, b.prior.sd));
  }
}

ConstraintTransform sign_transform(SignRestriction s) {
  switch (s) {
    case SignRestriction::nonneg: return ConstraintTransform::lower(0.0);
    case SignRestriction::nonpos: return ConstraintTransform::upper(0.0);
    case SignRestriction::free: break;
  }
  return ConstraintTransform::identity();
}

struct ClassCase {
  Compliance g = Compliance::unknown;
  double code = 0.0;
  bool complier = false;
  std::array<bool, 3> active{};
  int simplex_index = 0;
};

struct Subject {
  std::size_t row = 0;
  int z = 0;
  Slot y;
  std::array<Slot, 3> w;
  std::vector<Slot> x;
  int latent = kConstant;
  int resid = kConstant;
  std::vector<ClassCase> classes;
  bool outcome_varies = false;
  bool exposure_varies = false;
};

class StructuralModel final : public LogPosterior {
 public:
  StructuralModel(const Dataset& input, const ModelSpec& spec);

  Var eval(Tape& tape, std::span<const Var> th, bool include_priors) const override;
  std::vector<std::string> derived_names() const override { return derived_names_; }
  std::vector<double> derived(std::span<const double> th) const override;
  std::vector<std::string> ate_names() const override;

 private:
  Sidedness sided_ = Sidedness::one_sided;
  int nexp_ = 1;
  bool latent_ = false, exposure_on_ = false, intercept_ = false, ratio_ = false, alpha_g_ = false;
  bool natural_zero_ = false;
  std::optional<double> support_;

  int o_ate_ = -1, o_beta0_ = -1, o_beta_cov_ = -1, o_beta_g_ = -1, o_beta_gw_ = -1, o_beta_gcov_ = -1,
      o_beta_gu_ = -1, o_beta_wcov_ = -1, o_beta_wu_ = -1, o_beta_u_ = -1, o_sigma_y_ = -1;
  int o_alpha0_ = -1, o_alpha_cov_ = -1, o_alpha_prev_ = -1, o_alpha_g_ = -1, o_alpha_u_ = -1, o_sigma_w_ = -1;
  int o_p_ = -1, o_gamma0_ = -1, o_gamma_cov_ = -1, o_simplex_ = -1;
  int o_cov_mu_ = -1, o_cov_sigma_ = -1;
  std::array<int, 3> alpha_u_pos_{-1, -1, -1};

  Design design_;
  std::vector<int> ycols_, wcols_, gcols_;
  std::vector<int> cov_model_cols_;
  std::vector<Subject> subjects_;
  std::vector<std::string> derived_names_;
  std::vector<double> derived_codes_;

  int offset(const std::string& name) const {
    const auto* b = space_.find(name);
    return b ? static_cast<int>(b->natural_offset) : -1;
  }

  Var outcome_mean(Linear& lin, Tape& tape, const Subject& s, std::span<const Var> th, const Var& u,
                   const ClassCase& c) const;
  Var exposure_term(Linear& lin, Tape& tape, const Subject& s, std::span<const Var> th, const Var& u,
                    const ClassCase& c) const;
  Var compliance_term(Linear& lin, Tape& tape, const Subject& s, std::span<const Var> th, const ClassCase& c) const;
};

StructuralModel::StructuralModel(const Dataset& input, const ModelSpec& spec_in) {
  spec_ = spec_in;
  spec_.validate();
  Dataset data = spec_.comparison == Comparison::complete_case ? complete_cases(input) : input;
  if (data.size() < input.size())
    warnings_.push_back("complete-case analysis dropped " + std::to_string(input.size() - data.size()) + " rows");
  if (data.size() == 0) throw SpecError("model: dataset has no usable rows");
  data.validate();
  if (data.n_exposures != spec_.n_exposures)
    throw SpecError("model.n_exposures: dataset carries " + std::to_string(data.n_exposures) + " exposure(s)");

  sided_ = data.sidedness;
  nexp_ = spec_.n_exposures;
  latent_ = spec_.uses_latent();
  exposure_on_ = spec_.exposure_model && spec_.comparison != Comparison::random_intercept_outcome;
  intercept_ = !latent_;
  ratio_ = latent_ && spec_.reparam == Reparam::ratio;
  natural_zero_ = spec_.control_is_natural_zero;
  alpha_g_ = exposure_on_ && natural_zero_ && spec_.compliance != ComplianceModel::none;
  if (exposure_on_ && !natural_zero_) support_ = spec_.exposure_support_lower;

  if ((spec_.compliance == ComplianceModel::bernoulli || spec_.compliance == ComplianceModel::logistic) &&
      sided_ != Sidedness::one_sided)
    throw SpecError("model.compliance: two-sided data needs the dirichlet compliance model");
  if (spec_.compliance == ComplianceModel::dirichlet && sided_ != Sidedness::two_sided)
    throw SpecError("model.compliance: the dirichlet model is for two-sided data");
  if (spec_.sigma_mode == SigmaMode::informative && exposure_on_ &&
      static_cast<int>(spec_.sigma_w_estimates.size()) != nexp_)
    throw SpecError("model.sigma_estimates.sigma_w: need one estimate per exposure in informative mode");

  design_ = build_design(data, {spec_.outcome_covariates, spec_.exposure_covariates, spec_.compliance_covariates},
                         spec_.standardize, standardization_);
  ycols_ = design_.columns_for(spec_.outcome_covariates);
  wcols_ = exposure_on_ ? design_.columns_for(spec_.exposure_covariates) : std::vector<int>{};
  gcols_ = spec_.compliance == ComplianceModel::logistic ? design_.columns_for(spec_.compliance_covariates)
                                                         : std::vector<int>{};
  for (const auto& name : spec_.covariate_models) {
    if (!design_.by_covariate.count(name)) continue;
    const auto& cols = design_.by_covariate.at(name);
    if (design_.columns[cols.front()].level >= 0)
      throw SpecError("model.covariate_models: '" + name + "' is categorical; only continuous covariates are imputed");
    cov_model_cols_.push_back(cols.front());
  }

  // Subjects, candidate compliance classes and missing-value bookkeeping.
  const bool collapse = spec_.compliance == ComplianceModel::none;
  std::vector<std::pair<std::size_t, int>> y_missing;                 // subject
  std::vector<std::pair<std::size_t, int>> w_missing;                 // subject, exposure
  std::vector<std::pair<std::size_t, int>> x_missing;                 // subject, column
  std::size_t n_resid = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto& o = data.observations[r];
    Subject s;
    s.row = r;
    s.z = o.z;
    Compliance known = o.compliance;
    if (known == Compliance::unknown) known = observed_compliance(o, sided_);
    std::vector<Compliance> cands;
    if (known != Compliance::unknown) {
      cands = {known};
    } else if (sided_ == Sidedness::one_sided) {
      cands = {Compliance::never_taker, Compliance::complier};
    } else if (o.any_w_missing()) {
      cands = {Compliance::never_taker, Compliance::always_taker, Compliance::complier};
    } else if (o.z == 1) {
      cands = {Compliance::always_taker, Compliance::complier};
    } else {
      cands = {Compliance::never_taker, Compliance::complier};
    }
    for (Compliance g : cands) {
      ClassCase c;
      c.g = g;
      c.code = compliance_code(g, sided_);
      c.complier = g == Compliance::complier;
      c.simplex_index = g == Compliance::never_taker ? 0 : (g == Compliance::always_taker ? 1 : 2);
      bool possible = true;
      for (int h = 0; h < nexp_; ++h) {
        c.active[h] = h_interaction(o.z, g, sided_, natural_zero_) == 1;
        if (o.w_missing[h]) continue;
        if (!c.active[h] && o.w[h] != 0.0) possible = false;
        if (c.active[h] && support_ && o.w[h] < *support_) possible = false;
      }
      if (possible) s.classes.push_back(c);
    }
    if (s.classes.empty())
      throw std::invalid_argument("model: row " + std::to_string(r + 1) +
                                  " has an observed exposure that no compliance class can produce");

    // Under GxW the class code only multiplies W1, so it is irrelevant when W1 is observed as 0.
    const bool code_matters = spec_.family_uses_g() && (spec_.family != Family::variation_gxw || o.w_missing[0] ||
                                                        o.w[0] != 0.0);
    auto signature = [&](const ClassCase& c) {
      std::ostringstream sig;
      if (exposure_on_)
        for (int h = 0; h < nexp_; ++h) sig << c.active[h];
      if (code_matters) sig << '|' << c.code;
      if (alpha_g_) sig << '|' << c.complier;
      return sig.str();
    };
    if (collapse && s.classes.size() > 1) {
      const auto first = signature(s.classes.front());
      for (const auto& c : s.classes)
        if (signature(c) != first)
          throw SpecError("model.compliance: row " + std::to_string(r + 1) +
                          " has unresolved compliance that changes the likelihood; declare a compliance model");
      s.classes.resize(1);
    }
    for (const auto& c : s.classes) {
      for (const auto& d : s.classes) {
        if (c.code != d.code && code_matters) s.outcome_varies = true;
        if (exposure_on_) {
          for (int h = 0; h < nexp_; ++h)
            if (c.active[h] != d.active[h]) s.exposure_varies = true;
          if (alpha_g_ && c.complier != d.complier) s.exposure_varies = true;
        }
      }
    }

    if (o.y_missing) {
      y_missing.push_back({r, 0});
    } else {
      s.y.value = o.y;
    }
    for (int h = 0; h < nexp_; ++h) {
      if (!o.w_missing[h]) {
        s.w[h].value = o.w[h];
        continue;
      }
      bool any_active = false, all_active = true;
      for (const auto& c : s.classes) {
        any_active = any_active || c.active[h];
        all_active = all_active && c.active[h];
      }
      if (!any_active) continue;  // pinned at 0 by design
      if (!all_active)
        throw SpecError("model: row " + std::to_string(r + 1) +
                        " has a missing exposure whose support depends on unresolved compliance");
      w_missing.push_back({r, h});
    }
    s.x.resize(design_.columns.size());
    for (std::size_t c = 0; c < design_.columns.size(); ++c) {
      const auto& col = design_.columns[c];
      if (o.covariate_missing[col.source]) {
        if (col.level >= 0)
          throw SpecError("model: categorical covariate '" + data.covariates[col.source].name + "' missing in row " +
                          std::to_string(r + 1));
        if (std::find(cov_model_cols_.begin(), cov_model_cols_.end(), static_cast<int>(c)) == cov_model_cols_.end())
          throw SpecError("model.covariate_models: covariate '" + col.name + "' has missing values but no model");
        x_missing.push_back({r, static_cast<int>(c)});
        continue;
      }
      const double raw = o.covariates[col.source];
      s.x[c].value = col.level >= 0 ? (static_cast<int>(raw) == col.level ? 1.0 : 0.0) : (raw - col.center) / col.scale;
    }
    if (latent_ && spec_.two_latent_mode == TwoLatentMode::residual_intercept && spec_.confounders_combined &&
        exposure_on_) {
      bool any = false;
      for (const auto& c : s.classes)
        for (int h = 0; h < nexp_; ++h) any = any || c.active[h];
      if (any) s.resid = static_cast<int>(n_resid++);
    }
    subjects_.push_back(std::move(s));
  }

  // Parameter blocks.
  auto coef = [&](const std::string& name, std::size_t len) {
    const auto p = spec_.prior(name);
    space_.add(name, len, sign_transform(spec_.restriction(name)), {PriorSpec::Kind::normal, p.mean, p.sd});
  };
  auto sigma = [&](const std::string& name, std::size_t len, const std::vector<double>& est) {
    for (std::size_t i = 0; i < len; ++i) (void)i;
    if (spec_.sigma_mode == SigmaMode::informative) {
      // One block per estimate keeps the prior metadata exact.
      space_.add(name, len, ConstraintTransform::lower(0.0), {PriorSpec::Kind::none, est.front(), spec_.informative_sd});
    } else {
      const auto p = spec_.prior(name);
      space_.add(name, len, ConstraintTransform::lower(0.0), {PriorSpec::Kind::normal, p.mean, p.sd});
    }
  };

  coef("e_ate", nexp_);
  if (intercept_) coef("beta0", 1);
  if (!ycols_.empty()) coef("beta_cov", ycols_.size());
  switch (spec_.family) {
    case Family::simplest: break;
    case Family::variation_additive_g: coef("beta_g", 1); break;
    case Family::variation_gxw: coef("beta_gw", 1); break;
    case Family::variation_full_interaction:
      coef("beta_g", 1);
      coef("beta_gw", 1);
      if (!ycols_.empty()) coef("beta_gcov", ycols_.size());
      if (latent_) coef("beta_gu", 1);
      break;
    case Family::confounders_modify_w:
      if (!ycols_.empty()) coef("beta_wcov", ycols_.size());
      if (latent_) coef("beta_wu", 1);
      break;
  }
  if (ratio_) coef("beta_u", 1);
  sigma("sigma_y", 1, {spec_.sigma_y_estimate.value_or(0.0)});
  if (exposure_on_) {
    coef("alpha0", nexp_);
    if (!wcols_.empty()) coef("alpha_cov", nexp_ * wcols_.size());
    if (nexp_ == 3) coef("alpha_prev", 3);
    if (alpha_g_) coef("alpha_g", nexp_);
    int n_u = 0;
    if (latent_)
      for (int h = 0; h < nexp_; ++h)
        if (spec_.latent_in(h)) alpha_u_pos_[h] = n_u++;
    if (n_u > 0) coef("alpha_u", n_u);
    if (spec_.sigma_mode == SigmaMode::informative) {
      for (int h = 0; h < nexp_; ++h) (void)h;
      sigma("sigma_w", nexp_, spec_.sigma_w_estimates);
    } else {
      sigma("sigma_w", nexp_, {});
    }
  }
  switch (spec_.compliance) {
    case ComplianceModel::none: break;
    case ComplianceModel::bernoulli:
      space_.add("p", 1, ConstraintTransform::interval(0.0, 1.0), {PriorSpec::Kind::uniform, 0.5, std::sqrt(1.0 / 12)});
      break;
    case ComplianceModel::logistic:
      coef("gamma0", 1);
      if (!gcols_.empty()) coef("gamma_cov", gcols_.size());
      break;
    case ComplianceModel::dirichlet:
      space_.add("p_class", 3, ConstraintTransform::simplex(),
                 {PriorSpec::Kind::dirichlet, 1.0 / 3.0, 0.0});
      break;
  }
  if (latent_) {
    const auto p = spec_.prior("u_prime");
    std::size_t n_u = subjects_.size();
    if (ratio_) {
      if (spec_.ratio_anchor >= subjects_.size())
        throw std::logic_error("apply_ratio_reparam: anchor subject carries no U' entry");
      n_u -= 1;
    }
    if (n_u > 0) space_.add("u_prime", n_u, ConstraintTransform::identity(), {PriorSpec::Kind::normal, p.mean, p.sd});
    if (n_resid > 0) {
      const auto pr = spec_.prior("u_resid");
      space_.add("u_resid", n_resid, ConstraintTransform::identity(), {PriorSpec::Kind::normal, pr.mean, pr.sd});
    }
  }
  if (!y_missing.empty())
    space_.add("y_mis", y_missing.size(), ConstraintTransform::identity(), {PriorSpec::Kind::none, 0.0, 0.0});
  if (!w_missing.empty())
    space_.add("w_mis", w_missing.size(), ConstraintTransform::lower(support_.value_or(0.0)),
               {PriorSpec::Kind::none, 0.0, 0.0});
  if (!x_missing.empty())
    space_.add("cov_mis", x_missing.size(), ConstraintTransform::identity(), {PriorSpec::Kind::none, 0.0, 0.0});
  if (!cov_model_cols_.empty()) {
    const auto pm = spec_.prior("cov_mu");
    const auto ps = spec_.prior("cov_sigma");
    space_.add("cov_mu", cov_model_cols_.size(), ConstraintTransform::identity(),
               {PriorSpec::Kind::normal, pm.mean, pm.sd});
    space_.add("cov_sigma", cov_model_cols_.size(), ConstraintTransform::lower(0.0),
               {PriorSpec::Kind::normal, ps.mean, ps.sd});
  }
  missing_params_ = y_missing.size() + w_missing.size() + x_missing.size();

  o_ate_ = offset("e_ate");
  o_beta0_ = offset("beta0");
  o_beta_cov_ = offset("beta_cov");
  o_beta_g_ = offset("beta_g");
  o_beta_gw_ = offset("beta_gw");
  o_beta_gcov_ = offset("beta_gcov");
  o_beta_gu_ = offset("beta_gu");
  o_beta_wcov_ = offset("beta_wcov");
  o_beta_wu_ = offset("beta_wu");
  o_beta_u_ = offset("beta_u");
  o_sigma_y_ = offset("sigma_y");
  o_alpha0_ = offset("alpha0");
  o_alpha_cov_ = offset("alpha_cov");
  o_alpha_prev_ = offset("alpha_prev");
  o_alpha_g_ = offset("alpha_g");
  o_alpha_u_ = offset("alpha_u");
  o_sigma_w_ = offset("sigma_w");
  o_p_ = offset("p");
  o_gamma0_ = offset("gamma0");
  o_gamma_cov_ = offset("gamma_cov");
  o_simplex_ = offset("p_class");
  o_cov_mu_ = offset("cov_mu");
  o_cov_sigma_ = offset("cov_sigma");

  if (latent_) {
    const int o_u = offset("u_prime");
    const int o_r = offset("u_resid");
    int next = 0;
    for (std::size_t i = 0; i < subjects_.size(); ++i) {
      auto& s = subjects_[i];
      latent_rows_.push_back(s.row);
      if (ratio_ && i == spec_.ratio_anchor) {
        s.latent = kAnchor;
      } else {
        s.latent = o_u + next++;
      }
      if (s.resid >= 0) s.resid += o_r;
    }
  }
  {
    const int o = offset("y_mis");
    for (std::size_t k = 0; k < y_missing.size(); ++k) subjects_[y_missing[k].first].y.param = o + static_cast<int>(k);
  }
  {
    const int o = offset("w_mis");
    for (std::size_t k = 0; k < w_missing.size(); ++k)
      subjects_[w_missing[k].first].w[w_missing[k].second].param = o + static_cast<int>(k);
  }
  {
    const int o = offset("cov_mis");
    for (std::size_t k = 0; k < x_missing.size(); ++k)
      subjects_[x_missing[k].first].x[x_missing[k].second].param = o + static_cast<int>(k);
  }

  // Class-specific effects as generated quantities.
  if (spec_.family == Family::variation_gxw || spec_.family == Family::variation_full_interaction) {
    if (sided_ == Sidedness::one_sided) {
      derived_names_ = {"e_ate_co"};
      derived_codes_ = {1.0};
    } else {
      derived_names_ = {"e_ate_nt", "e_ate_at", "e_ate_co"};
      derived_codes_ = {1.0, 2.0, 3.0};
    }
  }
  if (spec_.compliance == ComplianceModel::none && sided_ == Sidedness::one_sided && spec_.family_uses_g())
    throw SpecError("model.compliance: variation families need a compliance model to separate control-arm classes");
}

Var StructuralModel::outcome_mean(Linear& lin, Tape& tape, const Subject& s, std::span<const Var> th, const Var& u,
                                  const ClassCase& c) const {
  lin.reset();
  if (intercept_) lin.add(th[o_beta0_]);
  for (int h = 0; h < nexp_; ++h) lin.mul(th[o_ate_ + h], get(s.w[h], th));
  for (std::size_t k = 0; k < ycols_.size(); ++k) lin.mul(th[o_beta_cov_ + k], get(s.x[ycols_[k]], th));
  if (latent_) {
    if (ratio_)
      lin.mul(th[o_beta_u_], u);
    else
      lin.add(u);
  }
  const Var w1 = get(s.w[0], th);
  switch (spec_.family) {
    case Family::simplest: break;
    case Family::variation_additive_g: lin.mul(th[o_beta_g_], Var(c.code)); break;
    case Family::variation_gxw: lin.mul(th[o_beta_gw_], w1 * c.code); break;
    case Family::variation_full_interaction: {
      lin.mul(th[o_beta_g_], Var(c.code));
      lin.mul(th[o_beta_gw_], w1 * c.code);
      for (std::size_t k = 0; k < ycols_.size(); ++k)
        lin.mul(th[o_beta_gcov_ + k], get(s.x[ycols_[k]], th) * c.code);
      if (latent_) lin.mul(th[o_beta_gu_], u * c.code);
      break;
    }
    case Family::confounders_modify_w: {
      for (std::size_t k = 0; k < ycols_.size(); ++k) lin.mul(th[o_beta_wcov_ + k], get(s.x[ycols_[k]], th) * w1);
      if (latent_) lin.mul(th[o_beta_wu_], u * w1);
      break;
    }
  }
  return lin.done(tape);
}

Var StructuralModel::exposure_term(Linear& lin, Tape& tape, const Subject& s, std::span<const Var> th, const Var& u,
                                   const ClassCase& c) const {
  Var total(0.0);
  for (int h = 0; h < nexp_; ++h) {
    if (!c.active[h]) continue;
    lin.reset();
    lin.add(th[o_alpha0_ + h]);
    if (s.resid >= 0) lin.add(th[s.resid]);
    for (std::size_t k = 0; k < wcols_.size(); ++k)
      lin.mul(th[o_alpha_cov_ + h * wcols_.size() + k], get(s.x[wcols_[k]], th));
    if (h == 1) lin.mul(th[o_alpha_prev_], get(s.w[0], th));
    if (h == 2) {
      lin.mul(th[o_alpha_prev_ + 1], get(s.w[0], th));
      lin.mul(th[o_alpha_prev_ + 2], get(s.w[1], th));
    }
    if (alpha_u_pos_[h] >= 0) lin.mul(th[o_alpha_u_ + alpha_u_pos_[h]], u);
    if (alpha_g_ && c.complier) lin.add(th[o_alpha_g_ + h]);
    const Var mu = lin.done(tape);
    total = total + normal_lpdf(get(s.w[h], th), mu, th[o_sigma_w_ + h]);
  }
  return total;
}

Var StructuralModel::compliance_term(Linear& lin, Tape& tape, const Subject& s, std::span<const Var> th,
                                     const ClassCase& c) const {
  switch (spec_.compliance) {
    case ComplianceModel::none: return Var(0.0);
    case ComplianceModel::bernoulli: return c.complier ? log(th[o_p_]) : log(1.0 - th[o_p_]);
    case ComplianceModel::logistic: {
      lin.reset();
      lin.add(th[o_gamma0_]);
      for (std::size_t k = 0; k < gcols_.size(); ++k) lin.mul(th[o_gamma_cov_ + k], get(s.x[gcols_[k]], th));
      return bernoulli_logit_lpmf(c.complier ? 1 : 0, lin.done(tape));
    }
    case ComplianceModel::dirichlet: return log(th[o_simplex_ + c.simplex_index]);
  }
  return Var(0.0);
}

Var StructuralModel::eval(Tape& tape, std::span<const Var> th, bool include_priors) const {
  if (th.size() != space_.natural_dim()) throw std::invalid_argument("model: parameter vector has the wrong length");
  Linear lin;
  std::vector<Var> acc;
  acc.reserve(subjects_.size() * 3 + space_.natural_dim());
  std::vector<Var> mix;
  const Var sigma_y = th[o_sigma_y_];
  for (const auto& s : subjects_) {
    Var u(0.0);
    if (s.latent >= 0) u = th[s.latent];
    if (s.latent == kAnchor) u = Var(1.0);
    const Var y = get(s.y, th);
    const ClassCase& first = s.classes.front();
    Var shared_outcome(0.0), shared_exposure(0.0);
    if (!s.outcome_varies) shared_outcome = normal_lpdf(y, outcome_mean(lin, tape, s, th, u, first), sigma_y);
    if (exposure_on_ && !s.exposure_varies) shared_exposure = exposure_term(lin, tape, s, th, u, first);
    acc.push_back(shared_outcome);
    acc.push_back(shared_exposure);
    if (s.classes.size() == 1) {
      if (s.outcome_varies) acc.push_back(normal_lpdf(y, outcome_mean(lin, tape, s, th, u, first), sigma_y));
      acc.push_back(compliance_term(lin, tape, s, th, first));
      continue;
    }
    mix.clear();
    for (const auto& c : s.classes) {
      Var t = compliance_term(lin, tape, s, th, c);
      if (s.outcome_varies) t = t + normal_lpdf(y, outcome_mean(lin, tape, s, th, u, c), sigma_y);
      if (s.exposure_varies) t = t + exposure_term(lin, tape, s, th, u, c);
      mix.push_back(t);
    }
    acc.push_back(log_sum_exp(mix));
  }
  // Covariate models (observed values inform mu/sigma; missing ones are imputed).
  for (std::size_t k = 0; k < cov_model_cols_.size(); ++k) {
    const Var mu = th[o_cov_mu_ + k];
    const Var sg = th[o_cov_sigma_ + k];
    for (const auto& s : subjects_) acc.push_back(normal_lpdf(get(s.x[cov_model_cols_[k]], th), mu, sg));
  }
  if (include_priors) {
    add_normal_priors(tape, space_, th, acc);
    if (spec_.sigma_mode == SigmaMode::informative) {
      acc.push_back(normal_lpdf(sigma_y, *spec_.sigma_y_estimate, spec_.informative_sd));
      if (o_sigma_w_ >= 0)
        for (int h = 0; h < nexp_; ++h)
          acc.push_back(normal_lpdf(th[o_sigma_w_ + h], spec_.sigma_w_estimates[h], spec_.informative_sd));
    }
    if (o_simplex_ >= 0) {
      const double a1 = spec_.dirichlet_concentration - 1.0;
      if (a1 != 0.0)
        for (int k = 0; k < 3; ++k) acc.push_back(a1 * log(th[o_simplex_ + k]));
    }
  }
  return sum(acc);
}

std::vector<double> StructuralModel::derived(std::span<const double> th) const {
  std::vector<double> out;
  for (double code : derived_codes_) {
    const double ate = th[o_ate_];
    if (spec_.family == Family::variation_gxw || spec_.family == Family::variation_full_interaction)
      out.push_back(ate + code * th[o_beta_gw_]);
  }
  return out;
}

std::vector<std::string> StructuralModel::ate_names() const {
  std::vector<std::string> out;
  if (nexp_ == 1) {
    out.push_back("e_ate");
  } else {
    for (int h = 1; h <= nexp_; ++h) out.push_back("e_ate[" + std::to_string(h) + "]");
  }
  out.insert(out.end(), derived_names_.begin(), derived_names_.end());
  return out;
}

class IvModel final : public LogPosterior {
 public:
  IvModel(const Dataset& input, const ModelSpec& spec);
  Var eval(Tape& tape, std::span<const Var> th, bool include_priors) const override;
  std::vector<std::string> derived_names() const override { return {"e_ate"}; }
  std::vector<double> derived(std::span<const double> th) const override {
    return {th[o_bz_] / th[o_az_]};
  }
  std::vector<std::string> ate_names() const override { return {"e_ate"}; }

 private:
  struct Row {
    double z, w, y;
    std::vector<double> x;
  };
  std::vector<Row> rows_;
  std::size_t k_ = 0;
  int o_a0_ = 0, o_acov_ = -1, o_az_ = 0, o_sw_ = 0, o_b0_ = 0, o_bcov_ = -1, o_bz_ = 0, o_sy_ = 0;
};

IvModel::IvModel(const Dataset& input, const ModelSpec& spec_in) {
  spec_ = spec_in;
  spec_.validate();
  if (spec_.n_exposures != 1 || input.n_exposures != 1)
    throw SpecError("model.comparison: iv_2sls is defined for a single exposure");
  Dataset data = complete_cases(input);
  if (data.size() < input.size())
    warnings_.push_back("iv_2sls uses complete cases; dropped " + std::to_string(input.size() - data.size()) + " rows");
  Design design = build_design(data, {spec_.outcome_covariates}, spec_.standardize, standardization_);
  const auto cols = design.columns_for(spec_.outcome_covariates);
  k_ = cols.size();
  for (const auto& o : data.observations) {
    Row r{static_cast<double>(o.z), o.w[0], o.y, {}};
    for (int c : cols) {
      const auto& col = design.columns[c];
      const double raw = o.covariates[col.source];
      r.x.push_back(col.level >= 0 ? (static_cast<int>(raw) == col.level ? 1.0 : 0.0) : (raw - col.center) / col.scale);
    }
    rows_.push_back(std::move(r));
  }
  auto coef = [&](const std::string& name, std::size_t len) {
    const auto p = spec_.prior(name);
    return static_cast<int>(
        space_.add(name, len, sign_transform(spec_.restriction(name)), {PriorSpec::Kind::normal, p.mean, p.sd})
            .natural_offset);
  };
  auto sigma = [&](const std::string& name, std::optional<double> est) {
    if (spec_.sigma_mode == SigmaMode::informative) {
      if (!est) throw SpecError("model.sigma_estimates." + name + ": required in informative mode");
      return static_cast<int>(
          space_.add(name, 1, ConstraintTransform::lower(0.0), {PriorSpec::Kind::none, *est, spec_.informative_sd})
              .natural_offset);
    }
    const auto p = spec_.prior(name);
    return static_cast<int>(
        space_.add(name, 1, ConstraintTransform::lower(0.0), {PriorSpec::Kind::normal, p.mean, p.sd}).natural_offset);
  };
  o_a0_ = coef("alpha0", 1);
  if (k_ > 0) o_acov_ = coef("alpha_cov", k_);
  o_az_ = coef("alpha_z", 1);
  o_sw_ = sigma("sigma_w", spec_.sigma_w_estimates.empty() ? std::nullopt
                                                           : std::optional<double>(spec_.sigma_w_estimates.front()));
  o_b0_ = coef("beta0", 1);
  if (k_ > 0) o_bcov_ = coef("beta_cov", k_);
  o_bz_ = coef("beta_z", 1);
  o_sy_ = sigma("sigma_y", spec_.sigma_y_estimate);
}

Var IvModel::eval(Tape& tape, std::span<const Var> th, bool include_priors) const {
  if (th.size() != space_.natural_dim()) throw std::invalid_argument("model: parameter vector has the wrong length");
  Linear lin;
  std::vector<Var> acc;
  acc.reserve(rows_.size() * 2 + space_.natural_dim());
  for (const auto& r : rows_) {
    lin.reset();
    lin.add(th[o_a0_]);
    for (std::size_t k = 0; k < k_; ++k) lin.mul(th[o_acov_ + k], Var(r.x[k]));
    lin.mul(th[o_az_], Var(r.z));
    acc.push_back(normal_lpdf(r.w, lin.done(tape), th[o_sw_]));
    lin.reset();
    lin.add(th[o_b0_]);
    for (std::size_t k = 0; k < k_; ++k) lin.mul(th[o_bcov_ + k], Var(r.x[k]));
    lin.mul(th[o_bz_], Var(r.z));
    acc.push_back(normal_lpdf(r.y, lin.done(tape), th[o_sy_]));
  }
  if (include_priors) {
    add_normal_priors(tape, space_, th, acc);
    if (spec_.sigma_mode == SigmaMode::informative) {
      acc.push_back(normal_lpdf(th[o_sw_], spec_.sigma_w_estimates.front(), spec_.informative_sd));
      acc.push_back(normal_lpdf(th[o_sy_], *spec_.sigma_y_estimate, spec_.informative_sd));
    }
  }
  return sum(acc);
}

}  // namespace

ModelPtr build_one_exposure_logpost(const Dataset& data, const ModelSpec& spec) {
  if (data.sidedness != Sidedness::one_sided)
    throw std::invalid_argument("build_one_exposure_logpost: data must be one-sided");
  if (spec.n_exposures != 1) throw std::invalid_argument("build_one_exposure_logpost: spec must have one exposure");
  return std::make_shared<StructuralModel>(data, spec);
}

ModelPtr build_three_exposure_logpost(const Dataset& data, const ModelSpec& spec) {
  if (spec.n_exposures != 3) throw std::invalid_argument("build_three_exposure_logpost: spec must have three exposures");
  return std::make_shared<StructuralModel>(data, spec);
}

ModelPtr build_mixture_logpost_two_sided(const Dataset& data, const ModelSpec& spec) {
  if (data.sidedness != Sidedness::two_sided)
    throw std::invalid_argument("build_mixture_logpost_two_sided: data must be two-sided");
  return std::make_shared<StructuralModel>(data, spec);
}

ModelPtr build_iv_2sls_logpost(const Dataset& data, const ModelSpec& spec) {
  ModelSpec s = spec;
  s.comparison = Comparison::iv_2sls;
  return std::make_shared<IvModel>(data, s);
}

ModelPtr build_random_intercept_outcome_logpost(const Dataset& data, const ModelSpec& spec) {
  if (spec.unmeasured != Unmeasured::one_latent)
    throw std::invalid_argument("build_random_intercept_outcome_logpost: needs one latent confounder");
  ModelSpec s = spec;
  s.comparison = Comparison::random_intercept_outcome;
  if (s.reparam == Reparam::none) s.reparam = Reparam::random_intercept;
  return std::make_shared<StructuralModel>(data, s);
}

ModelPtr build_model(const Dataset& data, const ModelSpec& spec) {
  switch (spec.comparison) {
    case Comparison::iv_2sls: return build_iv_2sls_logpost(data, spec);
    case Comparison::random_intercept_outcome: return build_random_intercept_outcome_logpost(data, spec);
    default: break;
  }
  if (spec.n_exposures == 3) return build_three_exposure_logpost(data, spec);
  if (data.sidedness == Sidedness::two_sided) return build_mixture_logpost_two_sided(data, spec);
  return build_one_exposure_logpost(data, spec);
}

bool iv_heavy_tail(const std::vector<double>& a) {
  if (a.empty()) return false;
  const bool pos = std::any_of(a.begin(), a.end(), [](double v) { return v > 0.0; });
  const bool neg = std::any_of(a.begin(), a.end(), [](double v) { return v < 0.0; });
  return pos && neg;
}

bool ratio_reanchor_advised(const PosteriorDraws& draws) {
  const auto i = draws.index_of("beta_u");
  if (!i) return false;
  const auto d = draws.pooled(*i);
  return quantile(d, 0.025) <= 0.0 && quantile(d, 0.975) >= 0.0;
}

std::vector<AteSummary> extract_ate(const PosteriorDraws& draws, const LogPosterior& model) {
  std::vector<AteSummary> out;
  for (const auto& name : model.ate_names()) {
    const auto d = draws.pooled(name);
    AteSummary a;
    a.name = name;
    a.mean = mean(d);
    a.sd = d.size() > 1 ? sd(d) : 0.0;
    a.q025 = quantile(d, 0.025);
    a.q975 = quantile(d, 0.975);
    a.median = quantile(d, 0.5);
    if (model.spec().comparison == Comparison::iv_2sls) a.heavy_tailed = iv_heavy_tail(draws.pooled("alpha_z"));
    out.push_back(a);
  }
  return out;
}

std::string ate_csv(const std::vector<AteSummary>& ates) {
  std::ostringstream out;
  out << "parameter,mean,sd,q2.5,median,q97.5,heavy_tailed\n";
  for (const auto& a : ates)
    out << a.name << ',' << format_double(a.mean) << ',' << format_double(a.sd) << ',' << format_double(a.q025) << ','
        << format_double(a.median) << ',' << format_double(a.q975) << ',' << (a.heavy_tailed ? 1 : 0) << '\n';
  return out.str();
}

}  // namespace cforge
