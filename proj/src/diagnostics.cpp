#include "cforge/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace cforge {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_shape(const ChainMatrix& chains) {
  if (chains.empty()) throw std::invalid_argument("diagnostics: no chains supplied");
  const std::size_t n = chains.front().size();
  if (n < 4) throw std::invalid_argument("diagnostics: need at least 4 draws per chain");
  for (const auto& c : chains)
    if (c.size() != n) throw std::invalid_argument("diagnostics: chains have unequal lengths");
}

// Biased (1/n) autocovariance of one chain at lag t, computed on demand.
class LaggedAcov {
 public:
  explicit LaggedAcov(const ChainMatrix& chains) : chains_(chains), means_(chains.size()) {
    for (std::size_t c = 0; c < chains.size(); ++c) means_[c] = mean(chains[c]);
  }
  double chain(std::size_t c, std::size_t t) const {
    const auto& x = chains_[c];
    const std::size_t n = x.size();
    double s = 0.0;
    for (std::size_t i = 0; i + t < n; ++i) s += (x[i] - means_[c]) * (x[i + t] - means_[c]);
    return s / static_cast<double>(n);
  }
  double averaged(std::size_t t) const {
    double s = 0.0;
    for (std::size_t c = 0; c < chains_.size(); ++c) s += chain(c, t);
    return s / static_cast<double>(chains_.size());
  }
  const std::vector<double>& means() const { return means_; }

 private:
  const ChainMatrix& chains_;
  std::vector<double> means_;
};

}  // namespace

double mean(const std::vector<double>& x) {
  if (x.empty()) return kNaN;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double variance(const std::vector<double>& x) {
  if (x.size() < 2) return kNaN;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

double sd(const std::vector<double>& x) { return std::sqrt(variance(x)); }

double quantile(std::vector<double> x, double prob) {
  if (x.empty()) throw std::invalid_argument("quantile: empty input");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= x.size()) return x.back();
  return x[lo] + (h - static_cast<double>(lo)) * (x[lo + 1] - x[lo]);
}

StatResult split_rhat(const ChainMatrix& chains) {
  check_shape(chains);
  const std::size_t n_full = chains.front().size();
  const std::size_t n = n_full / 2;
  ChainMatrix halves;
  for (const auto& c : chains) {
    halves.emplace_back(c.begin(), c.begin() + n);
    halves.emplace_back(c.end() - n, c.end());
  }
  std::vector<double> means, vars;
  for (const auto& h : halves) {
    means.push_back(mean(h));
    vars.push_back(variance(h));
  }
  const double w = mean(vars);
  const double b = static_cast<double>(n) * variance(means);
  if (!(w > 0.0) || !std::isfinite(w)) return {kNaN, true};
  const double nn = static_cast<double>(n);
  return {std::sqrt(((nn - 1.0) / nn * w + b / nn) / w), false};
}

StatResult ess(const ChainMatrix& chains) {
  check_shape(chains);
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  const double nn = static_cast<double>(n);
  LaggedAcov acov(chains);

  std::vector<double> chain_var(m);
  for (std::size_t c = 0; c < m; ++c) chain_var[c] = acov.chain(c, 0) * nn / (nn - 1.0);
  const double mean_var = mean(chain_var);
  double var_plus = mean_var * (nn - 1.0) / nn;
  if (m > 1) var_plus += variance(acov.means());
  if (!(var_plus > 0.0) || !std::isfinite(var_plus)) return {kNaN, true};

  // Geyer's initial positive then initial monotone sequence over pairs.
  std::vector<double> rho(n, 0.0);
  double rho_even = 1.0;
  rho[0] = rho_even;
  double rho_odd = 1.0 - (mean_var - acov.averaged(1)) / var_plus;
  rho[1] = rho_odd;
  std::size_t s = 1;
  while (s + 4 < n && (rho_even + rho_odd) > 0.0) {
    rho_even = 1.0 - (mean_var - acov.averaged(s + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - acov.averaged(s + 2)) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho[s + 1] = rho_even;
      rho[s + 2] = rho_odd;
    }
    s += 2;
  }
  const std::size_t max_s = s;
  if (rho_even > 0.0 && max_s + 1 < n) rho[max_s + 1] = rho_even;
  for (std::size_t t = 1; t + 3 <= max_s; t += 2) {
    if (rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]) {
      rho[t + 1] = 0.5 * (rho[t - 1] + rho[t]);
      rho[t + 2] = rho[t + 1];
    }
  }
  double head = 0.0;
  for (std::size_t t = 0; t < max_s; ++t) head += rho[t];
  const double tail = (max_s + 1 < n) ? rho[max_s + 1] : 0.0;
  const double tau = -1.0 + 2.0 * head + tail;
  const double total = static_cast<double>(m) * nn;
  const double cap = total * std::log10(total);
  if (!(tau > 0.0)) return {cap, false};
  return {std::min(total / tau, cap), false};
}

double prior_sensitivity(const std::vector<double>& draws, double prior_sd) {
  if (!(prior_sd > 0.0)) throw std::invalid_argument("prior_sensitivity: prior sd must be positive");
  return variance(draws) / (prior_sd * prior_sd);
}

CorrelationResult sd_pair_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("sd_pair_correlation: lengths differ");
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  CorrelationResult out;
  if (!(saa > 0.0) || !(sbb > 0.0)) {
    out.degenerate = true;
    out.r = kNaN;
    return out;
  }
  out.r = sab / std::sqrt(saa * sbb);
  out.flagged = std::fabs(out.r) > 0.1;
  return out;
}

namespace {

double normal_log_density(double x, double mu, double s) {
  const double z = (x - mu) / s;
  return -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace

BimodalityResult bimodality_check(const std::vector<double>& x, const BimodalityGates& gates) {
  if (x.size() < 500) throw std::invalid_argument("bimodality_check: need at least 500 draws");
  const double n = static_cast<double>(x.size());
  const double mu = mean(x);
  double var1 = 0.0;
  for (double v : x) var1 += (v - mu) * (v - mu);
  var1 /= n;
  BimodalityResult out;
  if (!(var1 > 0.0)) {
    out.warning = "constant draws";
    return out;
  }
  const double s1 = std::sqrt(var1);
  double ll1 = 0.0;
  for (double v : x) ll1 += normal_log_density(v, mu, s1);
  const double bic1 = -2.0 * ll1 + 2.0 * std::log(n);

  double w[2] = {0.5, 0.5};
  double m[2] = {quantile(x, 0.25), quantile(x, 0.75)};
  double s[2] = {s1 / 2.0, s1 / 2.0};
  const double floor_sd = 1e-6 * s1;
  std::vector<double> r(x.size());
  double ll = -std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int it = 0; it < gates.max_iterations; ++it) {
    double ll_new = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double a = std::log(w[0]) + normal_log_density(x[i], m[0], s[0]);
      const double b = std::log(w[1]) + normal_log_density(x[i], m[1], s[1]);
      const double mx = std::max(a, b);
      const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
      r[i] = std::exp(a - lse);
      ll_new += lse;
    }
    double n0 = 0.0, sum0 = 0.0, sum1 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      n0 += r[i];
      sum0 += r[i] * x[i];
      sum1 += (1.0 - r[i]) * x[i];
    }
    const double n1 = n - n0;
    if (n0 < 1e-9 || n1 < 1e-9) break;
    m[0] = sum0 / n0;
    m[1] = sum1 / n1;
    double v0 = 0.0, v1 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      v0 += r[i] * (x[i] - m[0]) * (x[i] - m[0]);
      v1 += (1.0 - r[i]) * (x[i] - m[1]) * (x[i] - m[1]);
    }
    s[0] = std::max(std::sqrt(v0 / n0), floor_sd);
    s[1] = std::max(std::sqrt(v1 / n1), floor_sd);
    w[0] = n0 / n;
    w[1] = n1 / n;
    if (std::fabs(ll_new - ll) < 1e-8 * n) {
      ll = ll_new;
      converged = true;
      break;
    }
    ll = ll_new;
  }
  out.converged = converged;
  if (!converged) {
    out.warning = "EM did not converge within " + std::to_string(gates.max_iterations) + " iterations";
    return out;
  }
  const double bic2 = -2.0 * ll + 5.0 * std::log(n);
  out.bic_improvement = bic1 - bic2;
  out.minor_weight = std::min(w[0], w[1]);
  const double pooled = std::sqrt(w[0] * s[0] * s[0] + w[1] * s[1] * s[1]);
  out.separation = std::fabs(m[0] - m[1]) / pooled;
  out.mean1 = std::min(m[0], m[1]);
  out.mean2 = std::max(m[0], m[1]);
  out.suspected_bimodal = out.bic_improvement > gates.bic_margin && out.separation > gates.separation_sd &&
                          out.minor_weight > gates.min_weight;
  return out;
}

bool zero_estimate(const std::vector<double>& draws, double prior_sd) {
  const double eps = 1e-3 * prior_sd;
  return std::fabs(mean(draws)) < eps && sd(draws) < eps;
}

const ParameterSummary& DiagnosticsReport::at(const std::string& name) const {
  for (const auto& p : parameters)
    if (p.name == name) return p;
  throw std::out_of_range("diagnostics: no parameter named '" + name + "'");
}

DiagnosticsReport diagnose(const PosteriorDraws& draws, const std::vector<std::string>& include) {
  DiagnosticsReport rep;
  rep.divergences = draws.divergences();
  rep.depth_saturations = draws.depth_saturations();
  rep.total_draws = static_cast<double>(draws.chains) * draws.draws;
  for (std::size_t p = 0; p < draws.params(); ++p) {
    ParameterSummary s;
    s.name = draws.names[p];
    const auto chains = draws.by_chain(p);
    const auto pooled = draws.pooled(p);
    s.mean = mean(pooled);
    s.sd = sd(pooled);
    s.q025 = quantile(pooled, 0.025);
    s.q975 = quantile(pooled, 0.975);
    if (draws.draws >= 4) {
      const auto rh = split_rhat(chains);
      const auto es = ess(chains);
      s.rhat = rh.value;
      s.ess = es.value;
      s.degenerate = rh.degenerate || es.degenerate;
      s.mcse = s.degenerate ? 0.0 : s.sd / std::sqrt(s.ess);
    } else {
      s.degenerate = true;
    }
    const bool counted = include.empty() || std::find(include.begin(), include.end(), s.name) != include.end();
    if (counted && !s.degenerate) {
      if (!(s.rhat < 1.1)) rep.rhat_ok = false;
      if (!(s.mcse < 0.1 * s.sd)) rep.mcse_ok = false;
      if (!(s.ess > 0.1 * rep.total_draws)) rep.ess_ok = false;
    }
    rep.parameters.push_back(std::move(s));
  }
  return rep;
}

UFitReport u_fit_report(const ChainMatrix& subject_draws, const std::optional<std::vector<double>>& truth,
                        double prior_sd, double constant_cutoff) {
  if (truth && truth->size() != subject_draws.size())
    throw std::invalid_argument("u_fit_report: truth length does not match the subject count");
  UFitReport out;
  for (const auto& d : subject_draws) {
    out.mean.push_back(mean(d));
    out.lo.push_back(quantile(d, 0.025));
    out.hi.push_back(quantile(d, 0.975));
  }
  if (truth) {
    double ss = 0.0;
    for (std::size_t i = 0; i < out.mean.size(); ++i) ss += (out.mean[i] - (*truth)[i]) * (out.mean[i] - (*truth)[i]);
    out.rmse = std::sqrt(ss / static_cast<double>(out.mean.size()));
  }
  out.spread = out.mean.size() > 1 ? sd(out.mean) : 0.0;
  out.constant_flag = out.spread < constant_cutoff * prior_sd;
  return out;
}

UFitReport u_fit_report(const PosteriorDraws& draws, const std::string& block,
                        const std::optional<std::vector<double>>& truth, double prior_sd, double constant_cutoff) {
  ChainMatrix subject;
  for (std::size_t i = 1;; ++i) {
    const auto idx = draws.index_of(block + "[" + std::to_string(i) + "]");
    if (!idx) break;
    subject.push_back(draws.pooled(*idx));
  }
  return u_fit_report(subject, truth, prior_sd, constant_cutoff);
}

}  // namespace cforge
