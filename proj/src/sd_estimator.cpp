#include "cforge/sd_estimator.hpp"

#include <cmath>

#include "cforge/diagnostics.hpp"
#include "cforge/rng.hpp"

namespace cforge {

double pooled_sd(const std::map<std::string, std::vector<double>>& groups, std::vector<std::string>* warnings,
                 std::vector<GroupSd>* used) {
  double num = 0.0, den = 0.0;
  for (const auto& [name, v] : groups) {
    if (v.size() < 2) {
      if (warnings) warnings->push_back("group '" + name + "' has fewer than two values and was excluded");
      continue;
    }
    const double var = variance(v);
    num += (static_cast<double>(v.size()) - 1.0) * var;
    den += static_cast<double>(v.size()) - 1.0;
    if (used) used->push_back({name, v.size(), std::sqrt(var)});
  }
  if (den == 0.0) throw EstimationError("pooled_sd: every group has fewer than two values");
  return std::sqrt(num / den);
}

std::string to_string(SdGrouping g) {
  switch (g) {
    case SdGrouping::complier_vs_rest: return "complier_vs_rest";
    case SdGrouping::treated_compliers: return "treated_compliers";
    case SdGrouping::treated_by_compliance: return "treated_by_compliance";
    case SdGrouping::whole_sample: return "whole_sample";
  }
  return "?";
}

SdGrouping parse_sd_grouping(const std::string& s) {
  for (auto g : {SdGrouping::complier_vs_rest, SdGrouping::treated_compliers, SdGrouping::treated_by_compliance,
                 SdGrouping::whole_sample})
    if (to_string(g) == s) return g;
  throw std::invalid_argument("unknown sd grouping '" + s +
                              "' (expected complier_vs_rest, treated_compliers, treated_by_compliance or whole_sample)");
}

namespace {

struct Value {
  bool missing;
  double x;
};

Value value_of(const Observation& o, const std::string& variable) {
  if (variable == "y") return {o.y_missing, o.y};
  std::size_t h = 0;
  if (variable != "w") {
    if (variable.size() != 2 || variable[0] != 'w' || variable[1] < '1' || variable[1] > '3')
      throw std::invalid_argument("sd variable must be y, w or w1..w3 (got '" + variable + "')");
    h = static_cast<std::size_t>(variable[1] - '1');
  }
  if (h >= o.w.size()) throw std::invalid_argument("sd variable '" + variable + "' exceeds the exposure count");
  return {o.w_missing[h], o.w[h]};
}

std::map<std::string, std::vector<double>> groups_of(const Dataset& data, const std::vector<std::size_t>& rows,
                                                     const std::string& variable, SdGrouping grouping) {
  std::map<std::string, std::vector<double>> out;
  for (std::size_t r : rows) {
    const auto& o = data.observations[r];
    const auto v = value_of(o, variable);
    if (v.missing) continue;
    Compliance g = o.compliance;
    if (g == Compliance::unknown) g = observed_compliance(o, data.sidedness);
    const bool treated_co = o.z == 1 && g == Compliance::complier;
    const bool treated_nt = o.z == 1 && g == Compliance::never_taker;
    switch (grouping) {
      case SdGrouping::complier_vs_rest: out[treated_co ? "treated_compliers" : "rest"].push_back(v.x); break;
      case SdGrouping::treated_compliers:
        if (treated_co) out["treated_compliers"].push_back(v.x);
        break;
      case SdGrouping::treated_by_compliance:
        if (treated_co) out["treated_compliers"].push_back(v.x);
        if (treated_nt) out["treated_never_takers"].push_back(v.x);
        break;
      case SdGrouping::whole_sample: out["all"].push_back(v.x); break;
    }
  }
  return out;
}

std::vector<std::size_t> all_rows(const Dataset& data) {
  std::vector<std::size_t> r(data.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
  return r;
}

constexpr std::uint64_t kBootstrapStream = 0xB0075000000000ULL;

}  // namespace

std::map<std::string, std::vector<double>> sd_groups(const Dataset& data, const std::string& variable,
                                                     SdGrouping grouping) {
  return groups_of(data, all_rows(data), variable, grouping);
}

PooledSd bootstrap_interval(const Dataset& data, const std::string& variable, SdGrouping grouping, int B,
                            std::uint64_t seed) {
  if (B < 2) throw std::invalid_argument("bootstrap_interval: B must be at least 2");
  PooledSd res;
  const auto full = sd_groups(data, variable, grouping);
  std::size_t dropped = 0;
  for (const auto& o : data.observations) dropped += value_of(o, variable).missing ? 1 : 0;
  if (dropped > 0) res.warnings.push_back(std::to_string(dropped) + " missing values of '" + variable + "' dropped");
  res.point = pooled_sd(full, &res.warnings, &res.groups);

  std::vector<std::size_t> arm[2];
  for (std::size_t i = 0; i < data.size(); ++i) arm[data.observations[i].z].push_back(i);

  std::vector<double> reps;
  std::vector<std::size_t> rows;
  for (int b = 0; b < B; ++b) {
    Rng rng(seed, kBootstrapStream + static_cast<std::uint64_t>(b));
    bool ok = false;
    for (int attempt = 0; attempt <= 10 && !ok; ++attempt) {
      rows.clear();
      for (const auto& a : arm)
        for (std::size_t k = 0; k < a.size(); ++k) rows.push_back(a[rng.below(a.size())]);
      const auto g = groups_of(data, rows, variable, grouping);
      ok = true;
      for (const auto& [name, v] : full)
        if (v.size() >= 2 && (!g.count(name) || g.at(name).size() < 2)) ok = false;
      if (ok) reps.push_back(pooled_sd(g));
    }
    if (!ok) ++res.skipped;
  }
  if (reps.empty()) throw EstimationError("bootstrap_interval: every replicate was degenerate");
  if (res.skipped > 0) res.warnings.push_back(std::to_string(res.skipped) + " degenerate bootstrap replicates skipped");
  res.replicates = static_cast<int>(reps.size());
  res.lo = quantile(reps, 0.025);
  res.hi = quantile(reps, 0.975);
  return res;
}

SigmaEstimates sample_sigma_estimates(const Dataset& data) {
  SigmaEstimates s;
  s.sigma_y = pooled_sd(sd_groups(data, "y", SdGrouping::complier_vs_rest));
  for (int h = 0; h < data.n_exposures; ++h) {
    const std::string v = data.n_exposures == 1 ? "w" : "w" + std::to_string(h + 1);
    s.sigma_w.push_back(pooled_sd(sd_groups(data, v, SdGrouping::treated_compliers)));
  }
  return s;
}

}  // namespace cforge
