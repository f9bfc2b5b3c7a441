#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cforge/sampler.hpp"

namespace cforge {

using ChainMatrix = std::vector<std::vector<double>>;  // [chain][draw]

struct StatResult {
  double value = 0.0;
  bool degenerate = false;
};

StatResult split_rhat(const ChainMatrix& chains);
StatResult ess(const ChainMatrix& chains);

double mean(const std::vector<double>& x);
double variance(const std::vector<double>& x);  // n - 1 denominator
double sd(const std::vector<double>& x);
// Type-7 (linear interpolation) sample quantile.
double quantile(std::vector<double> x, double prob);

double prior_sensitivity(const std::vector<double>& draws, double prior_sd);

struct CorrelationResult {
  double r = 0.0;
  bool flagged = false;  // |r| > 0.1
  bool degenerate = false;
};
CorrelationResult sd_pair_correlation(const std::vector<double>& sigma_w, const std::vector<double>& sigma_y);

struct BimodalityGates {
  double bic_margin = 10.0;
  double separation_sd = 2.0;
  double min_weight = 0.15;
  int max_iterations = 500;
};

struct BimodalityResult {
  bool suspected_bimodal = false;
  bool converged = true;
  double bic_improvement = 0.0;
  double separation = 0.0;  // |mu1 - mu2| / pooled within-component sd
  double minor_weight = 0.0;
  double mean1 = 0.0, mean2 = 0.0;
  std::string warning;
};
BimodalityResult bimodality_check(const std::vector<double>& draws, const BimodalityGates& gates = {});

struct ParameterSummary {
  std::string name;
  double mean = 0.0, sd = 0.0, q025 = 0.0, q975 = 0.0;
  double rhat = 0.0, ess = 0.0, mcse = 0.0;
  bool degenerate = false;
};

struct DiagnosticsReport {
  std::vector<ParameterSummary> parameters;
  int divergences = 0;
  int depth_saturations = 0;
  bool rhat_ok = true, mcse_ok = true, ess_ok = true;
  double total_draws = 0.0;

  bool all_ok() const { return rhat_ok && mcse_ok && ess_ok; }
  const ParameterSummary& at(const std::string& name) const;
};

// `include` limits which parameters enter the flags; empty means all.
DiagnosticsReport diagnose(const PosteriorDraws& draws, const std::vector<std::string>& include = {});

struct UFitReport {
  std::vector<double> mean, lo, hi;
  std::optional<double> rmse;
  bool constant_flag = false;  // posterior means (almost) constant across subjects
  double spread = 0.0;         // sd of posterior means across subjects
};
// Constant-U' cutoff: sd of subject means below `constant_cutoff` x prior sd.
UFitReport u_fit_report(const ChainMatrix& pooled_subject_draws, const std::optional<std::vector<double>>& truth,
                        double prior_sd = 3.0, double constant_cutoff = 0.05);
UFitReport u_fit_report(const PosteriorDraws& draws, const std::string& block,
                        const std::optional<std::vector<double>>& truth, double prior_sd = 3.0,
                        double constant_cutoff = 0.05);

bool zero_estimate(const std::vector<double>& draws, double prior_sd);

struct IdentifiabilityReport {
  std::optional<CorrelationResult> sd_correlation;
  std::vector<std::pair<std::string, BimodalityResult>> bimodality;
  std::vector<std::pair<std::string, bool>> zero_estimates;
  std::optional<UFitReport> u_fit;
};

}  // namespace cforge
