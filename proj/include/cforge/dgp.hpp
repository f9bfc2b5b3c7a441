#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cforge/data.hpp"

namespace cforge {

enum class ConfounderDist { normal, lognormal, poisson };
std::string to_string(ConfounderDist d);
ConfounderDist parse_confounder_dist(const std::string& s);

// Scenario ids:
//   1  outcome-only effect, one-sided noncompliance
//   2  compliance shifts the outcome intercept
//   3  two-sided noncompliance with class-specific effects
//   4  one unmeasured confounder (normal / lognormal / poisson)
//   5  one non-normal unmeasured confounder (scenario 4 with `confounder`
//      defaulting to lognormal)
//   6  measured confounder plus auxiliary covariates
//   7  two unmeasured confounders
struct ScenarioConfig {
  int scenario = 1;
  bool big_effect = true;
  double never_taker_share = 0.1;  // scenario 2 also uses 0.4
  ConfounderDist confounder = ConfounderDist::normal;
  double lognormal_meanlog = 1.0;
  double lognormal_sdlog = 1.0;
  int n = 300;
  std::uint64_t seed = 1;

  void validate() const;
};

// Scenario 5 preset: scenario 4's equations with a lognormal confounder.
ScenarioConfig scenario5_default(std::uint64_t seed = 1);

struct GroundTruth {
  int scenario = 0;
  std::vector<Compliance> compliance;
  std::vector<double> u1, u2;  // empty when the scenario has no such confounder
  std::vector<double> u_prime;
  std::map<std::string, double> parameters;
};

struct Simulated {
  Dataset data;
  GroundTruth truth;
};

Simulated generate(const ScenarioConfig& config);

// Scenario-specific affine map of the latent confounders to U'.
std::vector<double> oracle_u_prime(const GroundTruth& truth);
double oracle_u_prime(int scenario, double u1, double u2 = 0.0);

// Rejection sampler for N(mu, sigma) truncated to [lower, inf).
class Rng;
double sample_left_truncated(Rng& rng, double mu, double sigma, double lower, long max_proposals = 1000000);

std::string scenario_file_stem(const ScenarioConfig& config);
// Writes <dir>/scenario<k>_seed<seed>_{data,truth}.csv and returns both paths.
std::pair<std::string, std::string> write_scenario(const Simulated& sim, const ScenarioConfig& config,
                                                   const std::string& dir);

}  // namespace cforge
