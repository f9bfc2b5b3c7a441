#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cforge/autodiff.hpp"
#include "cforge/data.hpp"
#include "cforge/model_spec.hpp"
#include "cforge/sampler.hpp"
#include "cforge/transforms.hpp"

namespace cforge {

// Whether the exposure follows its structural model (1) or is pinned to 0.
int h_interaction(int z, Compliance g, Sidedness sidedness, bool natural_zero = false);

// Numeric code for compliance classes used in G terms of the outcome model:
// one-sided nt=0, co=1; two-sided nt=1, at=2, co=3.
double compliance_code(Compliance g, Sidedness sidedness);

struct Standardization {
  std::string column;
  double mean = 0.0;
  double sd = 1.0;
};

class LogPosterior {
 public:
  virtual ~LogPosterior() = default;

  const ParameterSpace& space() const { return space_; }
  const ModelSpec& spec() const { return spec_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::vector<Standardization>& standardization() const { return standardization_; }

  // Traced log posterior (up to an additive constant).
  virtual Var eval(Tape& tape, std::span<const Var> theta, bool include_priors = true) const = 0;

  double log_density(std::span<const double> theta, std::span<double> grad) const;
  double log_density(std::span<const double> theta) const;
  double log_likelihood(std::span<const double> theta) const;
  LogDensityFn function() const;

  // Generated quantities appended to the draws (e.g. class-specific ATEs).
  virtual std::vector<std::string> derived_names() const { return {}; }
  virtual std::vector<double> derived(std::span<const double> /*theta*/) const { return {}; }

  // Names of the ATE quantities reported by extract_ate.
  virtual std::vector<std::string> ate_names() const = 0;
  // Dataset row of each U' entry (empty when the model has no latent block).
  const std::vector<std::size_t>& latent_rows() const { return latent_rows_; }
  std::size_t missing_parameter_count() const { return missing_params_; }

 protected:
  ParameterSpace space_;
  ModelSpec spec_;
  std::vector<std::string> warnings_;
  std::vector<Standardization> standardization_;
  std::vector<std::size_t> latent_rows_;
  std::size_t missing_params_ = 0;
};

using ModelPtr = std::shared_ptr<const LogPosterior>;

ModelPtr build_one_exposure_logpost(const Dataset& data, const ModelSpec& spec);
ModelPtr build_three_exposure_logpost(const Dataset& data, const ModelSpec& spec);
ModelPtr build_mixture_logpost_two_sided(const Dataset& data, const ModelSpec& spec);
ModelPtr build_iv_2sls_logpost(const Dataset& data, const ModelSpec& spec);
ModelPtr build_random_intercept_outcome_logpost(const Dataset& data, const ModelSpec& spec);
// Dispatches on the spec's comparison, exposure count and the data's sidedness.
ModelPtr build_model(const Dataset& data, const ModelSpec& spec);

struct AteSummary {
  std::string name;
  double mean = 0.0, sd = 0.0, q025 = 0.0, q975 = 0.0, median = 0.0;
  bool heavy_tailed = false;
};

std::vector<AteSummary> extract_ate(const PosteriorDraws& draws, const LogPosterior& model);
std::string ate_csv(const std::vector<AteSummary>& ates);

// Whether the IV ratio is unreliable: the first-stage coefficient's draws
// change sign or its interval covers zero.
bool iv_heavy_tail(const std::vector<double>& alpha_z_draws);

// Re-anchor advice for the ratio reparameterization: true when the multiplier's
// 95% interval covers zero.
bool ratio_reanchor_advised(const PosteriorDraws& draws);

}  // namespace cforge
