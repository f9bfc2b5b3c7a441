#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cforge {

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Family { simplest, variation_additive_g, variation_gxw, variation_full_interaction, confounders_modify_w };
enum class Unmeasured { none, one_latent, two_latent };
enum class Reparam { none, random_intercept, ratio };
enum class Comparison { none, association, complete_case, iv_2sls, random_intercept_outcome };
enum class ComplianceModel { none, bernoulli, logistic, dirichlet };
enum class SignRestriction { free, nonneg, nonpos };
enum class SigmaMode { sampled, informative };
enum class TwoLatentMode { drop_residual, residual_intercept };

std::string to_string(Family f);
std::string to_string(Unmeasured u);
std::string to_string(Reparam r);
std::string to_string(Comparison c);
std::string to_string(ComplianceModel c);
std::string to_string(SignRestriction s);
Family parse_family(const std::string& s);
Unmeasured parse_unmeasured(const std::string& s);
Reparam parse_reparam(const std::string& s);
Comparison parse_comparison(const std::string& s);
ComplianceModel parse_compliance_model(const std::string& s);
SignRestriction parse_sign_restriction(const std::string& s);

struct NormalPrior {
  double mean = 0.0;
  double sd = 1.0;
};

struct ModelSpec {
  Family family = Family::simplest;
  int n_exposures = 1;
  Unmeasured unmeasured = Unmeasured::none;
  Reparam reparam = Reparam::none;
  bool control_is_natural_zero = false;
  Comparison comparison = Comparison::none;
  ComplianceModel compliance = ComplianceModel::none;

  // Whether exposure distributions enter the likelihood at all. The
  // simplest-framework fits of the paper regress the outcome only.
  bool exposure_model = true;
  // Support indicator I(w >= lower) on active exposure densities.
  std::optional<double> exposure_support_lower;

  std::vector<std::string> outcome_covariates;
  std::vector<std::string> exposure_covariates;
  std::vector<std::string> compliance_covariates;
  // Continuous covariates given a N(mu, sigma) model so that missing values
  // can be imputed.
  std::vector<std::string> covariate_models;
  bool standardize = false;

  // Per exposure: does U' enter that exposure's distribution. Empty = all.
  std::vector<bool> latent_in_exposure;

  std::map<std::string, NormalPrior> priors;
  std::map<std::string, SignRestriction> sign_restrictions;

  SigmaMode sigma_mode = SigmaMode::sampled;
  double informative_sd = 0.01;
  std::optional<double> sigma_y_estimate;
  std::vector<double> sigma_w_estimates;

  std::size_t ratio_anchor = 0;
  bool confounders_combined = false;
  TwoLatentMode two_latent_mode = TwoLatentMode::drop_residual;
  double dirichlet_concentration = 0.5;

  NormalPrior prior(const std::string& block) const;
  SignRestriction restriction(const std::string& block) const;
  bool latent_in(int exposure) const;
  bool uses_latent() const;
  bool family_uses_g() const;
  void validate() const;
};

NormalPrior default_prior(const std::string& block);

// Outcome loses its intercept and U coefficient; U' enters with coefficient 1
// and each active exposure distribution gets a free intercept and a free
// coefficient on U'.
ModelSpec apply_random_intercept_reparam(ModelSpec spec);
// Pins U'[anchor] = 1 and adds a scalar multiplier beta_u on U' in the outcome.
ModelSpec apply_ratio_reparam(ModelSpec spec, std::size_t anchor_index);
// Collapses U1, U2 into one U' (U' = b0 + b3 U1 + b4 U2).
ModelSpec combine_two_confounders(ModelSpec spec, TwoLatentMode mode = TwoLatentMode::drop_residual);

// Original -> random-intercept coefficients for an exposure
//   W = a0 + a2 U,   Y = b0 + b3 U + ...   with   U' = b0 + b3 U.
struct RandomInterceptMap {
  double alpha0_prime;
  double alpha_u_prime;
};
RandomInterceptMap random_intercept_map(double alpha0, double alpha2, double beta0, double beta3);

// Two confounders, W = a0 + a2 U1 + a3 U2, U' = b0 + b3 U1 + b4 U2.
// The general form keeps a residual term; when a2/b3 == a3/b4 the exposure is
// exactly a0 - c b0 + c U' with c = a2/b3 and the residual vanishes.
struct CombinedExposureMap {
  double alpha0_prime;
  double alpha_u_prime;
  bool proportional;
};
CombinedExposureMap combined_exposure_map(double alpha0, double alpha2, double alpha3, double beta0, double beta3,
                                          double beta4, double tol = 1e-12);
// Residual term that the combined representation leaves behind, so that
//   W = alpha0' + alpha_u' U' + residual.
double combined_exposure_residual(const CombinedExposureMap& m, double alpha0, double alpha2, double alpha3,
                                  double beta0, double beta3, double beta4, double u1, double u2);

}  // namespace cforge
