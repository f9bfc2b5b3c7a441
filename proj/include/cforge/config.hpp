#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cforge/data.hpp"
#include "cforge/dgp.hpp"
#include "cforge/model_spec.hpp"
#include "cforge/sampler.hpp"

namespace cforge {

// Invalid run configuration. The message starts with the offending field's
// path, e.g. "model.priors.u_prime.sd: must be positive".
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SensitivityOverride {
  std::string label;
  std::map<std::string, NormalPrior> priors;
  std::optional<double> sigma_y_estimate;
  std::vector<double> sigma_w_estimates;
};

struct RunConfig {
  std::optional<std::string> data_path;
  CsvLayout layout;
  std::optional<ScenarioConfig> scenario;
  ModelSpec spec;
  bool sigma_auto = false;  // informative sigma means from the pooled sample sds
  SamplerConfig sampler;
  std::string out_dir = "out";
  std::string draws_format = "binary";  // or "csv"
  std::vector<SensitivityOverride> sweep;
};

// `base_dir` resolves a relative data path.
RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir = "");
RunConfig load_run_config(const std::string& path);

// Applies a "block=restriction" flag such as "alpha9=nonpos".
void apply_restriction_flag(ModelSpec& spec, const std::string& flag);

}  // namespace cforge
