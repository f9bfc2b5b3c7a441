#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cforge/data.hpp"

namespace cforge {

struct GroupSd {
  std::string name;
  std::size_t n = 0;
  double sd = 0.0;
};

struct PooledSd {
  double point = 0.0;
  double lo = 0.0, hi = 0.0;
  std::vector<GroupSd> groups;
  int replicates = 0;  // bootstrap replicates that contributed
  int skipped = 0;     // replicates abandoned after repeated degenerate draws
  std::vector<std::string> warnings;
};

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// sqrt(sum (n_g - 1) s_g^2 / sum (n_g - 1)). Groups with fewer than two values
// are dropped (a warning is appended when `warnings` is given).
double pooled_sd(const std::map<std::string, std::vector<double>>& groups, std::vector<std::string>* warnings = nullptr,
                 std::vector<GroupSd>* used = nullptr);

enum class SdGrouping {
  complier_vs_rest,          // treated compliers vs everyone else (outcome)
  treated_compliers,         // treated compliers only (exposure)
  treated_by_compliance,     // treated compliers and treated never-takers
  whole_sample,
};
std::string to_string(SdGrouping g);
SdGrouping parse_sd_grouping(const std::string& s);

// `variable` is "y" or "w" / "w1".."w3". Missing values are dropped.
std::map<std::string, std::vector<double>> sd_groups(const Dataset& data, const std::string& variable,
                                                     SdGrouping grouping);

// Resamples subjects with replacement within each arm (original arm sizes).
PooledSd bootstrap_interval(const Dataset& data, const std::string& variable, SdGrouping grouping, int B = 100,
                            std::uint64_t seed = 1);

struct SigmaEstimates {
  double sigma_y = 0.0;
  std::vector<double> sigma_w;
};
// The pooled sample sds used as prior means in informative-sigma mode:
// outcome pooled over treated compliers and the rest, exposures over treated
// compliers.
SigmaEstimates sample_sigma_estimates(const Dataset& data);

}  // namespace cforge
