#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cforge/transforms.hpp"

namespace cforge {

struct SamplerConfig {
  int chains = 4;
  int iterations = 2000;
  int warmup = 1000;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;

  void validate() const;
};

// Log density on the natural scale. Writes the gradient into `grad` (same
// length as the natural vector) and returns the value. May return -inf or
// throw EvaluationError for states outside the support.
using LogDensityFn = std::function<double(std::span<const double> natural, std::span<double> grad)>;

class InitializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PosteriorDraws {
  std::vector<std::string> names;
  int chains = 0;
  int draws = 0;
  std::vector<double> values;  // [chain][draw][param]
  std::vector<std::uint8_t> divergent;
  std::vector<int> tree_depth;
  std::vector<double> accept_stat;
  std::vector<double> step_size;  // adapted step size per chain
  int max_tree_depth = 10;

  std::size_t params() const { return names.size(); }
  double at(int chain, int draw, std::size_t param) const {
    return values[(static_cast<std::size_t>(chain) * draws + draw) * params() + param];
  }
  std::optional<std::size_t> index_of(const std::string& name) const;
  std::size_t require(const std::string& name) const;
  // Draws of one parameter split by chain.
  std::vector<std::vector<double>> by_chain(std::size_t param) const;
  // Draws of one parameter pooled over chains.
  std::vector<double> pooled(std::size_t param) const;
  std::vector<double> pooled(const std::string& name) const { return pooled(require(name)); }
  int divergences() const;
  int depth_saturations() const;

  // Appends derived quantities computed from each draw's full parameter row.
  void add_derived(const std::vector<std::string>& derived_names,
                   const std::function<std::vector<double>(std::span<const double>)>& fn);
};

std::vector<double> init_strategy(const ParameterSpace& space, std::uint64_t seed, std::uint64_t stream = 0);

PosteriorDraws nuts_run(const LogDensityFn& logdensity, const ParameterSpace& space, const SamplerConfig& config,
                        const std::optional<std::vector<double>>& init = std::nullopt);

// Number of chains allowed to run at once (CONFOUNDER_FORGE_THREADS caps it).
int max_parallel_chains(int chains);

}  // namespace cforge
