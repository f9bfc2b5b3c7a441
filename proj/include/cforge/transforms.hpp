#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cforge/autodiff.hpp"

namespace cforge {

struct ConstraintTransform {
  enum class Kind { identity, lower_bound, upper_bound, interval, simplex };
  Kind kind = Kind::identity;
  double a = 0.0;
  double b = 0.0;

  static ConstraintTransform identity() { return {}; }
  static ConstraintTransform lower(double bound) { return {Kind::lower_bound, bound, 0.0}; }
  static ConstraintTransform upper(double bound) { return {Kind::upper_bound, bound, 0.0}; }
  static ConstraintTransform interval(double lo, double hi) { return {Kind::interval, lo, hi}; }
  static ConstraintTransform simplex() { return {Kind::simplex, 0.0, 0.0}; }

  // Scalar maps; not defined for simplex.
  double forward(double u) const;
  double inverse(double x) const;
  double log_jacobian(double u) const;
  bool satisfied(double x) const;
};

// Prior metadata attached to a block. The model adds the prior terms itself;
// this record is what reports use (prior sd for S_p and zero-estimate checks).
struct PriorSpec {
  enum class Kind { none, normal, uniform, dirichlet };
  Kind kind = Kind::normal;
  double mean = 0.0;
  double sd = 1.0;
};

struct ParameterBlock {
  std::string name;
  std::size_t length = 1;
  ConstraintTransform transform;
  PriorSpec prior;
  std::size_t natural_offset = 0;
  std::size_t unconstrained_offset = 0;

  // A simplex of length K has K - 1 free coordinates.
  std::size_t unconstrained_length() const;
};

class ParameterSpace {
 public:
  ParameterBlock& add(std::string name, std::size_t length, ConstraintTransform transform, PriorSpec prior = {});

  const std::vector<ParameterBlock>& blocks() const { return blocks_; }
  const ParameterBlock* find(const std::string& name) const;
  const ParameterBlock& at(const std::string& name) const;
  bool has(const std::string& name) const { return find(name) != nullptr; }

  std::size_t natural_dim() const { return natural_dim_; }
  std::size_t dim() const { return unconstrained_dim_; }

  // Flattened names: "beta0", "u_prime[1]", ...
  std::vector<std::string> names() const;

 private:
  std::vector<ParameterBlock> blocks_;
  std::size_t natural_dim_ = 0;
  std::size_t unconstrained_dim_ = 0;
};

struct NaturalPoint {
  std::vector<double> values;
  double log_jacobian = 0.0;
};

NaturalPoint transform_to_natural(const ParameterSpace& space, std::span<const double> u);
std::vector<double> transform_to_unconstrained(const ParameterSpace& space, std::span<const double> natural);

// Traced variant used by the sampler to chain-rule through the transforms.
Var transform_to_natural(const ParameterSpace& space, std::span<const Var> u, std::vector<Var>& natural);

}  // namespace cforge
