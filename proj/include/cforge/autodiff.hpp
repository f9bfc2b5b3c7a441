#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cforge {

// Raised when an operation is evaluated outside its domain (log of a
// non-positive value, division by zero, non-positive scale, ...).
class EvaluationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class OpKind : std::uint8_t {
  input,
  add,
  sub,
  mul,
  div,
  pow,
  exp,
  log,
  neg,
  inv_logit,
  softplus,
  normal_lpdf,
  trunc_normal_lpdf,
  bernoulli_logit,
  log_sum_exp,
  sum,
};

class Tape;

// A traced scalar. A Var without a tape is a constant and records nothing.
struct Var {
  double val = 0.0;
  std::uint32_t idx = 0;
  Tape* tape = nullptr;

  Var() = default;
  Var(double v) : val(v) {}  // NOLINT: implicit constants are intended
  Var(double v, std::uint32_t i, Tape* t) : val(v), idx(i), tape(t) {}

  bool is_constant() const { return tape == nullptr; }
  double value() const { return val; }
};

class Tape {
 public:
  struct Edge {
    std::uint32_t operand;
    double partial;
  };

  Tape() { begin_.push_back(0); }

  Var input(double v);
  void clear();
  std::size_t size() const { return vals_.size(); }
  OpKind kind(std::uint32_t i) const { return kinds_[i]; }
  double value(std::uint32_t i) const { return vals_[i]; }

  // Appends a node whose operands are the non-constant entries of `ops`.
  Var push(OpKind kind, double value, std::span<const Var> ops, std::span<const double> partials);
  Var push1(OpKind kind, double value, const Var& a, double da);
  Var push2(OpKind kind, double value, const Var& a, double da, const Var& b, double db);

  // Reverse sweep from `output`; returns adjoints for every node.
  const std::vector<double>& backward(const Var& output);

 private:
  std::vector<double> vals_;
  std::vector<OpKind> kinds_;
  std::vector<std::uint32_t> begin_;
  std::vector<Edge> edges_;
  std::vector<double> adj_;
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var& operator+=(Var& a, const Var& b);
Var& operator-=(Var& a, const Var& b);
Var& operator*=(Var& a, const Var& b);

Var pow(const Var& a, const Var& b);
Var exp(const Var& a);
Var log(const Var& a);
Var inv_logit(const Var& a);
Var softplus(const Var& a);

Var normal_lpdf(const Var& x, const Var& mu, const Var& sigma);
// Left-truncated normal on [lower, inf). Returns -inf for x < lower.
Var trunc_normal_lpdf(const Var& x, const Var& mu, const Var& sigma, double lower);
Var bernoulli_logit_lpmf(int y, const Var& logit_p);
Var log_sum_exp(std::span<const Var> terms);
Var sum(std::span<const Var> terms);

// Gradient of `output` with respect to each of `inputs`.
std::vector<double> gradient(Tape& tape, const Var& output, std::span<const Var> inputs);

// Plain double helpers shared with the samplers and tests.
double log1p_exp(double x);
double log_inv_logit(double x);
double log_normal_ccdf(double z);

}  // namespace cforge
