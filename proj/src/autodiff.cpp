#include "cforge/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cforge {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;

Tape* common_tape(const Var& a, const Var& b) {
  if (a.tape && b.tape && a.tape != b.tape)
    throw std::invalid_argument("autodiff: operands belong to different tapes");
  return a.tape ? a.tape : b.tape;
}

Tape* common_tape(std::span<const Var> ops) {
  Tape* t = nullptr;
  for (const auto& v : ops) {
    if (!v.tape) continue;
    if (t && t != v.tape) throw std::invalid_argument("autodiff: operands belong to different tapes");
    t = v.tape;
  }
  return t;
}

}  // namespace

double log1p_exp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double log_inv_logit(double x) { return -log1p_exp(-x); }

double log_normal_ccdf(double z) {
  if (z < 30.0) return std::log(0.5 * std::erfc(z / std::numbers::sqrt2));
  // Asymptotic series of the Mills ratio for the far tail.
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - kHalfLog2Pi - std::log(z) + std::log(series);
}

Var Tape::input(double v) {
  const auto i = static_cast<std::uint32_t>(vals_.size());
  vals_.push_back(v);
  kinds_.push_back(OpKind::input);
  begin_.push_back(static_cast<std::uint32_t>(edges_.size()));
  return Var(v, i, this);
}

void Tape::clear() {
  vals_.clear();
  kinds_.clear();
  edges_.clear();
  begin_.assign(1, 0);
}

Var Tape::push(OpKind kind, double value, std::span<const Var> ops, std::span<const double> partials) {
  for (std::size_t k = 0; k < ops.size(); ++k) {
    if (ops[k].is_constant()) continue;
    if (ops[k].tape != this) throw std::invalid_argument("autodiff: operand from a foreign tape");
    edges_.push_back({ops[k].idx, partials[k]});
  }
  const auto i = static_cast<std::uint32_t>(vals_.size());
  vals_.push_back(value);
  kinds_.push_back(kind);
  begin_.push_back(static_cast<std::uint32_t>(edges_.size()));
  return Var(value, i, this);
}

Var Tape::push1(OpKind kind, double value, const Var& a, double da) {
  edges_.push_back({a.idx, da});
  const auto i = static_cast<std::uint32_t>(vals_.size());
  vals_.push_back(value);
  kinds_.push_back(kind);
  begin_.push_back(static_cast<std::uint32_t>(edges_.size()));
  return Var(value, i, this);
}

Var Tape::push2(OpKind kind, double value, const Var& a, double da, const Var& b, double db) {
  if (!a.is_constant()) edges_.push_back({a.idx, da});
  if (!b.is_constant()) edges_.push_back({b.idx, db});
  const auto i = static_cast<std::uint32_t>(vals_.size());
  vals_.push_back(value);
  kinds_.push_back(kind);
  begin_.push_back(static_cast<std::uint32_t>(edges_.size()));
  return Var(value, i, this);
}

const std::vector<double>& Tape::backward(const Var& output) {
  adj_.assign(vals_.size(), 0.0);
  if (output.is_constant()) return adj_;
  if (output.tape != this) throw std::invalid_argument("autodiff: output from a foreign tape");
  adj_[output.idx] = 1.0;
  for (std::int64_t i = output.idx; i >= 0; --i) {
    const double a = adj_[i];
    if (a == 0.0) continue;
    for (std::uint32_t e = begin_[i]; e < begin_[i + 1]; ++e)
      adj_[edges_[e].operand] += a * edges_[e].partial;
  }
  return adj_;
}

namespace {

Var unary(OpKind kind, const Var& a, double value, double da) {
  if (a.is_constant()) return Var(value);
  return a.tape->push1(kind, value, a, da);
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  if (!t) return Var(a.val + b.val);
  return t->push2(OpKind::add, a.val + b.val, a, 1.0, b, 1.0);
}

Var operator-(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  if (!t) return Var(a.val - b.val);
  return t->push2(OpKind::sub, a.val - b.val, a, 1.0, b, -1.0);
}

Var operator*(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  if (!t) return Var(a.val * b.val);
  return t->push2(OpKind::mul, a.val * b.val, a, b.val, b, a.val);
}

Var operator/(const Var& a, const Var& b) {
  if (b.val == 0.0) throw EvaluationError("autodiff: division by zero");
  Tape* t = common_tape(a, b);
  const double q = a.val / b.val;
  if (!t) return Var(q);
  return t->push2(OpKind::div, q, a, 1.0 / b.val, b, -q / b.val);
}

Var operator-(const Var& a) { return unary(OpKind::neg, a, -a.val, -1.0); }

Var& operator+=(Var& a, const Var& b) { return a = a + b; }
Var& operator-=(Var& a, const Var& b) { return a = a - b; }
Var& operator*=(Var& a, const Var& b) { return a = a * b; }

Var pow(const Var& a, const Var& b) {
  const bool integral = b.is_constant() && std::floor(b.val) == b.val;
  if (a.val < 0.0 && !integral) throw EvaluationError("autodiff: pow of negative base with non-integer exponent");
  if (a.val == 0.0 && b.val < 0.0) throw EvaluationError("autodiff: pow of zero with negative exponent");
  const double v = std::pow(a.val, b.val);
  const double da = (b.val == 0.0) ? 0.0 : b.val * std::pow(a.val, b.val - 1.0);
  const double db = (a.val > 0.0) ? v * std::log(a.val) : 0.0;
  Tape* t = common_tape(a, b);
  if (!t) return Var(v);
  return t->push2(OpKind::pow, v, a, da, b, db);
}

Var exp(const Var& a) {
  const double v = std::exp(a.val);
  return unary(OpKind::exp, a, v, v);
}

Var log(const Var& a) {
  if (!(a.val > 0.0)) throw EvaluationError("autodiff: log of a non-positive value");
  return unary(OpKind::log, a, std::log(a.val), 1.0 / a.val);
}

Var inv_logit(const Var& a) {
  double s;
  if (a.val >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-a.val));
  } else {
    const double e = std::exp(a.val);
    s = e / (1.0 + e);
  }
  return unary(OpKind::inv_logit, a, s, s * (1.0 - s));
}

Var softplus(const Var& a) {
  const double v = log1p_exp(a.val);
  const double d = inv_logit(Var(a.val)).val;
  return unary(OpKind::softplus, a, v, d);
}

Var normal_lpdf(const Var& x, const Var& mu, const Var& sigma) {
  if (!(sigma.val > 0.0)) throw EvaluationError("normal_lpdf: scale must be positive");
  const double inv_s = 1.0 / sigma.val;
  const double z = (x.val - mu.val) * inv_s;
  const double v = -0.5 * z * z - std::log(sigma.val) - kHalfLog2Pi;
  const Var ops[3] = {x, mu, sigma};
  Tape* t = common_tape(ops);
  if (!t) return Var(v);
  const double dmu = z * inv_s;
  const double partials[3] = {-dmu, dmu, (z * z - 1.0) * inv_s};
  return t->push(OpKind::normal_lpdf, v, ops, partials);
}

Var trunc_normal_lpdf(const Var& x, const Var& mu, const Var& sigma, double lower) {
  if (!(sigma.val > 0.0)) throw EvaluationError("trunc_normal_lpdf: scale must be positive");
  if (x.val < lower) return Var(kNegInf);
  if (lower == kNegInf) return normal_lpdf(x, mu, sigma);
  const double inv_s = 1.0 / sigma.val;
  const double z = (x.val - mu.val) * inv_s;
  const double zl = (lower - mu.val) * inv_s;
  const double log_tail = log_normal_ccdf(zl);
  const double v = -0.5 * z * z - std::log(sigma.val) - kHalfLog2Pi - log_tail;
  const Var ops[3] = {x, mu, sigma};
  Tape* t = common_tape(ops);
  if (!t) return Var(v);
  // Inverse Mills ratio at the truncation point.
  const double lambda = std::exp(-0.5 * zl * zl - kHalfLog2Pi - log_tail);
  const double dmu = z * inv_s - lambda * inv_s;
  const double dsigma = (z * z - 1.0) * inv_s - lambda * zl * inv_s;
  const double partials[3] = {-z * inv_s, dmu, dsigma};
  return t->push(OpKind::trunc_normal_lpdf, v, ops, partials);
}

Var bernoulli_logit_lpmf(int y, const Var& logit_p) {
  if (y != 0 && y != 1) throw std::invalid_argument("bernoulli_logit_lpmf: outcome must be 0 or 1");
  const double l = logit_p.val;
  const double v = y * l - log1p_exp(l);
  const double p = inv_logit(Var(l)).val;
  return unary(OpKind::bernoulli_logit, logit_p, v, y - p);
}

Var log_sum_exp(std::span<const Var> terms) {
  if (terms.empty()) throw std::invalid_argument("log_sum_exp: empty term list");
  if (terms.size() == 1) return terms[0];
  double m = kNegInf;
  for (const auto& t : terms) m = std::max(m, t.val);
  Tape* t = common_tape(terms);
  if (m == kNegInf) return Var(kNegInf);
  if (m == std::numeric_limits<double>::infinity()) throw EvaluationError("log_sum_exp: infinite term");
  double s = 0.0;
  thread_local std::vector<double> w;
  w.resize(terms.size());
  for (std::size_t k = 0; k < terms.size(); ++k) {
    w[k] = std::exp(terms[k].val - m);
    s += w[k];
  }
  const double v = m + std::log(s);
  if (!t) return Var(v);
  for (auto& wk : w) wk /= s;
  return t->push(OpKind::log_sum_exp, v, terms, w);
}

Var sum(std::span<const Var> terms) {
  double v = 0.0;
  for (const auto& t : terms) v += t.val;
  Tape* t = common_tape(terms);
  if (!t) return Var(v);
  thread_local std::vector<double> ones;
  ones.assign(terms.size(), 1.0);
  return t->push(OpKind::sum, v, terms, ones);
}

std::vector<double> gradient(Tape& tape, const Var& output, std::span<const Var> inputs) {
  for (const auto& in : inputs)
    if (in.tape != &tape) throw std::invalid_argument("gradient: input does not belong to this tape");
  if (!output.is_constant() && output.tape != &tape)
    throw std::invalid_argument("gradient: output does not belong to this tape");
  const auto& adj = tape.backward(output);
  std::vector<double> g(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) g[k] = adj[inputs[k].idx];
  return g;
}

}  // namespace cforge
