#include "cforge/transforms.hpp"

#include <cmath>
#include <stdexcept>

namespace cforge {

namespace {

double logistic(double u) { return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u)); }

}  // namespace

double ConstraintTransform::forward(double u) const {
  switch (kind) {
    case Kind::identity: return u;
    case Kind::lower_bound: return a + std::exp(u);
    case Kind::upper_bound: return a - std::exp(u);
    case Kind::interval: return a + (b - a) * logistic(u);
    case Kind::simplex: break;
  }
  throw std::logic_error("ConstraintTransform: scalar map requested for a simplex");
}

double ConstraintTransform::inverse(double x) const {
  switch (kind) {
    case Kind::identity: return x;
    case Kind::lower_bound: return std::log(x - a);
    case Kind::upper_bound: return std::log(a - x);
    case Kind::interval: {
      const double t = (x - a) / (b - a);
      return std::log(t) - std::log1p(-t);
    }
    case Kind::simplex: break;
  }
  throw std::logic_error("ConstraintTransform: scalar map requested for a simplex");
}

double ConstraintTransform::log_jacobian(double u) const {
  switch (kind) {
    case Kind::identity: return 0.0;
    case Kind::lower_bound:
    case Kind::upper_bound: return u;
    case Kind::interval: return std::log(b - a) - log1p_exp(-u) - log1p_exp(u);
    case Kind::simplex: break;
  }
  throw std::logic_error("ConstraintTransform: scalar map requested for a simplex");
}

bool ConstraintTransform::satisfied(double x) const {
  switch (kind) {
    case Kind::identity: return std::isfinite(x);
    case Kind::lower_bound: return x > a;
    case Kind::upper_bound: return x < a;
    case Kind::interval: return x > a && x < b;
    case Kind::simplex: return x >= 0.0 && x <= 1.0;
  }
  return false;
}

std::size_t ParameterBlock::unconstrained_length() const {
  if (transform.kind == ConstraintTransform::Kind::simplex) return length == 0 ? 0 : length - 1;
  return length;
}

ParameterBlock& ParameterSpace::add(std::string name, std::size_t length, ConstraintTransform transform,
                                    PriorSpec prior) {
  if (find(name)) throw std::invalid_argument("ParameterSpace: duplicate block name '" + name + "'");
  if (transform.kind == ConstraintTransform::Kind::simplex && length < 2)
    throw std::invalid_argument("ParameterSpace: simplex block '" + name + "' needs at least 2 entries");
  ParameterBlock b;
  b.name = std::move(name);
  b.length = length;
  b.transform = transform;
  b.prior = prior;
  b.natural_offset = natural_dim_;
  b.unconstrained_offset = unconstrained_dim_;
  natural_dim_ += length;
  unconstrained_dim_ += b.unconstrained_length();
  blocks_.push_back(std::move(b));
  return blocks_.back();
}

const ParameterBlock* ParameterSpace::find(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return &b;
  return nullptr;
}

const ParameterBlock& ParameterSpace::at(const std::string& name) const {
  const auto* b = find(name);
  if (!b) throw std::out_of_range("ParameterSpace: no block named '" + name + "'");
  return *b;
}

std::vector<std::string> ParameterSpace::names() const {
  std::vector<std::string> out;
  out.reserve(natural_dim_);
  for (const auto& b : blocks_) {
    if (b.length == 1 && b.transform.kind != ConstraintTransform::Kind::simplex) {
      out.push_back(b.name);
      continue;
    }
    for (std::size_t i = 0; i < b.length; ++i) out.push_back(b.name + "[" + std::to_string(i + 1) + "]");
  }
  return out;
}

NaturalPoint transform_to_natural(const ParameterSpace& space, std::span<const double> u) {
  if (u.size() != space.dim()) throw std::invalid_argument("transform_to_natural: dimension mismatch");
  NaturalPoint out;
  out.values.resize(space.natural_dim());
  for (const auto& b : space.blocks()) {
    const double* ub = u.data() + b.unconstrained_offset;
    double* xb = out.values.data() + b.natural_offset;
    if (b.transform.kind == ConstraintTransform::Kind::simplex) {
      const std::size_t k = b.length;
      double stick = 1.0;
      for (std::size_t i = 0; i + 1 < k; ++i) {
        const double adj = ub[i] - std::log(static_cast<double>(k - 1 - i));
        const double z = logistic(adj);
        out.log_jacobian += std::log(stick) - log1p_exp(-adj) - log1p_exp(adj);
        xb[i] = stick * z;
        stick -= xb[i];
      }
      xb[k - 1] = stick;
      continue;
    }
    for (std::size_t i = 0; i < b.length; ++i) {
      xb[i] = b.transform.forward(ub[i]);
      out.log_jacobian += b.transform.log_jacobian(ub[i]);
    }
  }
  return out;
}

std::vector<double> transform_to_unconstrained(const ParameterSpace& space, std::span<const double> natural) {
  if (natural.size() != space.natural_dim())
    throw std::invalid_argument("transform_to_unconstrained: dimension mismatch");
  std::vector<double> u(space.dim());
  for (const auto& b : space.blocks()) {
    const double* xb = natural.data() + b.natural_offset;
    double* ub = u.data() + b.unconstrained_offset;
    if (b.transform.kind == ConstraintTransform::Kind::simplex) {
      const std::size_t k = b.length;
      double stick = 1.0;
      for (std::size_t i = 0; i + 1 < k; ++i) {
        const double z = xb[i] / stick;
        ub[i] = std::log(z) - std::log1p(-z) + std::log(static_cast<double>(k - 1 - i));
        stick -= xb[i];
      }
      continue;
    }
    for (std::size_t i = 0; i < b.length; ++i) ub[i] = b.transform.inverse(xb[i]);
  }
  return u;
}

Var transform_to_natural(const ParameterSpace& space, std::span<const Var> u, std::vector<Var>& natural) {
  if (u.size() != space.dim()) throw std::invalid_argument("transform_to_natural: dimension mismatch");
  natural.assign(space.natural_dim(), Var(0.0));
  std::vector<Var> jac;
  for (const auto& b : space.blocks()) {
    const Var* ub = u.data() + b.unconstrained_offset;
    Var* xb = natural.data() + b.natural_offset;
    const auto& t = b.transform;
    switch (t.kind) {
      case ConstraintTransform::Kind::identity:
        for (std::size_t i = 0; i < b.length; ++i) xb[i] = ub[i];
        break;
      case ConstraintTransform::Kind::lower_bound:
        for (std::size_t i = 0; i < b.length; ++i) {
          xb[i] = t.a + exp(ub[i]);
          jac.push_back(ub[i]);
        }
        break;
      case ConstraintTransform::Kind::upper_bound:
        for (std::size_t i = 0; i < b.length; ++i) {
          xb[i] = t.a - exp(ub[i]);
          jac.push_back(ub[i]);
        }
        break;
      case ConstraintTransform::Kind::interval:
        for (std::size_t i = 0; i < b.length; ++i) {
          xb[i] = t.a + (t.b - t.a) * inv_logit(ub[i]);
          jac.push_back(std::log(t.b - t.a) - softplus(-ub[i]) - softplus(ub[i]));
        }
        break;
      case ConstraintTransform::Kind::simplex: {
        const std::size_t k = b.length;
        Var stick(1.0);
        for (std::size_t i = 0; i + 1 < k; ++i) {
          const Var adj = ub[i] - std::log(static_cast<double>(k - 1 - i));
          jac.push_back(log(stick) - softplus(-adj) - softplus(adj));
          xb[i] = stick * inv_logit(adj);
          stick = stick - xb[i];
        }
        xb[k - 1] = stick;
        break;
      }
    }
  }
  if (jac.empty()) return Var(0.0);
  return sum(jac);
}

}  // namespace cforge
