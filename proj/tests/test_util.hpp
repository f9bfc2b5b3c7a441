#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cforge/causal.hpp"
#include "cforge/rng.hpp"
#include "cforge/transforms.hpp"

namespace cforge::testing {

inline double npdf(double x, double mu, double s) {
  const double z = (x - mu) / s;
  return -0.5 * z * z - std::log(s) - 0.5 * std::log(2 * M_PI);
}

inline double lse(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double get(const ParameterSpace& sp, const std::vector<double>& th, const std::string& name, std::size_t i = 0) {
  return th.at(sp.at(name).natural_offset + i);
}
inline void set(const ParameterSpace& sp, std::vector<double>& th, const std::string& name, double v,
                std::size_t i = 0) {
  th.at(sp.at(name).natural_offset + i) = v;
}

inline std::vector<double> random_point(const LogPosterior& m, Rng& r, double scale = 1.0) {
  std::vector<double> u(m.space().dim());
  for (double& x : u) x = scale * r.normal();
  return transform_to_natural(m.space(), u).values;
}

inline Observation obs(int z, double w, double y, Compliance g = Compliance::unknown) {
  Observation o;
  o.z = z;
  o.w = {w};
  o.w_missing = {false};
  o.y = y;
  o.compliance = g;
  return o;
}

// Four control subjects (class unknown) and n - 4 treated ones, 30% never-takers.
inline Dataset small_one_sided(int n, std::uint64_t seed) {
  Rng r(seed, 0);
  Dataset d;
  for (int i = 0; i < n; ++i) {
    const int z = i < 4 ? 0 : 1;
    const bool co = r.uniform() > 0.3 || i == 4;
    const double w = (z == 1 && co) ? 3.0 + r.normal() * 0.5 : 0.0;
    const double y = 1.0 + 2.0 * w + (co ? 0.4 : 0.0) + r.normal();
    d.observations.push_back(obs(z, w, y));
  }
  return d;
}

// Two-sided data: three ambiguous subjects, the rest revealed by (z, w) or
// given an explicit class.
inline Dataset small_two_sided(int n, std::uint64_t seed) {
  Rng r(seed, 0);
  Dataset d;
  d.sidedness = Sidedness::two_sided;
  auto y = [&](double w) { return 1.0 + 2.0 * w + r.normal(); };
  d.observations.push_back(obs(1, 2.8, y(2.8)));  // at or co
  d.observations.push_back(obs(0, 0.0, y(0.0)));  // nt or co
  d.observations.push_back(obs(0, 0.0, y(0.0)));  // nt or co
  for (int i = 3; i < n; ++i) {
    switch (i % 4) {
      case 0: d.observations.push_back(obs(1, 0.0, y(0.0))); break;                       // nt
      case 1: d.observations.push_back(obs(0, 3.1 + 0.1 * i, y(3.1 + 0.1 * i))); break;  // at
      case 2: {
        const double w = 2.5 + 0.05 * i;
        d.observations.push_back(obs(1, w, y(w), Compliance::complier));
        break;
      }
      default: d.observations.push_back(obs(0, 0.0, y(0.0), Compliance::complier)); break;
    }
  }
  return d;
}

// Every completion of the unknown classes that the data allow.
inline std::vector<Dataset> enumerate_unknown(const Dataset& d) {
  std::vector<std::size_t> idx;
  std::vector<std::vector<Compliance>> options;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& o = d.observations[i];
    if (o.compliance != Compliance::unknown || observed_compliance(o, d.sidedness) != Compliance::unknown) continue;
    idx.push_back(i);
    if (d.sidedness == Sidedness::one_sided)
      options.push_back({Compliance::complier, Compliance::never_taker});
    else if (o.z == 1)
      options.push_back({Compliance::complier, Compliance::always_taker});
    else
      options.push_back({Compliance::complier, Compliance::never_taker});
  }
  std::vector<Dataset> out{d};
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::vector<Dataset> next;
    for (const auto& base : out)
      for (Compliance g : options[k]) {
        Dataset c = base;
        c.observations[idx[k]].compliance = g;
        next.push_back(std::move(c));
      }
    out = std::move(next);
  }
  return out;
}

// Largest relative gap between the traced gradient and a fourth-order
// central difference.
inline double max_gradient_error(const LogPosterior& m, std::vector<double> th, std::size_t* worst_index = nullptr) {
  std::vector<double> g(th.size());
  m.log_density(th, g);
  double worst = 0;
  for (std::size_t i = 0; i < th.size(); ++i) {
    const double h = 1e-4 * std::max(1.0, std::fabs(th[i]));
    const double x = th[i];
    auto f = [&](double d) {
      th[i] = x + d;
      return m.log_density(th);
    };
    const double fd = (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h);
    th[i] = x;
    const double err = std::fabs(g[i] - fd) / std::max(1.0, std::fabs(fd));
    if (err > worst) {
      worst = err;
      if (worst_index) *worst_index = i;
    }
  }
  return worst;
}

}  // namespace cforge::testing
