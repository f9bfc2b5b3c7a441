#include "cforge/dgp.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "cforge/io.hpp"
#include "cforge/rng.hpp"

namespace cforge {

std::string to_string(ConfounderDist d) {
  switch (d) {
    case ConfounderDist::normal: return "normal";
    case ConfounderDist::lognormal: return "lognormal";
    case ConfounderDist::poisson: return "poisson";
  }
  return "?";
}

ConfounderDist parse_confounder_dist(const std::string& s) {
  if (s == "normal") return ConfounderDist::normal;
  if (s == "lognormal") return ConfounderDist::lognormal;
  if (s == "poisson") return ConfounderDist::poisson;
  throw std::invalid_argument("unknown confounder distribution '" + s + "' (expected normal, lognormal or poisson)");
}

void ScenarioConfig::validate() const {
  if (scenario < 1 || scenario > 7) throw std::invalid_argument("scenario id must be between 1 and 7");
  if (n < 2) throw std::invalid_argument("scenario n must be at least 2");
  if (!(never_taker_share >= 0.0 && never_taker_share < 1.0))
    throw std::invalid_argument("never_taker_share must lie in [0, 1)");
  if (!(lognormal_sdlog > 0.0)) throw std::invalid_argument("lognormal_sdlog must be positive");
}

ScenarioConfig scenario5_default(std::uint64_t seed) {
  ScenarioConfig c;
  c.scenario = 5;
  c.confounder = ConfounderDist::lognormal;
  c.seed = seed;
  return c;
}

double sample_left_truncated(Rng& rng, double mu, double sigma, double lower, long max_proposals) {
  for (long i = 0; i < max_proposals; ++i) {
    const double x = rng.normal(mu, sigma);
    if (x >= lower) return x;
  }
  throw std::runtime_error("truncated normal: no acceptance within " + std::to_string(max_proposals) +
                           " proposals (mu=" + format_double(mu) + ", lower=" + format_double(lower) + ")");
}

double oracle_u_prime(int scenario, double u1, double u2) {
  switch (scenario) {
    case 4:
    case 5:
    case 6: return 1.0 - u1;
    case 7: return 1.0 + u1 - 0.5 * u2;
    default: break;
  }
  throw std::logic_error("oracle_u_prime: scenario " + std::to_string(scenario) + " has no latent confounder");
}

std::vector<double> oracle_u_prime(const GroundTruth& truth) {
  std::vector<double> out;
  for (std::size_t i = 0; i < truth.u1.size(); ++i)
    out.push_back(oracle_u_prime(truth.scenario, truth.u1[i], truth.u2.empty() ? 0.0 : truth.u2[i]));
  if (out.empty()) (void)oracle_u_prime(truth.scenario, 0.0);
  return out;
}

namespace {

enum Field : std::uint32_t { kZ = 0, kG, kU1, kU2, kM, kXw, kXy, kW, kY };

// One independent stream per (subject, field).
Rng field_rng(const ScenarioConfig& c, std::size_t subject, Field f) { return Rng(c.seed, subject_stream(subject, f)); }

double draw_confounder(const ScenarioConfig& c, Rng& rng) {
  switch (c.confounder) {
    case ConfounderDist::normal: return rng.normal(1.0, 1.0);
    case ConfounderDist::lognormal: return std::exp(rng.normal(c.lognormal_meanlog, c.lognormal_sdlog));
    case ConfounderDist::poisson: return static_cast<double>(rng.poisson(3.0));
  }
  return 0.0;
}

}  // namespace

Simulated generate(const ScenarioConfig& c) {
  c.validate();
  Simulated sim;
  Dataset& d = sim.data;
  GroundTruth& t = sim.truth;
  t.scenario = c.scenario;
  d.sidedness = c.scenario == 3 ? Sidedness::two_sided : Sidedness::one_sided;
  d.n_exposures = 1;
  if (c.scenario == 6) {
    d.covariates = {{"M", false, {}, ""}, {"Xw", false, {}, ""}, {"Xy", false, {}, ""}};
  }
  const bool latent = c.scenario >= 4;
  const double co_share = 1.0 - c.never_taker_share;
  const double big = c.big_effect;

  for (int i = 0; i < c.n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    Observation o;
    auto rz = field_rng(c, s, kZ);
    o.z = rz.bernoulli(0.5) ? 1 : 0;

    Compliance g;
    auto rg = field_rng(c, s, kG);
    if (c.scenario == 3) {
      const double v = rg.uniform();
      g = v < 0.1 ? Compliance::never_taker : (v < 0.2 ? Compliance::always_taker : Compliance::complier);
    } else {
      g = rg.bernoulli(co_share) ? Compliance::complier : Compliance::never_taker;
    }

    double u1 = 0.0, u2 = 0.0, m = 0.0, xw = 0.0, xy = 0.0;
    if (latent) {
      auto ru = field_rng(c, s, kU1);
      if (c.scenario == 7) {
        u1 = ru.normal(-1.0, 1.0);
        auto ru2 = field_rng(c, s, kU2);
        u2 = ru2.normal(1.0, 2.0);
      } else if (c.scenario == 6) {
        u1 = ru.normal(1.0, 1.0);
      } else {
        u1 = draw_confounder(c, ru);
      }
    }
    if (c.scenario == 6) {
      auto rm = field_rng(c, s, kM);
      m = rm.bernoulli(0.7) ? 1.0 : 0.0;
      auto rxw = field_rng(c, s, kXw);
      xw = rxw.normal(10.0, 2.0);
      auto rxy = field_rng(c, s, kXy);
      xy = rxy.binomial(3, 0.5);
      o.covariates = {m, xw, xy};
      o.covariate_missing = {false, false, false};
    }

    // Exposure: only treated compliers (and treated always-takers in
    // scenario 3) receive a positive dose.
    const bool takes = o.z == 1 && (g == Compliance::complier || (c.scenario == 3 && g == Compliance::always_taker));
    double w = 0.0;
    if (takes) {
      auto rw = field_rng(c, s, kW);
      double mu = 5.0;
      if (c.scenario == 4 || c.scenario == 5) mu = 3.0 + u1;
      if (c.scenario == 6) mu = 1.0 + m - 0.5 * u1 + 0.1 * xw;
      if (c.scenario == 7) mu = 1.0 + 0.5 * u1 + u2;
      w = sample_left_truncated(rw, mu, 1.0, 0.5);
    }

    double mu_y = 0.0;
    switch (c.scenario) {
      case 1: mu_y = 1.0 + (big ? 2.0 : 0.1) * w; break;
      case 2: mu_y = 1.5 + (big ? 2.0 : 0.1) * w - 0.5 * (g == Compliance::complier ? 1.0 : 0.0); break;
      case 3:
        if (g == Compliance::never_taker) {
          mu_y = 1.0 + (big ? 2.5 : 0.25) * w;
        } else {
          const double code = g == Compliance::always_taker ? 2.0 : 3.0;
          mu_y = big ? 1.0 + w + 0.5 * w * code : 1.0 + 0.1 * w + 0.05 * w * code;
        }
        break;
      case 4:
      case 5: mu_y = 1.0 + 2.0 * w - u1; break;
      case 6: mu_y = 1.0 + 2.0 * w + m - u1 + 0.5 * xy; break;
      case 7: mu_y = 1.0 + 2.0 * w + u1 - 0.5 * u2; break;
      default: break;
    }
    auto ry = field_rng(c, s, kY);
    o.y = ry.normal(mu_y, 1.0);
    o.w = {w};
    o.w_missing = {false};
    o.compliance = observed_compliance(o, d.sidedness);
    d.observations.push_back(std::move(o));

    t.compliance.push_back(g);
    if (latent) {
      t.u1.push_back(u1);
      if (c.scenario == 7) t.u2.push_back(u2);
      t.u_prime.push_back(oracle_u_prime(c.scenario, u1, u2));
    }
  }

  auto& p = t.parameters;
  switch (c.scenario) {
    case 1:
      p = {{"e_ate", big ? 2.0 : 0.1}, {"beta0", 1.0}, {"sigma_y", 1.0}, {"p", co_share}};
      break;
    case 2:
      p = {{"e_ate", big ? 2.0 : 0.1}, {"beta0", 1.5}, {"beta_g", -0.5}, {"sigma_y", 1.0}, {"p", co_share}};
      break;
    case 3:
      if (big)
        p = {{"e_ate", 1.0}, {"beta_gw", 0.5}, {"e_ate_at", 2.0}, {"e_ate_co", 2.5}, {"e_ate_nt", 2.5}};
      else
        p = {{"e_ate", 0.1}, {"beta_gw", 0.05}, {"e_ate_at", 0.2}, {"e_ate_co", 0.25}, {"e_ate_nt", 0.25}};
      p["beta0"] = 1.0;
      p["sigma_y"] = 1.0;
      p["p_class[1]"] = 0.1;
      p["p_class[2]"] = 0.1;
      p["p_class[3]"] = 0.8;
      break;
    case 4:
    case 5: p = {{"e_ate", 2.0}, {"alpha0", 4.0}, {"alpha_u", -1.0}, {"sigma_y", 1.0}, {"sigma_w", 1.0}}; break;
    case 6:
      p = {{"e_ate", 2.0}, {"beta_cov[1]", 1.0}, {"alpha0", 0.5}, {"alpha_cov[1]", 1.0}, {"alpha_u", 0.5},
           {"sigma_y", 1.0}, {"sigma_w", 1.0}};
      break;
    case 7: p = {{"e_ate", 2.0}, {"alpha0", 2.5}, {"alpha_u", -1.5}, {"sigma_y", 1.0}, {"sigma_w", 1.0}}; break;
    default: break;
  }
  d.validate();
  return sim;
}

std::string scenario_file_stem(const ScenarioConfig& c) {
  return "scenario" + std::to_string(c.scenario) + "_seed" + std::to_string(c.seed);
}

std::pair<std::string, std::string> write_scenario(const Simulated& sim, const ScenarioConfig& c,
                                                   const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto stem = (std::filesystem::path(dir) / scenario_file_stem(c)).string();
  const auto data_path = stem + "_data.csv";
  const auto truth_path = stem + "_truth.csv";
  write_dataset_csv(data_path, sim.data);

  const auto& t = sim.truth;
  std::ostringstream out;
  out << "id,z,compliance,w,y";
  if (!t.u1.empty()) out << ",u1";
  if (!t.u2.empty()) out << ",u2";
  if (!t.u_prime.empty()) out << ",u_prime";
  out << '\n';
  for (std::size_t i = 0; i < sim.data.size(); ++i) {
    const auto& o = sim.data.observations[i];
    out << (i + 1) << ',' << o.z << ',' << to_string(t.compliance[i]) << ',' << format_double(o.w[0]) << ','
        << format_double(o.y);
    if (!t.u1.empty()) out << ',' << format_double(t.u1[i]);
    if (!t.u2.empty()) out << ',' << format_double(t.u2[i]);
    if (!t.u_prime.empty()) out << ',' << format_double(t.u_prime[i]);
    out << '\n';
  }
  write_text(truth_path, out.str());
  return {data_path, truth_path};
}

}  // namespace cforge
