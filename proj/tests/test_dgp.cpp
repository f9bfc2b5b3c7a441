#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "cforge/diagnostics.hpp"
#include "cforge/dgp.hpp"
#include "cforge/rng.hpp"
#include "doctest.h"

using namespace cforge;

namespace {

int count(const std::vector<Compliance>& g, Compliance c) {
  return static_cast<int>(std::count(g.begin(), g.end(), c));
}

}  // namespace

TEST_CASE("every scenario generates 300 valid rows") {
  for (int k = 1; k <= 7; ++k) {
    CAPTURE(k);
    ScenarioConfig sc = k == 5 ? scenario5_default() : ScenarioConfig{};
    sc.scenario = k;
    const auto sim = generate(sc);
    CHECK(sim.data.size() == 300);
    CHECK(sim.truth.compliance.size() == 300);
    sim.data.validate();
    for (std::size_t i = 0; i < sim.data.size(); ++i) {
      const auto& o = sim.data.observations[i];
      const auto g = sim.truth.compliance[i];
      const bool takes = (o.z == 1 && g == Compliance::complier) || (k == 3 && o.z == 1 && g == Compliance::always_taker);
      if (takes)
        CHECK(o.w[0] >= 0.5);
      else
        CHECK(o.w[0] == 0.0);
    }
  }
}

TEST_CASE("same seed, same data; different seed, different data") {
  ScenarioConfig sc;
  sc.scenario = 4;
  const auto a = generate(sc), b = generate(sc);
  sc.seed = 2;
  const auto c = generate(sc);
  CHECK(a.data.observations[17].y == b.data.observations[17].y);
  CHECK(a.data.observations[17].y != c.data.observations[17].y);
}

TEST_CASE("changing n keeps the first subjects' draws") {
  ScenarioConfig sc;
  sc.scenario = 6;
  const auto a = generate(sc);
  sc.n = 150;
  const auto b = generate(sc);
  for (int i = 0; i < 150; ++i) CHECK(a.data.observations[i].y == b.data.observations[i].y);
}

TEST_CASE("class shares") {
  ScenarioConfig sc;
  sc.scenario = 2;
  sc.never_taker_share = 0.4;
  sc.n = 20000;
  const auto s2 = generate(sc);
  CHECK(count(s2.truth.compliance, Compliance::never_taker) / 20000.0 == doctest::Approx(0.4).epsilon(0.05));
  sc.scenario = 3;
  const auto s3 = generate(sc);
  CHECK(count(s3.truth.compliance, Compliance::always_taker) / 20000.0 == doctest::Approx(0.1).epsilon(0.1));
  CHECK(count(s3.truth.compliance, Compliance::never_taker) / 20000.0 == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("one-sided compliance is masked in the control arm") {
  ScenarioConfig sc;
  sc.scenario = 1;
  const auto sim = generate(sc);
  for (const auto& o : sim.data.observations)
    if (o.z == 0) CHECK(o.compliance == Compliance::unknown);
}

TEST_CASE("scenario 1 effect recovered by least squares on compliers") {
  ScenarioConfig sc;
  sc.scenario = 1;
  sc.n = 5000;
  const auto sim = generate(sc);
  double sw = 0, sy = 0, sww = 0, swy = 0;
  int m = 0;
  for (const auto& o : sim.data.observations) {
    sw += o.w[0];
    sy += o.y;
    sww += o.w[0] * o.w[0];
    swy += o.w[0] * o.y;
    ++m;
  }
  const double slope = (swy - sw * sy / m) / (sww - sw * sw / m);
  CHECK(slope == doctest::Approx(2.0).epsilon(0.03));
}

TEST_CASE("truncated sampler stays above the bound with the right mean") {
  Rng r(9, 0);
  std::vector<double> x;
  for (int i = 0; i < 20000; ++i) {
    const double v = sample_left_truncated(r, 1.0, 1.0, 0.5);
    REQUIRE(v >= 0.5);
    x.push_back(v);
  }
  // E[X | X >= a] = mu + sigma * phi(alpha) / (1 - Phi(alpha)), alpha = -0.5
  const double alpha = -0.5;
  const double phi = std::exp(-0.5 * alpha * alpha) / std::sqrt(2 * M_PI);
  const double tail = 0.5 * std::erfc(alpha / std::sqrt(2.0));
  CHECK(mean(x) == doctest::Approx(1.0 + phi / tail).epsilon(0.01));
}

TEST_CASE("oracle U' maps") {
  CHECK(oracle_u_prime(4, 0.3) == doctest::Approx(0.7));
  CHECK(oracle_u_prime(7, 0.3, 0.4) == doctest::Approx(1.1));
  CHECK_THROWS(oracle_u_prime(1, 0.3));
}

TEST_CASE("confounder distributions") {
  ScenarioConfig sc;
  sc.scenario = 4;
  sc.n = 20000;
  sc.confounder = ConfounderDist::poisson;
  const auto p = generate(sc);
  for (double u : p.truth.u1) REQUIRE(u == std::floor(u));
  sc.confounder = ConfounderDist::lognormal;
  const auto l = generate(sc);
  for (double u : l.truth.u1) REQUIRE(u > 0);
  CHECK(quantile(l.truth.u1, 0.5) == doctest::Approx(std::exp(1.0)).epsilon(0.05));
  CHECK(parse_confounder_dist("lognormal") == ConfounderDist::lognormal);
  CHECK_THROWS(parse_confounder_dist("cauchy"));
}

TEST_CASE("invalid scenario ids") {
  ScenarioConfig sc;
  sc.scenario = 9;
  CHECK_THROWS(sc.validate());
  sc.scenario = 2;
  sc.never_taker_share = 1.5;
  CHECK_THROWS(sc.validate());
}

TEST_CASE("scenario files") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "cforge_dgp_test";
  fs::remove_all(dir);
  ScenarioConfig sc;
  sc.scenario = 4;
  sc.seed = 7;
  const auto [data, truth] = write_scenario(generate(sc), sc, dir.string());
  CHECK(fs::path(data).filename() == "scenario4_seed7_data.csv");
  std::ifstream in(truth);
  std::string header;
  std::getline(in, header);
  CHECK(header.find("u_prime") != std::string::npos);
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 300);
}
