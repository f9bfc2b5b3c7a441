#include <string>

#include "cforge/config.hpp"
#include "doctest.h"

using namespace cforge;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("full config parses") {
  const auto rc = parse_run_config(R"({
    "scenario": {"id": 4, "confounder": "poisson", "seed": 3},
    "model": {"unmeasured": "one_latent", "reparam": "random_intercept",
              "priors": {"u_prime": {"mean": 0, "sd": 5}, "alpha9": {"mean": -0.5, "sd": 1}},
              "sign_restrictions": {"alpha9": "nonpos"},
              "sigma_mode": "informative", "sigma_estimates": "auto"},
    "sampler": {"chains": 2, "iterations": 400, "warmup": 200, "seed": 9},
    "output": {"dir": "o", "draws_format": "csv"},
    "sensitivity": [{"label": "sd1", "priors": {"u_prime": {"mean": 0, "sd": 1}}}]
  })");
  REQUIRE(rc.scenario);
  CHECK(rc.scenario->scenario == 4);
  CHECK(rc.scenario->confounder == ConfounderDist::poisson);
  CHECK(rc.spec.prior("u_prime").sd == 5.0);
  CHECK(rc.spec.prior("alpha_u").mean == -0.5);
  CHECK(rc.spec.restriction("alpha_u") == SignRestriction::nonpos);
  CHECK(rc.sigma_auto);
  CHECK(rc.sampler.chains == 2);
  CHECK(rc.sampler.seed == 9);
  CHECK(rc.out_dir == "o");
  CHECK(rc.draws_format == "csv");
  REQUIRE(rc.sweep.size() == 1);
  CHECK(rc.sweep[0].priors.at("u_prime").sd == 1.0);
}

TEST_CASE("errors name the offending field") {
  CHECK(error_of(R"({"model": {"priors": {"u_prime": {"mean": 0, "sd": -1}}}})").rfind("model.priors.u_prime.sd:", 0) == 0);
  CHECK(error_of(R"({"model": {"famly": "simplest"}})").rfind("model.famly: unknown field", 0) == 0);
  CHECK(error_of(R"({"scenario": {"id": 9}})").rfind("scenario.id:", 0) == 0);
  CHECK(error_of(R"({"sampler": {"chains": "four"}})").rfind("sampler.chains:", 0) == 0);
  CHECK(error_of(R"({"model": {"family": "wavy"}})").rfind("model.family:", 0) == 0);
  CHECK(error_of(R"({"model": {"unmeasured": "one_latent"}})").rfind("model", 0) == 0);
  CHECK(error_of("{not json").find("invalid JSON") != std::string::npos);
  CHECK(error_of(R"({"data": {"path": "a.csv"}, "scenario": {"id": 1}})").rfind("data:", 0) == 0);
}

TEST_CASE("restriction flags") {
  ModelSpec s;
  apply_restriction_flag(s, "alpha9=nonpos");
  CHECK(s.restriction("alpha_u") == SignRestriction::nonpos);
  apply_restriction_flag(s, "beta_u=nonneg");
  CHECK(s.restriction("beta_u") == SignRestriction::nonneg);
  CHECK_THROWS_AS(apply_restriction_flag(s, "alpha9"), ConfigError);
  CHECK_THROWS_AS(apply_restriction_flag(s, "alpha9=up"), ConfigError);
}

TEST_CASE("relative data paths resolve against the config directory") {
  const auto rc = parse_run_config(R"({"data": {"path": "d.csv"}})", "/tmp/cfg");
  CHECK(*rc.data_path == "/tmp/cfg/d.csv");
}
