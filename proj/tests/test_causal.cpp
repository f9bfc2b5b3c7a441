#include <cmath>
#include <vector>

#include "cforge/causal.hpp"
#include "cforge/dgp.hpp"
#include "cforge/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cforge;
using namespace cforge::testing;

TEST_CASE("h interaction table") {
  using C = Compliance;
  CHECK(h_interaction(1, C::complier, Sidedness::one_sided) == 1);
  CHECK(h_interaction(0, C::complier, Sidedness::one_sided) == 0);
  CHECK(h_interaction(1, C::never_taker, Sidedness::one_sided) == 0);
  CHECK(h_interaction(1, C::always_taker, Sidedness::two_sided) == 1);
  CHECK(h_interaction(0, C::always_taker, Sidedness::two_sided) == 1);
  CHECK(h_interaction(0, C::never_taker, Sidedness::two_sided) == 0);
  CHECK(compliance_code(C::complier, Sidedness::one_sided) == 1.0);
  CHECK(compliance_code(C::never_taker, Sidedness::one_sided) == 0.0);
  CHECK(compliance_code(C::always_taker, Sidedness::two_sided) == 2.0);
  CHECK(compliance_code(C::complier, Sidedness::two_sided) == 3.0);
}

TEST_CASE("outcome-only likelihood term by term") {
  const Dataset d = small_one_sided(25, 3);
  ModelSpec s;
  s.exposure_model = false;
  const auto m = build_model(d, s);
  CHECK(m->space().names() == std::vector<std::string>{"e_ate", "beta0", "sigma_y"});
  Rng r(1, 0);
  for (int k = 0; k < 20; ++k) {
    const auto th = random_point(*m, r);
    double ref = 0;
    for (const auto& o : d.observations) ref += npdf(o.y, th[1] + th[0] * o.w[0], th[2]);
    CHECK(m->log_likelihood(th) == doctest::Approx(ref).epsilon(1e-12));
    // Priors: N(0,1) on coefficients, half-normal N(0,1) on sigma, up to constants.
    const double prior = -0.5 * (th[0] * th[0] + th[1] * th[1] + th[2] * th[2]);
    const auto th0 = std::vector<double>{0.0, 0.0, 1.0};
    const double ref0 = m->log_density(th0) - m->log_likelihood(th0) + 0.5;
    CHECK(m->log_density(th) - m->log_likelihood(th) - prior == doctest::Approx(ref0).epsilon(1e-12));
  }
}

TEST_CASE("exposure model enters only for active subjects") {
  const Dataset d = small_one_sided(30, 4);
  ModelSpec s;
  const auto m = build_model(d, s);
  Rng r(2, 0);
  const auto& sp = m->space();
  for (int k = 0; k < 10; ++k) {
    const auto th = random_point(*m, r);
    const double ate = get(sp, th, "e_ate"), b0 = get(sp, th, "beta0"), sy = get(sp, th, "sigma_y");
    const double a0 = get(sp, th, "alpha0"), sw = get(sp, th, "sigma_w");
    double ref = 0;
    for (const auto& o : d.observations) {
      ref += npdf(o.y, b0 + ate * o.w[0], sy);
      if (o.z == 1 && o.w[0] > 0) ref += npdf(o.w[0], a0, sw);
    }
    CHECK(m->log_likelihood(th) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("marginalized control-arm classes equal explicit enumeration") {
  struct Case {
    const char* label;
    Sidedness sided;
    Family family;
    ComplianceModel cm;
  };
  for (const Case& c : {Case{"one-sided additive G", Sidedness::one_sided, Family::variation_additive_g,
                             ComplianceModel::bernoulli},
                        Case{"one-sided GxW", Sidedness::one_sided, Family::variation_gxw, ComplianceModel::bernoulli},
                        Case{"two-sided GxW", Sidedness::two_sided, Family::variation_gxw, ComplianceModel::dirichlet},
                        Case{"two-sided additive G", Sidedness::two_sided, Family::variation_additive_g,
                             ComplianceModel::dirichlet}}) {
    CAPTURE(c.label);
    const Dataset d = c.sided == Sidedness::one_sided ? small_one_sided(14, 5) : small_two_sided(14, 6);
    ModelSpec s;
    s.family = c.family;
    s.compliance = c.cm;
    const auto m = build_model(d, s);
    const auto combos = enumerate_unknown(d);
    REQUIRE(combos.size() >= 4);
    std::vector<ModelPtr> known;
    for (const auto& dk : combos) {
      known.push_back(build_model(dk, s));
      REQUIRE(known.back()->space().names() == m->space().names());
    }
    Rng r(3, 1);
    for (int k = 0; k < 250; ++k) {
      const auto th = random_point(*m, r);
      std::vector<double> terms;
      for (const auto& mk : known) terms.push_back(mk->log_likelihood(th));
      CHECK(m->log_likelihood(th) == doctest::Approx(lse(terms)).epsilon(1e-10));
    }
  }
}

TEST_CASE("ratio and random-intercept parameterizations give the same likelihood") {
  ScenarioConfig sc;
  sc.scenario = 4;
  sc.n = 40;
  const auto sim = generate(sc);
  ModelSpec ri;
  ri.unmeasured = Unmeasured::one_latent;
  ri.reparam = Reparam::random_intercept;
  ModelSpec ra = ri;
  ra.reparam = Reparam::ratio;
  ra.ratio_anchor = 0;
  const auto mri = build_model(sim.data, ri);
  const auto mra = build_model(sim.data, ra);
  REQUIRE(mri->latent_rows() == mra->latent_rows());
  const auto& sri = mri->space();
  const auto& sra = mra->space();
  CHECK(sra.at("u_prime").length + 1 == sri.at("u_prime").length);
  Rng r(4, 0);
  for (int k = 0; k < 200; ++k) {
    const auto th = random_point(*mri, r);
    std::vector<double> tr(sra.natural_dim());
    const double bu = get(sri, th, "u_prime", 0);
    set(sra, tr, "e_ate", get(sri, th, "e_ate"));
    set(sra, tr, "sigma_y", get(sri, th, "sigma_y"));
    set(sra, tr, "sigma_w", get(sri, th, "sigma_w"));
    set(sra, tr, "alpha0", get(sri, th, "alpha0"));
    set(sra, tr, "alpha_u", get(sri, th, "alpha_u") * bu);
    set(sra, tr, "beta_u", bu);
    for (std::size_t i = 0; i < sra.at("u_prime").length; ++i)
      set(sra, tr, "u_prime", get(sri, th, "u_prime", i + 1) / bu, i);
    CHECK(mra->log_likelihood(tr) == doctest::Approx(mri->log_likelihood(th)).epsilon(1e-10));
  }
}

TEST_CASE("additive-G model with beta_g = 0 nests the simplest model") {
  const Dataset d = small_one_sided(20, 7);
  ModelSpec simple;
  simple.compliance = ComplianceModel::bernoulli;
  ModelSpec var = simple;
  var.family = Family::variation_additive_g;
  const auto ms = build_model(d, simple);
  const auto mv = build_model(d, var);
  Rng r(5, 0);
  for (int k = 0; k < 20; ++k) {
    auto thv = random_point(*mv, r);
    set(mv->space(), thv, "beta_g", 0.0);
    std::vector<double> ths(ms->space().natural_dim());
    for (const auto& b : ms->space().blocks())
      for (std::size_t i = 0; i < b.length; ++i) set(ms->space(), ths, b.name, get(mv->space(), thv, b.name, i), i);
    CHECK(mv->log_likelihood(thv) == doctest::Approx(ms->log_likelihood(ths)).epsilon(1e-12));
  }
}

TEST_CASE("missing values become parameters") {
  Dataset d = small_one_sided(20, 8);
  d.observations[2].y_missing = true;
  d.observations[5].y_missing = true;
  d.observations[9].w_missing[0] = true;
  ModelSpec s;
  // A treated subject with a missing exposure has an unresolved class.
  CHECK_THROWS(build_model(d, s));
  d.observations[9].compliance = Compliance::complier;
  const auto m = build_model(d, s);
  CHECK(m->space().at("y_mis").length == 2);
  CHECK(m->space().at("w_mis").length == 1);
  CHECK(m->missing_parameter_count() == 3);
}

TEST_CASE("variation family without a compliance model is rejected on one-sided data") {
  const Dataset d = small_one_sided(20, 9);
  ModelSpec s;
  s.family = Family::variation_additive_g;
  CHECK_THROWS_AS(build_model(d, s), SpecError);
}

TEST_CASE("GxW derived class effects") {
  const Dataset d = small_two_sided(20, 10);
  ModelSpec s;
  s.family = Family::variation_gxw;
  s.compliance = ComplianceModel::dirichlet;
  const auto m = build_model(d, s);
  CHECK(m->derived_names() == std::vector<std::string>{"e_ate_nt", "e_ate_at", "e_ate_co"});
  Rng r(6, 0);
  const auto th = random_point(*m, r);
  const auto der = m->derived(th);
  const double ate = get(m->space(), th, "e_ate"), bgw = get(m->space(), th, "beta_gw");
  CHECK(der[0] == doctest::Approx(ate + bgw));
  CHECK(der[1] == doctest::Approx(ate + 2 * bgw));
  CHECK(der[2] == doctest::Approx(ate + 3 * bgw));
}

TEST_CASE("gradients of the latent model match finite differences") {
  ScenarioConfig sc;
  sc.scenario = 4;
  sc.n = 30;
  const auto sim = generate(sc);
  ModelSpec s;
  s.unmeasured = Unmeasured::one_latent;
  s.reparam = Reparam::random_intercept;
  const auto m = build_model(sim.data, s);
  Rng r(7, 0);
  for (int k = 0; k < 3; ++k) CHECK(max_gradient_error(*m, random_point(*m, r)) < 1e-5);
}

TEST_CASE("IV ratio model") {
  ScenarioConfig sc;
  sc.scenario = 1;
  sc.n = 60;
  const auto sim = generate(sc);
  ModelSpec s;
  s.comparison = Comparison::iv_2sls;
  const auto m = build_model(sim.data, s);
  CHECK(m->space().has("alpha_z"));
  CHECK(m->space().has("beta_z"));
  Rng r(8, 0);
  const auto th = random_point(*m, r);
  const auto der = m->derived(th);
  REQUIRE(der.size() == 1);
  CHECK(der[0] == doctest::Approx(get(m->space(), th, "beta_z") / get(m->space(), th, "alpha_z")));
  CHECK(iv_heavy_tail({-0.1, 0.2, 0.3}));
  CHECK_FALSE(iv_heavy_tail({0.5, 0.6, 0.7, 0.55}));
}

TEST_CASE("GxW with compliance none collapses classes whose exposure is zero") {
  Dataset d = small_two_sided(20, 11);
  ModelSpec s;
  s.family = Family::variation_gxw;
  // Ambiguous z=1, w>0 subject: class changes the outcome.
  CHECK_THROWS_AS(build_model(d, s), SpecError);
  d.observations[0].compliance = Compliance::complier;
  const auto m = build_model(d, s);
  CHECK_FALSE(m->space().has("p_class"));
}
