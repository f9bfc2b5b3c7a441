#include <cmath>
#include <set>
#include <vector>

#include "cforge/rng.hpp"
#include "doctest.h"

using namespace cforge;

// Known-answer vectors from the Random123 distribution (kat_vectors).
TEST_CASE("philox4x32-10 known answers") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and distinct") {
  Rng a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  std::vector<std::uint64_t> xa, xc, xd;
  for (int i = 0; i < 16; ++i) {
    const auto v = a.next_u64();
    CHECK(v == b.next_u64());
    xa.push_back(v);
    xc.push_back(c.next_u64());
    xd.push_back(d.next_u64());
  }
  CHECK(xa != xc);
  CHECK(xa != xd);
  CHECK(subject_stream(3, 2) == ((3u << 8) | 2u));
}

TEST_CASE("distribution moments") {
  Rng r(1, 0);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sp = 0, sb = 0;
  std::set<std::uint64_t> below;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
    sp += r.poisson(3.5);
    sb += r.binomial(10, 0.3);
    below.insert(r.below(5));
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::fabs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.015));
  CHECK(sp / n == doctest::Approx(3.5).epsilon(0.01));
  CHECK(sb / n == doctest::Approx(3.0).epsilon(0.01));
  CHECK(below == std::set<std::uint64_t>{0, 1, 2, 3, 4});
  CHECK(r.poisson(0.0) == 0);
}

TEST_CASE("large-mean poisson") {
  Rng r(5, 1);
  double s = 0, s2 = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double x = r.poisson(250.0);
    s += x;
    s2 += x * x;
  }
  const double m = s / n;
  CHECK(m == doctest::Approx(250.0).epsilon(0.005));
  CHECK(s2 / n - m * m == doctest::Approx(250.0).epsilon(0.05));
}
