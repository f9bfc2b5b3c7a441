#pragma once

#include <array>
#include <cstdint>

namespace cforge {

// Philox4x32-10 counter-based generator (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

// Deterministic stream over Philox. `seed` is the key and `stream` occupies the
// upper half of the counter, so (seed, stream) pairs never overlap.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform_open();                 // (0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();
  double normal(double mu, double sigma) { return mu + sigma * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  int binomial(int n, double p);
  int poisson(double lambda);
  std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;

  std::uint32_t next_u32();
};

// Stream id for per-subject, per-field draws in the data generators.
constexpr std::uint64_t subject_stream(std::uint64_t subject, std::uint32_t field) {
  return (subject << 8) | field;
}

}  // namespace cforge
