#pragma once

#include <string>
#include <vector>

#include "cforge/diagnostics.hpp"
#include "cforge/sampler.hpp"

namespace cforge {

// Shortest round-trip decimal representation.
std::string format_double(double x);
// Fixed number of decimals, used for human-facing tables.
std::string format_fixed(double x, int decimals);

// Binary draws file: magic "CFDRAWS\0", u32 version, u32 chains, u32 draws,
// u32 params, then each name as u32 length + bytes, then little-endian
// float64 values in [chain][draw][param] order, then per-iteration
// divergence bytes and int32 tree depths.
inline constexpr char kDrawsMagic[8] = {'C', 'F', 'D', 'R', 'A', 'W', 'S', '\0'};
inline constexpr unsigned kDrawsVersion = 1;

void write_draws_binary(const std::string& path, const PosteriorDraws& draws);
PosteriorDraws read_draws_binary(const std::string& path);
void write_draws_csv(const std::string& path, const PosteriorDraws& draws);

std::string diagnostics_json(const DiagnosticsReport& report);
std::string diagnostics_csv(const DiagnosticsReport& report);

void write_text(const std::string& path, const std::string& content);

}  // namespace cforge
