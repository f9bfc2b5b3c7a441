#include "cforge/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace cforge {

std::string format_double(double x) {
  if (std::isnan(x)) return "NaN";
  if (std::isinf(x)) return x > 0 ? "Inf" : "-Inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string format_fixed(double x, int decimals) {
  if (!std::isfinite(x)) return format_double(x);
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::fixed, decimals);
  std::string s(buf, res.ptr);
  // Avoid printing "-0.00".
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("draws file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("draws file truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double x;
  std::memcpy(&x, &bits, 8);
  return x;
}

}  // namespace

void write_draws_binary(const std::string& path, const PosteriorDraws& draws) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(kDrawsMagic, 8);
  put_u32(out, kDrawsVersion);
  put_u32(out, static_cast<std::uint32_t>(draws.chains));
  put_u32(out, static_cast<std::uint32_t>(draws.draws));
  put_u32(out, static_cast<std::uint32_t>(draws.params()));
  for (const auto& n : draws.names) {
    put_u32(out, static_cast<std::uint32_t>(n.size()));
    out.write(n.data(), static_cast<std::streamsize>(n.size()));
  }
  for (double v : draws.values) put_f64(out, v);
  for (auto d : draws.divergent) out.put(static_cast<char>(d));
  for (int d : draws.tree_depth) put_u32(out, static_cast<std::uint32_t>(d));
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

PosteriorDraws read_draws_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kDrawsMagic, 8) != 0)
    throw std::runtime_error(path + ": not a draws file");
  const auto version = get_u32(in);
  if (version != kDrawsVersion) throw std::runtime_error(path + ": unsupported draws version");
  PosteriorDraws d;
  d.chains = static_cast<int>(get_u32(in));
  d.draws = static_cast<int>(get_u32(in));
  const auto p = get_u32(in);
  for (std::uint32_t i = 0; i < p; ++i) {
    const auto len = get_u32(in);
    std::string n(len, '\0');
    if (!in.read(n.data(), len)) throw std::runtime_error("draws file truncated");
    d.names.push_back(std::move(n));
  }
  const std::size_t rows = static_cast<std::size_t>(d.chains) * d.draws;
  d.values.resize(rows * p);
  for (auto& v : d.values) v = get_f64(in);
  d.divergent.resize(rows);
  for (auto& v : d.divergent) {
    char c;
    if (!in.get(c)) throw std::runtime_error("draws file truncated");
    v = static_cast<std::uint8_t>(c);
  }
  d.tree_depth.resize(rows);
  for (auto& v : d.tree_depth) v = static_cast<int>(get_u32(in));
  return d;
}

void write_draws_csv(const std::string& path, const PosteriorDraws& draws) {
  std::ostringstream out;
  out << "chain,draw,divergent,tree_depth";
  for (const auto& n : draws.names) out << ',' << n;
  out << '\n';
  for (int c = 0; c < draws.chains; ++c) {
    for (int d = 0; d < draws.draws; ++d) {
      const std::size_t row = static_cast<std::size_t>(c) * draws.draws + d;
      out << (c + 1) << ',' << (d + 1) << ',' << int(draws.divergent.empty() ? 0 : draws.divergent[row]) << ','
          << (draws.tree_depth.empty() ? 0 : draws.tree_depth[row]);
      for (std::size_t p = 0; p < draws.params(); ++p) out << ',' << format_double(draws.at(c, d, p));
      out << '\n';
    }
  }
  write_text(path, out.str());
}

namespace {

nlohmann::json num(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

}  // namespace

std::string diagnostics_json(const DiagnosticsReport& r) {
  nlohmann::ordered_json j;
  j["divergences"] = r.divergences;
  j["depth_saturations"] = r.depth_saturations;
  j["total_draws"] = r.total_draws;
  j["rhat_ok"] = r.rhat_ok;
  j["mcse_ok"] = r.mcse_ok;
  j["ess_ok"] = r.ess_ok;
  auto& params = j["parameters"];
  params = nlohmann::ordered_json::array();
  for (const auto& p : r.parameters) {
    nlohmann::ordered_json e;
    e["name"] = p.name;
    e["mean"] = num(p.mean);
    e["sd"] = num(p.sd);
    e["q2.5"] = num(p.q025);
    e["q97.5"] = num(p.q975);
    e["rhat"] = num(p.rhat);
    e["ess"] = num(p.ess);
    e["mcse"] = num(p.mcse);
    e["degenerate"] = p.degenerate;
    params.push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

std::string diagnostics_csv(const DiagnosticsReport& r) {
  std::ostringstream out;
  out << "parameter,mean,sd,q2.5,q97.5,rhat,ess,mcse,degenerate\n";
  for (const auto& p : r.parameters) {
    out << p.name << ',' << format_double(p.mean) << ',' << format_double(p.sd) << ',' << format_double(p.q025) << ','
        << format_double(p.q975) << ',' << format_double(p.rhat) << ',' << format_double(p.ess) << ','
        << format_double(p.mcse) << ',' << (p.degenerate ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace cforge
