#include "cforge/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cforge/io.hpp"

namespace cforge {

std::string to_string(Compliance g) {
  switch (g) {
    case Compliance::complier: return "co";
    case Compliance::never_taker: return "nt";
    case Compliance::always_taker: return "at";
    case Compliance::unknown: return "";
  }
  return "";
}

Compliance parse_compliance(const std::string& s) {
  if (s.empty() || s == "unknown" || s == "NA") return Compliance::unknown;
  if (s == "co" || s == "complier") return Compliance::complier;
  if (s == "nt" || s == "never_taker") return Compliance::never_taker;
  if (s == "at" || s == "always_taker") return Compliance::always_taker;
  throw std::invalid_argument("unknown compliance label '" + s + "'");
}

std::string to_string(Sidedness s) { return s == Sidedness::one_sided ? "one_sided" : "two_sided"; }

Sidedness parse_sidedness(const std::string& s) {
  if (s == "one_sided") return Sidedness::one_sided;
  if (s == "two_sided") return Sidedness::two_sided;
  throw std::invalid_argument("unknown sidedness '" + s + "'");
}

bool Observation::any_w_missing() const {
  return std::any_of(w_missing.begin(), w_missing.end(), [](bool b) { return b; });
}

double Observation::total_exposure() const {
  double t = 0.0;
  for (std::size_t h = 0; h < w.size(); ++h)
    if (!w_missing[h]) t += w[h];
  return t;
}

int CovariateInfo::reference_index() const {
  if (!categorical) return -1;
  if (reference.empty()) return 0;
  for (std::size_t i = 0; i < levels.size(); ++i)
    if (levels[i] == reference) return static_cast<int>(i);
  throw std::invalid_argument("covariate '" + name + "': reference level '" + reference + "' is not a level");
}

int Dataset::covariate_index(const std::string& name) const {
  for (std::size_t i = 0; i < covariates.size(); ++i)
    if (covariates[i].name == name) return static_cast<int>(i);
  return -1;
}

std::size_t Dataset::missing_count() const {
  std::size_t n = 0;
  for (const auto& o : observations) {
    n += o.y_missing ? 1 : 0;
    for (bool b : o.w_missing) n += b ? 1 : 0;
    for (bool b : o.covariate_missing) n += b ? 1 : 0;
  }
  return n;
}

void Dataset::validate() const {
  if (n_exposures != 1 && n_exposures != 3) throw std::invalid_argument("dataset: n_exposures must be 1 or 3");
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const auto& o = observations[i];
    const std::string where = "dataset row " + std::to_string(i + 1) + ": ";
    if (o.z != 0 && o.z != 1) throw std::invalid_argument(where + "assignment must be 0 or 1");
    if (static_cast<int>(o.w.size()) != n_exposures || o.w_missing.size() != o.w.size())
      throw std::invalid_argument(where + "wrong number of exposures");
    for (std::size_t h = 0; h < o.w.size(); ++h)
      if (!o.w_missing[h] && o.w[h] < 0.0) throw std::invalid_argument(where + "observed exposure is negative");
    if (o.covariates.size() != covariates.size() || o.covariate_missing.size() != covariates.size())
      throw std::invalid_argument(where + "wrong number of covariates");
    if (sidedness == Sidedness::one_sided && o.compliance == Compliance::always_taker)
      throw std::invalid_argument(where + "always-takers cannot occur with one-sided noncompliance");
  }
}

Compliance observed_compliance(const Observation& o, Sidedness sidedness) {
  if (o.any_w_missing()) return Compliance::unknown;
  const bool exposed = o.total_exposure() > 0.0;
  if (sidedness == Sidedness::one_sided) {
    if (o.z == 1) return exposed ? Compliance::complier : Compliance::never_taker;
    return Compliance::unknown;
  }
  if (o.z == 1 && !exposed) return Compliance::never_taker;
  if (o.z == 0 && exposed) return Compliance::always_taker;
  return Compliance::unknown;
}

void classify_compliance(Dataset& data) {
  for (auto& o : data.observations)
    if (o.compliance == Compliance::unknown) o.compliance = observed_compliance(o, data.sidedness);
}

Dataset complete_cases(const Dataset& data) {
  Dataset out = data;
  out.observations.clear();
  for (const auto& o : data.observations) {
    bool missing = o.y_missing || o.any_w_missing();
    for (bool b : o.covariate_missing) missing = missing || b;
    if (!missing) out.observations.push_back(o);
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  std::string t = s.substr(a, b - a);
  if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
  return t;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "nan" || s == "NaN"; }

double parse_number(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument(where + ": cannot parse '" + s + "' as a number");
  return v;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (first) {
      t.header = std::move(cells);
      first = false;
      continue;
    }
    if (cells.size() != t.header.size())
      throw std::runtime_error(path + ": row " + std::to_string(t.rows.size() + 1) + " has " +
                               std::to_string(cells.size()) + " cells, header has " +
                               std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (first) throw std::runtime_error(path + ": empty file");
  return t;
}

Dataset read_dataset_csv(const std::string& path, const CsvLayout& layout) {
  const CsvTable t = read_csv(path);
  auto need = [&](const std::string& name) {
    const int c = t.column(name);
    if (c < 0) throw std::runtime_error(path + ": missing column '" + name + "'");
    return c;
  };
  Dataset d;
  d.sidedness = layout.sidedness;
  d.n_exposures = static_cast<int>(layout.w.size());
  d.covariates = layout.covariates;
  const int cz = need(layout.z);
  const int cy = need(layout.y);
  std::vector<int> cw;
  for (const auto& w : layout.w) cw.push_back(need(w));
  const int cg = layout.compliance.empty() ? -1 : need(layout.compliance);
  std::vector<int> cc;
  for (const auto& c : layout.covariates) cc.push_back(need(c.name));

  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = path + " row " + std::to_string(r + 1);
    Observation o;
    if (is_missing(row[cz])) throw std::runtime_error(where + ": assignment cannot be missing");
    o.z = static_cast<int>(parse_number(row[cz], where));
    for (int c : cw) {
      const bool m = is_missing(row[c]);
      o.w.push_back(m ? 0.0 : parse_number(row[c], where));
      o.w_missing.push_back(m);
    }
    o.y_missing = is_missing(row[cy]);
    o.y = o.y_missing ? 0.0 : parse_number(row[cy], where);
    for (std::size_t k = 0; k < cc.size(); ++k) {
      const auto& cell = row[cc[k]];
      const auto& info = layout.covariates[k];
      const bool m = is_missing(cell);
      double v = 0.0;
      if (!m && info.categorical) {
        const auto it = std::find(info.levels.begin(), info.levels.end(), cell);
        if (it == info.levels.end())
          throw std::runtime_error(where + ": level '" + cell + "' not declared for covariate '" + info.name + "'");
        v = static_cast<double>(it - info.levels.begin());
      } else if (!m) {
        v = parse_number(cell, where);
      }
      o.covariates.push_back(v);
      o.covariate_missing.push_back(m);
    }
    if (cg >= 0) o.compliance = parse_compliance(row[cg]);
    d.observations.push_back(std::move(o));
  }
  classify_compliance(d);
  d.validate();
  return d;
}

CsvLayout default_layout(const Dataset& data) {
  CsvLayout l;
  l.id = "id";
  l.w.clear();
  if (data.n_exposures == 1) {
    l.w.push_back("w");
  } else {
    for (int h = 1; h <= data.n_exposures; ++h) l.w.push_back("w" + std::to_string(h));
  }
  l.compliance = "compliance";
  l.covariates = data.covariates;
  l.sidedness = data.sidedness;
  return l;
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  const CsvLayout l = default_layout(data);
  std::ostringstream out;
  out << l.id << ',' << l.z;
  for (const auto& w : l.w) out << ',' << w;
  out << ',' << l.y << ',' << l.compliance;
  for (const auto& c : data.covariates) out << ',' << c.name;
  out << '\n';
  for (std::size_t i = 0; i < data.observations.size(); ++i) {
    const auto& o = data.observations[i];
    out << (i + 1) << ',' << o.z;
    for (std::size_t h = 0; h < o.w.size(); ++h) out << ',' << (o.w_missing[h] ? "" : format_double(o.w[h]));
    out << ',' << (o.y_missing ? "" : format_double(o.y)) << ',' << to_string(o.compliance);
    for (std::size_t k = 0; k < data.covariates.size(); ++k) {
      out << ',';
      if (o.covariate_missing[k]) continue;
      if (data.covariates[k].categorical)
        out << data.covariates[k].levels.at(static_cast<std::size_t>(o.covariates[k]));
      else
        out << format_double(o.covariates[k]);
    }
    out << '\n';
  }
  write_text(path, out.str());
}

}  // namespace cforge
