#pragma once

#include <optional>
#include <string>
#include <vector>

namespace cforge {

enum class Compliance { complier, never_taker, always_taker, unknown };
enum class Sidedness { one_sided, two_sided };

std::string to_string(Compliance g);
Compliance parse_compliance(const std::string& s);
std::string to_string(Sidedness s);
Sidedness parse_sidedness(const std::string& s);

struct Observation {
  int z = 0;
  std::vector<double> w;
  std::vector<bool> w_missing;
  double y = 0.0;
  bool y_missing = false;
  std::vector<double> covariates;  // categorical entries hold the level index
  std::vector<bool> covariate_missing;
  Compliance compliance = Compliance::unknown;

  bool any_w_missing() const;
  double total_exposure() const;  // sum of observed exposures
};

struct CovariateInfo {
  std::string name;
  bool categorical = false;
  std::vector<std::string> levels;
  std::string reference;

  int reference_index() const;
};

struct Dataset {
  std::vector<Observation> observations;
  std::vector<CovariateInfo> covariates;
  Sidedness sidedness = Sidedness::one_sided;
  int n_exposures = 1;

  std::size_t size() const { return observations.size(); }
  int covariate_index(const std::string& name) const;  // -1 when absent
  std::size_t missing_count() const;
  void validate() const;
};

// Compliance implied by the observed data: one-sided treatment arm is
// never-taker iff total exposure is 0; two-sided adds always-takers among
// exposed controls. Subjects whose class the data cannot reveal stay unknown.
Compliance observed_compliance(const Observation& o, Sidedness sidedness);
void classify_compliance(Dataset& data);

Dataset complete_cases(const Dataset& data);

struct CsvLayout {
  std::string id;  // optional identifier column, ignored on read
  std::string z = "z";
  std::vector<std::string> w = {"w"};
  std::string y = "y";
  std::string compliance;  // optional
  std::vector<CovariateInfo> covariates;
  Sidedness sidedness = Sidedness::one_sided;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
Dataset read_dataset_csv(const std::string& path, const CsvLayout& layout);
void write_dataset_csv(const std::string& path, const Dataset& data);
CsvLayout default_layout(const Dataset& data);

}  // namespace cforge
