#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cforge/causal.hpp"
#include "cforge/config.hpp"
#include "cforge/diagnostics.hpp"
#include "cforge/dgp.hpp"
#include "cforge/sampler.hpp"

namespace cforge {

struct FitOptions {
  // True U' per dataset row, used for the U' goodness-of-fit report.
  std::optional<std::vector<double>> true_u_prime;
  bool identifiability = true;
};

struct FitResult {
  ModelPtr model;
  PosteriorDraws draws;
  DiagnosticsReport diagnostics;
  std::vector<AteSummary> ates;
  IdentifiabilityReport identifiability;
  std::vector<std::string> warnings;

  const AteSummary& ate(const std::string& name = "e_ate") const;
};

// Fills informative sigma prior means from the pooled sample sds.
ModelSpec resolve_sigma_estimates(ModelSpec spec, const Dataset& data, bool sigma_auto);

FitResult run_fit(const Dataset& data, const ModelSpec& spec, const SamplerConfig& sampler,
                  const FitOptions& options = {});

// Writes draws.{bin,csv}, diagnostics.json, diagnostics.csv, ate_summary.csv
// and identifiability.json into `dir`.
void write_fit_outputs(const FitResult& fit, const std::string& dir, const std::string& draws_format = "binary");
std::string fit_report_text(const FitResult& fit);

// Dataset and (when simulated) truth for a run config.
struct LoadedData {
  Dataset data;
  std::optional<GroundTruth> truth;
};
LoadedData load_data(const RunConfig& rc);

struct SensitivityRow {
  std::string label;
  bool ok = false;
  AteSummary ate;
  std::optional<double> s_p;  // only when the override targets one scalar block
  std::string note;
};
std::vector<SensitivityRow> run_sensitivity(const Dataset& data, const ModelSpec& base, bool sigma_auto,
                                            const std::vector<SensitivityOverride>& sweep,
                                            const SamplerConfig& sampler);
std::string sensitivity_csv(const std::vector<SensitivityRow>& rows);

// Named simulation fits from the paper's study.
struct Preset {
  std::string id;
  std::string description;
  ScenarioConfig scenario;
  ModelSpec spec;
  bool sigma_auto = false;
};
std::vector<std::string> preset_ids();
Preset preset(const std::string& id, std::uint64_t seed = 1);
FitResult run_preset(const Preset& p, const SamplerConfig& sampler);

struct ReproCheck {
  std::string label;
  std::string paper;       // published value, e.g. "2.00 (1.96, 2.04)"
  std::string reproduced;  // value(s) obtained here
  std::string tolerance;   // acceptance rule
  bool pass = false;
};
struct ReproReport {
  std::string table;
  std::vector<ReproCheck> checks;
  bool all_pass() const;
};
// Catalog of reproducible tables: (id, description).
std::vector<std::pair<std::string, std::string>> reproduce_catalog();
ReproReport reproduce(const std::string& table, const SamplerConfig& sampler, std::uint64_t seed = 1);
std::string repro_report_text(const ReproReport& report);

}  // namespace cforge
