#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cdd/config.hpp"
#include "cdd/dephasing.hpp"
#include "cdd/fitting.hpp"
#include "cdd/pulse_sim.hpp"

namespace cdd {

struct RatesReport {
  double gamma_sigma_b_khz = 0.0;
  double sigma_b_mg = 0.0;
  double t2_0m1_us = 0.0;
  double t2_pm1_us = 0.0;  ///< undressed {+1,-1} qubit, half of t2_0m1
  double thermal_t2_us = 0.0;  ///< infinite without thermal noise
  double cutoff_khz = 0.0;
  double omega_khz = 0.0;
  double sigma_omega_khz = 0.0;
  RateBudget budget;  ///< first-order {m,p} rates at omega_khz
  double t2_first_us = 0.0;  ///< infinite when every rate is zero
  T2Prediction second;
};

RatesReport rates_report(const ScenarioConfig& config);
std::string format_rates(const RatesReport& report);

struct T2ScanRow {
  double omega_khz = 0.0;
  double t2_first_us = 0.0;
  double t2_second_us = 0.0;
  bool second_beyond_horizon = false;
  double t2_mc_us = 0.0;  ///< NaN when the Monte-Carlo step is skipped
  double mc_err_us = 0.0; ///< one standard error of the fitted T2*
  std::string mc_status;
};

/// Analytic predictions and (optionally) simulate-then-fit T2* for every
/// entry of grids.omega_scan_khz. Throws ConfigError on an empty list.
std::vector<T2ScanRow> t2_scan(const ScenarioConfig& config, bool run_mc = true);
std::string format_t2_scan_csv(const std::vector<T2ScanRow>& rows);

/// The fit model matching a simulated Ramsey kind, with frozen inputs taken
/// from the config (A, omega_rot, gamma sigma_b) and the trace metadata
/// (p0_undressed), then seeded from the data.
ModelFunction ramsey_model(RamseyKind kind, const ScenarioConfig& config, const Trace& trace);

/// Ramsey kind recorded in a trace's metadata, if any.
std::optional<RamseyKind> trace_kind(const Trace& trace);

struct RamseyResult {
  Trace trace;
  Spectrum spectrum;
  FitOutcome fit;
};

RamseyResult run_ramsey(RamseyKind kind, const ScenarioConfig& config);

struct SpectraRow {
  double omega_khz = 0.0;
  double dip_low_khz = 0.0;   ///< analytic dressed line positions
  double dip_high_khz = 0.0;
  std::optional<FitOutcome> fit;  ///< absent for omega = 0
};

/// Dressed spectra for each omega in grids.omega_scan_khz plus the undressed
/// reference, each fitted jointly with the undressed trace.
struct SpectraResult {
  Trace undressed;
  std::vector<Trace> dressed;
  std::vector<SpectraRow> rows;
};

SpectraResult run_spectra(const ScenarioConfig& config);

/// Tabulated envelopes on the tau grid: second-order f, max-protection h,
/// first-order Gaussian, and the undressed {+1,-1} Gaussian.
std::string envelope_table_csv(const ScenarioConfig& config);

/// Metadata merged into every sidecar: config digest, seed, timestamp.
nlohmann::ordered_json provenance(const ScenarioConfig& config);

// Each command writes its artifacts below `out` and a summary to `log`.
// Returns the process exit code (0, or 3 when a fit did not converge).
int cmd_rates(const ScenarioConfig& config, const std::filesystem::path& out, std::ostream& log);
int cmd_t2scan(const ScenarioConfig& config, const std::filesystem::path& out, std::ostream& log,
               bool run_mc = true);
int cmd_ramsey(const ScenarioConfig& config, RamseyKind kind, const std::filesystem::path& out,
               std::ostream& log);
int cmd_spectra(const ScenarioConfig& config, const std::filesystem::path& out, std::ostream& log);
int cmd_envelope(const ScenarioConfig& config, const std::filesystem::path& out, std::ostream& log);

struct FitRequest {
  std::string model;  ///< one of model_names()
  std::filesystem::path input;
  std::optional<std::filesystem::path> undressed;  ///< spectrum_joint only
  std::optional<double> p0_undressed;  ///< overrides the sidecar value
  bool weighted = false;
};

int cmd_fit(const ScenarioConfig& config, const FitRequest& request,
            const std::filesystem::path& out, std::ostream& log);

}  // namespace cdd
