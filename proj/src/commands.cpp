#include "cdd/commands.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "cdd/errors.hpp"
#include "cdd/trace_io.hpp"
#include "cdd/units.hpp"

namespace cdd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fixed(double v, int digits = 4) {
  if (std::isinf(v)) return "inf";
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double metadata_number(const Trace& trace, const char* key, double fallback) {
  const auto it = trace.metadata.find(key);
  return it != trace.metadata.end() && it->is_number() ? it->get<double>() : fallback;
}

double param_metadata(const Trace& trace, const char* key, double fallback) {
  const auto it = trace.metadata.find("params");
  if (it == trace.metadata.end() || !it->is_object()) return fallback;
  const auto v = it->find(key);
  return v != it->end() && v->is_number() ? v->get<double>() : fallback;
}

void require_dressing(const ScenarioConfig& c) {
  if (c.system.omega_khz == 0.0 && c.system.a_par_khz == 0.0)
    throw ConfigError("system", "omega_khz and a_par_khz cannot both be zero for {m,p} predictions");
}

std::string omega_tag(double omega_khz) {
  std::ostringstream s;
  s << omega_khz;
  return s.str();
}

}  // namespace

nlohmann::ordered_json provenance(const ScenarioConfig& config) {
  nlohmann::ordered_json j;
  j["config_digest"] = fnv1a_hex(to_json(config).dump());
  j["seed"] = config.simulation.seed;
  j["generated_at"] = utc_timestamp();
  return j;
}

RatesReport rates_report(const ScenarioConfig& config) {
  require_dressing(config);
  const SystemParams p = config.system_params();
  RatesReport r;
  r.sigma_b_mg = config.sigma_b_mg();
  r.gamma_sigma_b_khz = units::to_khz(p.gamma() * r.sigma_b_mg);
  r.t2_0m1_us = r.sigma_b_mg > 0.0 ? std::numbers::sqrt2 / (p.gamma() * r.sigma_b_mg) : kInf;
  r.t2_pm1_us = 0.5 * r.t2_0m1_us;
  r.thermal_t2_us = config.noise.sigma_t_c > 0.0
                        ? std::numbers::sqrt2 / (std::abs(p.dd_dt()) * config.noise.sigma_t_c)
                        : kInf;
  r.cutoff_khz = units::to_khz(mechanical_cutoff(p.omega_mech(), p.q_factor()));
  r.omega_khz = config.system.omega_khz;

  double sigma_omega = 0.0;
  try {
    sigma_omega = config.noise_spec(p.omega()).sigma_omega();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("noise.amplitude", e.what());
  }
  r.sigma_omega_khz = units::to_khz(sigma_omega);
  r.budget.add("magnetic", rate_magnetic_mp(p.omega(), p.a_par(), r.sigma_b_mg, p.gamma()));
  r.budget.add("amplitude", rate_amplitude_mp(p.omega(), p.a_par(), sigma_omega));
  try {
    r.t2_first_us = combine_rates(r.budget);
  } catch (const UnboundedCoherence&) {
    r.t2_first_us = kInf;
  }
  r.second = predicted_t2_mp(p.omega(), p.a_par(), r.sigma_b_mg, sigma_omega, ModelOrder::second,
                             p.gamma());
  return r;
}

std::string format_rates(const RatesReport& r) {
  std::ostringstream s;
  s << "gamma_sigma_b_khz: " << fixed(r.gamma_sigma_b_khz) << "\n";
  s << "sigma_b_mg: " << fixed(r.sigma_b_mg) << "\n";
  s << "t2_0m1_us: " << fixed(r.t2_0m1_us) << "\n";
  s << "t2_pm1_undressed_us: " << fixed(r.t2_pm1_us) << "\n";
  s << "thermal_t2_0p_us: " << fixed(r.thermal_t2_us) << "\n";
  s << "mechanical_cutoff_khz: " << fixed(r.cutoff_khz) << "\n";
  s << "omega_khz: " << fixed(r.omega_khz) << "\n";
  s << "sigma_omega_khz: " << fixed(r.sigma_omega_khz) << "\n";
  s << "rates (first order, {m,p}):\n";
  for (const auto& e : r.budget.entries)
    s << "  " << e.label << ": gamma_khz=" << fixed(units::to_khz(e.gamma))
      << " t2_us=" << fixed(e.t2()) << "\n";
  s << "t2_mp_first_order_us: " << fixed(r.t2_first_us) << "\n";
  s << "t2_mp_second_order_us: " << fixed(r.second.t2)
    << (r.second.beyond_horizon ? " (beyond horizon)" : "") << "\n";
  return s.str();
}

std::optional<RamseyKind> trace_kind(const Trace& trace) {
  const auto it = trace.metadata.find("kind");
  if (it == trace.metadata.end() || !it->is_string()) return std::nullopt;
  try {
    return ramsey_kind_from_string(it->get<std::string>());
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

ModelFunction ramsey_model(RamseyKind kind, const ScenarioConfig& config, const Trace& trace) {
  const double a_par =
      units::from_khz(std::abs(param_metadata(trace, "a_par_khz", config.system.a_par_khz)));
  const double omega_rot =
      units::from_khz(metadata_number(trace, "omega_rot_khz", config.simulation.omega_rot_khz));
  const double p0 = metadata_number(trace, "p0_undressed", 1.0);
  ModelFunction m;
  switch (kind) {
    case RamseyKind::undressed_0m1: m = model_undressed_ramsey(omega_rot); break;
    case RamseyKind::dressed_0p: m = model_ramsey_0p(a_par, omega_rot); break;
    case RamseyKind::dressed_mp: m = model_ramsey_mp(a_par, p0); break;
    case RamseyKind::max_protection:
      m = model_max_protection(a_par, p0, config.gamma() * config.sigma_b_mg());
      break;
  }
  m.seed(FitData::from_trace(trace));
  return m;
}

std::vector<T2ScanRow> t2_scan(const ScenarioConfig& config, bool run_mc) {
  if (config.grids.omega_scan_khz.empty())
    throw ConfigError("grids.omega_scan_khz", "must not be empty");
  const SystemParams base = config.system_params();
  const auto tau = config.grids.tau_us.values();
  std::vector<T2ScanRow> rows;
  for (double omega_khz : config.grids.omega_scan_khz) {
    ScenarioConfig c = config;
    c.system.omega_khz = omega_khz;
    const RatesReport r = rates_report(c);
    T2ScanRow row;
    row.omega_khz = omega_khz;
    row.t2_first_us = r.t2_first_us;
    row.t2_second_us = r.second.t2;
    row.second_beyond_horizon = r.second.beyond_horizon;
    row.t2_mc_us = std::numeric_limits<double>::quiet_NaN();
    row.mc_err_us = std::numeric_limits<double>::quiet_NaN();
    if (run_mc && omega_khz > 0.0) {
      const double omega = units::from_khz(omega_khz);
      const Trace trace =
          simulate_ramsey(RamseyKind::dressed_mp, tau, base.with_omega(omega), c.sim_config(omega),
                          c.ramsey_options(RamseyKind::dressed_mp));
      const ModelFunction model = ramsey_model(RamseyKind::dressed_mp, c, trace);
      const FitOutcome fit = nlls_fit(model, FitData::from_trace(trace));
      const std::size_t k = fit.index("t2");
      std::size_t c_idx = 0;
      for (std::size_t i = 0; i < k; ++i) c_idx += fit.free[i] ? 1 : 0;
      row.t2_mc_us = fit.values[k];
      row.mc_err_us = std::sqrt(fit.covariance(static_cast<Eigen::Index>(c_idx),
                                               static_cast<Eigen::Index>(c_idx)));
      row.mc_status = std::string(to_string(fit.status));
    } else {
      row.mc_status = "skipped";
    }
    rows.push_back(row);
  }
  return rows;
}

std::string format_t2_scan_csv(const std::vector<T2ScanRow>& rows) {
  std::string out = "omega_khz,t2_first_us,t2_second_us,t2_mc_us,mc_err_us\n";
  for (const auto& r : rows)
    out += format_double(r.omega_khz) + "," + format_double(r.t2_first_us) + "," +
           format_double(r.t2_second_us) + "," + format_double(r.t2_mc_us) + "," +
           format_double(r.mc_err_us) + "\n";
  return out;
}

RamseyResult run_ramsey(RamseyKind kind, const ScenarioConfig& config) {
  const SystemParams p = config.system_params();
  const auto tau = config.grids.tau_us.values();
  RamseyResult r;
  r.trace = simulate_ramsey(kind, tau, p, config.sim_config(p.omega()), config.ramsey_options(kind));
  r.spectrum = fourier_magnitude(r.trace, 4);
  const ModelFunction model = ramsey_model(kind, config, r.trace);
  r.fit = nlls_fit(model, FitData::from_trace(r.trace));
  return r;
}

SpectraResult run_spectra(const ScenarioConfig& config) {
  const SystemParams base = config.system_params();
  const auto grid = config.grids.delta_mag_khz.values();
  SpectrumOptions opts;
  opts.omega_mag = units::from_khz(config.simulation.omega_mag_spectrum_khz);

  SpectraResult out;
  out.undressed = simulate_spectrum(grid, base.with_omega(0.0), config.sim_config(0.0), opts);
  for (double omega_khz : config.grids.omega_scan_khz) {
    const double omega = units::from_khz(omega_khz);
    const SystemParams p = base.with_omega(omega);
    Trace dressed = simulate_spectrum(grid, p, config.sim_config(omega), opts);
    SpectraRow row;
    row.omega_khz = omega_khz;
    const TransitionOffsets lines = dressed_transition_offsets(omega, p.delta());
    row.dip_low_khz = units::to_khz(lines.zero_m);
    row.dip_high_khz = units::to_khz(lines.zero_p);
    if (omega_khz > 0.0) {
      const FitData data = FitData::joint(dressed, out.undressed);
      ModelFunction model = model_spectrum_joint();
      model.seed(data);
      row.fit = nlls_fit(model, data);
    }
    out.dressed.push_back(std::move(dressed));
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string envelope_table_csv(const ScenarioConfig& config) {
  const SystemParams p = config.system_params();
  const double sigma_b = config.sigma_b_mg();
  const RatesReport r = rates_report(config);
  std::string out = "tau_us,f_second_order,h_max_protection,gaussian_first_order,gaussian_undressed_pm1\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (double tau : config.grids.tau_us.values()) {
    const double f = envelope_second_order(tau, p.omega(), sigma_b, p.a_par(), p.gamma());
    const double h = p.omega() > 0.0 ? envelope_max_protection(tau, p.omega(), sigma_b, p.gamma()) : nan;
    const double g1 = std::isinf(r.t2_first_us) ? 1.0 : std::exp(-tau * tau / (r.t2_first_us * r.t2_first_us));
    const double g0 = std::isinf(r.t2_pm1_us) ? 1.0 : std::exp(-tau * tau / (r.t2_pm1_us * r.t2_pm1_us));
    out += format_double(tau) + "," + format_double(f) + "," + format_double(h) + "," +
           format_double(g1) + "," + format_double(g0) + "\n";
  }
  return out;
}

int cmd_rates(const ScenarioConfig& config, const std::filesystem::path& out, std::ostream& log) {
  const std::string text = format_rates(rates_report(config));
  write_text(out / "rates.txt", text);
  log << text;
  return 0;
}

int cmd_t2scan(const ScenarioConfig& config, const std::filesystem::path& out, std::ostream& log,
               bool run_mc) {
  const auto rows = t2_scan(config, run_mc);
  const std::string csv = format_t2_scan_csv(rows);
  write_text(out / "t2scan.csv", csv);
  write_text(out / "t2scan.csv.json", provenance(config).dump(2) + "\n");
  log << csv;
  int code = 0;
  for (const auto& r : rows)
    if (run_mc && r.mc_status != "converged" && r.mc_status != "skipped") {
      log << "warning: Monte-Carlo fit at " << r.omega_khz << " kHz: " << r.mc_status << "\n";
      code = 3;
    }
  return code;
}

int cmd_ramsey(const ScenarioConfig& config, RamseyKind kind, const std::filesystem::path& out,
               std::ostream& log) {
  const RamseyResult r = run_ramsey(kind, config);
  const std::string stem = "ramsey_" + std::string(to_string(kind));
  write_trace(out / (stem + ".csv"), r.trace, provenance(config));
  write_spectrum_csv(out / (stem + "_fft.csv"), r.spectrum);
  const std::string report = format_fit_report(r.fit);
  write_text(out / (stem + "_fit.txt"), report);
  log << "wrote " << (out / (stem + ".csv")).string() << "\n" << report;
  return r.fit.converged() ? 0 : 3;
}

int cmd_spectra(const ScenarioConfig& config, const std::filesystem::path& out, std::ostream& log) {
  const SpectraResult r = run_spectra(config);
  const auto extra = provenance(config);
  write_trace(out / "spectrum_undressed.csv", r.undressed, extra);
  std::string summary =
      "omega_khz,line_low_khz,line_high_khz,fit_omega_khz,fit_delta_khz,fit_w0_khz,fit_status\n";
  int code = 0;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    const std::string stem = "spectrum_omega_" + omega_tag(row.omega_khz);
    write_trace(out / (stem + ".csv"), r.dressed[i], extra);
    summary += format_double(row.omega_khz) + "," + format_double(row.dip_low_khz) + "," +
               format_double(row.dip_high_khz) + ",";
    if (row.fit) {
      write_text(out / (stem + "_fit.txt"), format_fit_report(*row.fit));
      summary += format_double(row.fit->value("omega")) + "," + format_double(row.fit->value("delta")) +
                 "," + format_double(row.fit->value("w0")) + "," +
                 std::string(to_string(row.fit->status)) + "\n";
      if (!row.fit->converged()) code = 3;
    } else {
      summary += ",,,not_fitted\n";
    }
  }
  write_text(out / "spectra_summary.csv", summary);
  log << summary;
  return code;
}

int cmd_envelope(const ScenarioConfig& config, const std::filesystem::path& out, std::ostream& log) {
  const std::string csv = envelope_table_csv(config);
  write_text(out / "envelope.csv", csv);
  log << "wrote " << (out / "envelope.csv").string() << "\n";
  return 0;
}

int cmd_fit(const ScenarioConfig& config, const FitRequest& request,
            const std::filesystem::path& out, std::ostream& log) {
  Trace trace = read_trace(request.input);
  if (request.p0_undressed) trace.metadata["p0_undressed"] = *request.p0_undressed;

  FitOutcome fit;
  if (request.model == "spectrum_joint") {
    if (!request.undressed)
      throw ConfigError("--undressed", "spectrum_joint needs the undressed trace");
    const Trace undressed = read_trace(*request.undressed);
    const FitData data = FitData::joint(trace, undressed, request.weighted);
    ModelFunction model = model_spectrum_joint();
    model.seed(data);
    fit = nlls_fit(model, data);
  } else {
    RamseyKind kind;
    if (request.model == "undressed_ramsey") kind = RamseyKind::undressed_0m1;
    else if (request.model == "ramsey_0p") kind = RamseyKind::dressed_0p;
    else if (request.model == "ramsey_mp") kind = RamseyKind::dressed_mp;
    else if (request.model == "max_protection") kind = RamseyKind::max_protection;
    else throw ConfigError("--model", "unknown model '" + request.model + "'");
    const ModelFunction model = ramsey_model(kind, config, trace);
    fit = nlls_fit(model, FitData::from_trace(trace, request.weighted));
  }
  const std::string report = format_fit_report(fit);
  write_text(out / (request.input.stem().string() + "_" + request.model + "_fit.txt"), report);
  log << report;
  return fit.converged() ? 0 : 3;
}

}  // namespace cdd
