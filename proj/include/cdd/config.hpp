#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdd/pulse_sim.hpp"
#include "cdd/spin_model.hpp"

namespace cdd {

/// Scenario file contents in user-facing units (kHz, MHz, GHz, us, mG, C).
/// Conversion to internal units happens in the accessor methods.
struct ScenarioConfig {
  struct System {
    double gamma_mhz_per_gauss = 2.8;
    double d0_ghz = 2.87;
    double dd_dt_khz_per_c = -74.0;
    double omega_mech_mhz = 586.0;
    double q_factor = 2700.0;
    double omega_khz = 0.0;
    double delta_khz = 0.0;
    double a_par_khz = 0.0;
    friend bool operator==(const System&, const System&) = default;
  };

  // The field spread may be given in any of three equivalent ways.
  struct FromT2 {
    double t2_0m1_us;
    friend bool operator==(const FromT2&, const FromT2&) = default;
  };
  struct FromRate {
    double gamma_sigma_b_khz;
    friend bool operator==(const FromRate&, const FromRate&) = default;
  };
  struct FromField {
    double sigma_b_mg;
    friend bool operator==(const FromField&, const FromField&) = default;
  };
  using Magnetic = std::variant<FromT2, FromRate, FromField>;

  struct FixedAmplitude {
    double sigma_khz = 0.0;
    friend bool operator==(const FixedAmplitude&, const FixedAmplitude&) = default;
  };
  struct Reflectometer {
    double eta = 0.0;
    double alpha_khz = 0.0;
    friend bool operator==(const Reflectometer&, const Reflectometer&) = default;
  };
  using Amplitude = std::variant<FixedAmplitude, Reflectometer>;

  struct Noise {
    Magnetic magnetic = FromField{0.0};
    double sigma_t_c = 0.0;
    Amplitude amplitude = FixedAmplitude{};
    friend bool operator==(const Noise&, const Noise&) = default;
  };

  struct Simulation {
    std::size_t shots = 1000;
    std::uint64_t seed = 1;
    double weight_up = 0.5;
    double weight_down = 0.5;
    unsigned threads = 0;
    double omega_mag_0p_khz = 696.0;
    double omega_mag_mp_khz = 1513.0;
    double omega_mag_spectrum_khz = 80.0;
    double omega_rot_khz = 250.0;
    double closing_phase_rad = 0.0;
    friend bool operator==(const Simulation&, const Simulation&) = default;
  };

  struct Range {
    double start = 0.0;
    double stop = 0.0;
    double step = 1.0;
    /// start, start + step, ... up to stop inclusive (within step * 1e-9).
    std::vector<double> values() const;
    friend bool operator==(const Range&, const Range&) = default;
  };

  struct Grids {
    Range tau_us{0.0, 30.0, 0.05};
    std::vector<double> omega_scan_khz{230.0, 348.0, 470.0, 581.0};
    Range delta_mag_khz{-600.0, 600.0, 5.0};
    friend bool operator==(const Grids&, const Grids&) = default;
  };

  std::string name;
  System system;
  Noise noise;
  Simulation simulation;
  Grids grids;
  std::string output_dir = "out";

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;

  SystemParams system_params() const;
  double gamma() const;
  /// sigma_b in mG, resolved from whichever form the file uses.
  double sigma_b_mg() const;
  /// Noise in internal units. The reflectometer model is referenced to the
  /// drive strength `omega` (rad/us); pass the value being simulated.
  NoiseSpec noise_spec(double omega) const;
  SimConfig sim_config(double omega) const;
  RamseyOptions ramsey_options(RamseyKind kind) const;

  /// Throws ConfigError naming the offending key path.
  void validate() const;
};

/// Strict parse: unknown keys, wrong types and invalid values raise ConfigError.
ScenarioConfig parse_config(const nlohmann::json& j);
ScenarioConfig parse_config_text(const std::string& text);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Canonical form; parse_config(to_json(c)) == c.
nlohmann::ordered_json to_json(const ScenarioConfig& config);

}  // namespace cdd
