#pragma once

#include <numbers>

// Internal conventions: time in microseconds, angular frequency in rad/us,
// magnetic field in mG, temperature in degrees C. hbar = 1.
// Everything user-facing is ordinary frequency (kHz / MHz / GHz).
namespace cdd::units {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// kHz (ordinary) -> rad/us.
constexpr double from_khz(double khz) { return two_pi * khz * 1e-3; }
constexpr double from_mhz(double mhz) { return two_pi * mhz; }
constexpr double from_ghz(double ghz) { return two_pi * ghz * 1e3; }

/// rad/us -> kHz (ordinary).
constexpr double to_khz(double angular) { return angular / two_pi * 1e3; }
constexpr double to_mhz(double angular) { return angular / two_pi; }

/// Gyromagnetic ratio given as MHz/G, returned as rad/us per mG.
constexpr double gyromagnetic_from_mhz_per_gauss(double mhz_per_gauss) {
  return two_pi * mhz_per_gauss * 1e-3;
}

}  // namespace cdd::units
