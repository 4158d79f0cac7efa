#pragma once

#include <complex>
#include <string>
#include <variant>
#include <vector>

namespace cdd {

/// Amplitude noise with a directly specified standard deviation (rad/us).
struct FixedAmplitudeNoise {
  double sigma_omega = 0.0;
  friend bool operator==(const FixedAmplitudeNoise&, const FixedAmplitudeNoise&) = default;
};

/// Amplitude noise injected through the reflected-power monitor: the diode
/// voltage has spread eta * <V_R>, which maps to (mean_omega + alpha_diode) * eta.
struct ReflectometerNoise {
  double eta = 0.0;
  double alpha_diode = 0.0;  ///< rad/us, intercept / slope of the diode line
  double mean_omega = 0.0;   ///< rad/us
  friend bool operator==(const ReflectometerNoise&, const ReflectometerNoise&) = default;
};

using AmplitudeNoise = std::variant<FixedAmplitudeNoise, ReflectometerNoise>;

/// Gaussian quasi-static noise of the environment.
struct NoiseSpec {
  double sigma_b = 0.0;  ///< mG
  double sigma_t = 0.0;  ///< degrees C
  AmplitudeNoise amplitude_noise = FixedAmplitudeNoise{};

  /// Throws std::invalid_argument on negative spreads or eta outside [0, 1).
  void validate() const;
  /// Standard deviation of the drive amplitude, rad/us.
  double sigma_omega() const;

  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

struct RateEntry {
  std::string label;
  double gamma = 0.0;  ///< rad/us
  /// 2 pi / gamma, in us. Infinite for a zero rate.
  double t2() const;
};

struct RateBudget {
  std::vector<RateEntry> entries;

  void add(std::string label, double gamma);
  double total() const;
};

/// Gamma_x = sqrt(2) pi |alpha| sigma_x for a linear shift alpha * dx with
/// Gaussian dx; equivalently T2* = sqrt(2) / (|alpha| sigma_x).
double gaussian_dephasing_rate(double alpha, double sigma_x);

/// Field spread (mG) that makes the {0,-1} qubit dephase in t2_0m1 us.
double sigma_b_from_t2(double t2_0m1, double gamma);

/// kappa with 1/kappa = sqrt(A^2 + Omega^2) / (sqrt(2) pi).
double kappa(double omega, double a_par);

/// First-order {m,p} dephasing rate from field noise.
double rate_magnetic_mp(double omega, double a_par, double sigma_b, double gamma);

/// First-order {m,p} dephasing rate from drive amplitude noise.
double rate_amplitude_mp(double omega, double a_par, double sigma_omega);

/// T2* = 2 pi / sum(Gamma). Throws UnboundedCoherence when the sum is zero.
double combine_rates(const RateBudget& budget);

double sigma_omega_from_reflectometer(double mean_omega, double eta, double alpha_diode);

/// Ramsey decay envelope of the {m,p} qubit with field noise expanded to
/// second order: sqrt(beta) exp(-2 (gamma sigma_b A beta tau)^2 / (A^2 + Omega^2)).
double envelope_second_order(double tau, double omega, double sigma_b, double a_par,
                             double gamma);

/// The complex average <exp(i d_omega tau)> whose modulus is envelope_second_order.
std::complex<double> second_order_coherence(double tau, double omega, double sigma_b,
                                            double a_par, double gamma);

/// envelope_second_order at A = 0.
double envelope_max_protection(double tau, double omega, double sigma_b, double gamma);

/// A product of independent decay factors, each 1 at tau = 0 and non-increasing.
class EnvelopeSpec {
 public:
  struct Gaussian {
    double t2;
  };
  struct SecondOrder {
    double omega, sigma_b, a_par, gamma;
  };
  struct MaxProtection {
    double omega, sigma_b, gamma;
  };
  using Factor = std::variant<Gaussian, SecondOrder, MaxProtection>;

  static EnvelopeSpec gaussian(double t2);
  static EnvelopeSpec second_order(double omega, double sigma_b, double a_par, double gamma);
  static EnvelopeSpec max_protection(double omega, double sigma_b, double gamma);
  /// The neutral envelope (== 1 everywhere).
  static EnvelopeSpec unity() { return EnvelopeSpec{}; }

  double operator()(double tau) const;
  EnvelopeSpec operator*(const EnvelopeSpec& other) const;
  const std::vector<Factor>& factors() const { return factors_; }

 private:
  std::vector<Factor> factors_;
};

struct SolverOptions {
  double start = 1e-3;     ///< first bracket probe, us
  double horizon = 1e3;    ///< largest tau searched, us
  double tolerance = 1e-6; ///< absolute bisection tolerance, us
};

struct DecayTime {
  double tau = 0.0;  ///< the 1/e time, or the horizon when beyond_horizon
  bool beyond_horizon = false;
};

/// Bisection for f(tau) = 1/e on a bracket found by doubling from options.start.
DecayTime one_over_e_time(const EnvelopeSpec& envelope, const SolverOptions& options = {});

enum class ModelOrder { first, second };

struct T2Prediction {
  double t2 = 0.0;  ///< us
  bool beyond_horizon = false;
  RateBudget budget;  ///< first-order rates, reported for both orders
};

/// {m,p} dephasing time. First order sums the first-order rates; second order
/// solves the second-order field envelope times the Gaussian amplitude-noise envelope.
T2Prediction predicted_t2_mp(double omega, double a_par, double sigma_b, double sigma_omega,
                             ModelOrder order, double gamma, const SolverOptions& options = {});

}  // namespace cdd
