#include "cdd/dephasing.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "cdd/errors.hpp"

namespace cdd {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSqrt2 = std::numbers::sqrt2;

double dressed_norm_sq(double omega, double a_par) {
  const double s = a_par * a_par + omega * omega;
  if (!(s > 0.0)) throw std::invalid_argument("Omega and A_par cannot both be zero");
  return s;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

void NoiseSpec::validate() const {
  if (!(sigma_b >= 0.0)) throw std::invalid_argument("sigma_b must be >= 0");
  if (!(sigma_t >= 0.0)) throw std::invalid_argument("sigma_t must be >= 0");
  std::visit(overloaded{
                 [](const FixedAmplitudeNoise& f) {
                   if (!(f.sigma_omega >= 0.0))
                     throw std::invalid_argument("sigma_omega must be >= 0");
                 },
                 [](const ReflectometerNoise& r) {
                   if (!(r.eta >= 0.0 && r.eta < 1.0))
                     throw std::invalid_argument("eta must lie in [0, 1)");
                 },
             },
             amplitude_noise);
}

double NoiseSpec::sigma_omega() const {
  return std::visit(overloaded{
                        [](const FixedAmplitudeNoise& f) { return f.sigma_omega; },
                        [](const ReflectometerNoise& r) {
                          return sigma_omega_from_reflectometer(r.mean_omega, r.eta,
                                                                r.alpha_diode);
                        },
                    },
                    amplitude_noise);
}

double RateEntry::t2() const {
  return gamma > 0.0 ? 2.0 * kPi / gamma : std::numeric_limits<double>::infinity();
}

void RateBudget::add(std::string label, double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("rates must be >= 0");
  entries.push_back({std::move(label), gamma});
}

double RateBudget::total() const {
  double sum = 0.0;
  for (const auto& e : entries) sum += e.gamma;
  return sum;
}

double gaussian_dephasing_rate(double alpha, double sigma_x) {
  if (!(sigma_x >= 0.0)) throw std::invalid_argument("sigma_x must be >= 0");
  return kSqrt2 * kPi * std::abs(alpha) * sigma_x;
}

double sigma_b_from_t2(double t2_0m1, double gamma) {
  if (!(t2_0m1 > 0.0)) throw std::invalid_argument("t2 must be > 0");
  return kSqrt2 / (gamma * t2_0m1);
}

double kappa(double omega, double a_par) {
  return kSqrt2 * kPi / std::sqrt(dressed_norm_sq(omega, a_par));
}

double rate_magnetic_mp(double omega, double a_par, double sigma_b, double gamma) {
  if (!(sigma_b >= 0.0)) throw std::invalid_argument("sigma_b must be >= 0");
  // alpha = d omega_mp / d db = 2 gamma |A| / sqrt(A^2 + Omega^2)
  return 2.0 * kappa(omega, a_par) * std::abs(a_par) * gamma * sigma_b;
}

double rate_amplitude_mp(double omega, double a_par, double sigma_omega) {
  if (!(sigma_omega >= 0.0)) throw std::invalid_argument("sigma_omega must be >= 0");
  return kappa(omega, a_par) * omega * sigma_omega;
}

double combine_rates(const RateBudget& budget) {
  const double total = budget.total();
  if (!(total > 0.0)) throw UnboundedCoherence("rate budget is zero; T2* is unbounded");
  return 2.0 * kPi / total;
}

double sigma_omega_from_reflectometer(double mean_omega, double eta, double alpha_diode) {
  const double effective = mean_omega + alpha_diode;
  if (!(effective > 0.0))
    throw std::invalid_argument("mean_omega + alpha_diode must be > 0");
  return effective * eta;
}

double envelope_second_order(double tau, double omega, double sigma_b, double a_par,
                             double gamma) {
  const double s = dressed_norm_sq(omega, a_par);
  const double s3 = s * s * s;
  const double q = 2.0 * gamma * sigma_b * omega;
  const double beta = std::sqrt(s3 / (s3 + q * q * q * q * tau * tau));
  const double x = gamma * sigma_b * a_par * beta * tau;
  return std::sqrt(beta) * std::exp(-2.0 * x * x / s);
}

std::complex<double> second_order_coherence(double tau, double omega, double sigma_b,
                                            double a_par, double gamma) {
  const double s = dressed_norm_sq(omega, a_par);
  const double linear = 2.0 * gamma * a_par / std::sqrt(s);
  const double quadratic = 2.0 * gamma * gamma * omega * omega / (s * std::sqrt(s));
  const double var = sigma_b * sigma_b;
  const std::complex<double> denom(1.0, -2.0 * quadratic * tau * var);
  return std::exp(-0.5 * linear * linear * tau * tau * var / denom) / std::sqrt(denom);
}

double envelope_max_protection(double tau, double omega, double sigma_b, double gamma) {
  if (!(omega > 0.0)) throw std::invalid_argument("max-protection envelope needs omega > 0");
  const double q = 2.0 * gamma * sigma_b;
  return std::sqrt(omega / std::sqrt(omega * omega + q * q * q * q * tau * tau));
}

EnvelopeSpec EnvelopeSpec::gaussian(double t2) {
  if (!(t2 > 0.0)) throw std::invalid_argument("Gaussian T2 must be > 0");
  EnvelopeSpec e;
  e.factors_.push_back(Gaussian{t2});
  return e;
}

EnvelopeSpec EnvelopeSpec::second_order(double omega, double sigma_b, double a_par,
                                        double gamma) {
  dressed_norm_sq(omega, a_par);
  EnvelopeSpec e;
  e.factors_.push_back(SecondOrder{omega, sigma_b, a_par, gamma});
  return e;
}

EnvelopeSpec EnvelopeSpec::max_protection(double omega, double sigma_b, double gamma) {
  if (!(omega > 0.0)) throw std::invalid_argument("max-protection envelope needs omega > 0");
  EnvelopeSpec e;
  e.factors_.push_back(MaxProtection{omega, sigma_b, gamma});
  return e;
}

double EnvelopeSpec::operator()(double tau) const {
  double value = 1.0;
  for (const auto& f : factors_) {
    value *= std::visit(
        overloaded{
            [tau](const Gaussian& g) { return std::exp(-(tau * tau) / (g.t2 * g.t2)); },
            [tau](const SecondOrder& s) {
              return envelope_second_order(tau, s.omega, s.sigma_b, s.a_par, s.gamma);
            },
            [tau](const MaxProtection& m) {
              return envelope_max_protection(tau, m.omega, m.sigma_b, m.gamma);
            },
        },
        f);
  }
  return value;
}

EnvelopeSpec EnvelopeSpec::operator*(const EnvelopeSpec& other) const {
  EnvelopeSpec e = *this;
  e.factors_.insert(e.factors_.end(), other.factors_.begin(), other.factors_.end());
  return e;
}

DecayTime one_over_e_time(const EnvelopeSpec& envelope, const SolverOptions& options) {
  const double target = std::exp(-1.0);
  if (!(options.start > 0.0 && options.horizon > options.start && options.tolerance > 0.0))
    throw std::invalid_argument("invalid solver options");

  double lo = 0.0;
  double hi = options.start;
  while (envelope(hi) > target) {
    if (hi >= options.horizon) return {options.horizon, true};
    lo = hi;
    hi = std::min(2.0 * hi, options.horizon);
  }
  while (hi - lo > options.tolerance) {
    const double mid = 0.5 * (lo + hi);
    (envelope(mid) > target ? lo : hi) = mid;
  }
  return {0.5 * (lo + hi), false};
}

T2Prediction predicted_t2_mp(double omega, double a_par, double sigma_b, double sigma_omega,
                             ModelOrder order, double gamma, const SolverOptions& options) {
  T2Prediction out;
  out.budget.add("magnetic", rate_magnetic_mp(omega, a_par, sigma_b, gamma));
  out.budget.add("amplitude", rate_amplitude_mp(omega, a_par, sigma_omega));

  if (order == ModelOrder::first) {
    out.t2 = combine_rates(out.budget);
    return out;
  }

  EnvelopeSpec envelope = EnvelopeSpec::second_order(omega, sigma_b, a_par, gamma);
  const double amplitude_rate = out.budget.entries[1].gamma;
  if (amplitude_rate > 0.0) envelope = envelope * EnvelopeSpec::gaussian(out.budget.entries[1].t2());
  const DecayTime decay = one_over_e_time(envelope, options);
  out.t2 = decay.tau;
  out.beyond_horizon = decay.beyond_horizon;
  return out;
}

}  // namespace cdd
