#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "doctest.h"

#include "cdd/dephasing.hpp"
#include "cdd/errors.hpp"
#include "cdd/spin_model.hpp"
#include "cdd/units.hpp"

using namespace cdd;
using units::from_khz;
using units::to_khz;

namespace {

const double kGamma = units::gyromagnetic_from_mhz_per_gauss(2.8);
const double kPi = std::numbers::pi;

// sigma_b such that gamma sigma_b / 2pi = khz
double sigma_b_for(double khz) { return from_khz(khz) / kGamma; }

double t2_of(double gamma) { return 2.0 * kPi / gamma; }

double mp_splitting(double omega, double a_par, double db, double domega) {
  const auto p = SystemParams::nv_defaults(omega, 0.0, a_par);
  return larmor_frequency(DressedLabel::m_up, DressedLabel::p_up, p, {db, domega, 0.0});
}

}  // namespace

TEST_CASE("gaussian dephasing rate anchors") {
  CHECK(t2_of(gaussian_dephasing_rate(kGamma, sigma_b_for(41.68))) == doctest::Approx(5.4).epsilon(1e-3));
  CHECK(gaussian_dephasing_rate(kGamma, 0.0) == 0.0);
  const double dd_dt = -from_khz(74.0);
  CHECK(t2_of(gaussian_dephasing_rate(dd_dt, 0.25)) == doctest::Approx(12.2).epsilon(0.01));
  CHECK_THROWS_AS(gaussian_dephasing_rate(kGamma, -1.0), std::invalid_argument);
}

TEST_CASE("sigma_b from T2") {
  CHECK(to_khz(kGamma * sigma_b_from_t2(5.4, kGamma)) == doctest::Approx(41.68).epsilon(1e-3));
  CHECK(to_khz(kGamma * sigma_b_from_t2(2.7, kGamma)) == doctest::Approx(83.36).epsilon(1e-3));
  for (double t2 : {0.5, 5.4, 17.0, 250.0}) {
    const double s = sigma_b_from_t2(t2, kGamma);
    CHECK(t2_of(gaussian_dephasing_rate(kGamma, s)) == doctest::Approx(t2).epsilon(1e-12));
  }
  CHECK_THROWS_AS(sigma_b_from_t2(0.0, kGamma), std::invalid_argument);
}

TEST_CASE("kappa") {
  const double a = from_khz(150.0);
  CHECK(kappa(0.0, a) == doctest::Approx(std::sqrt(2.0) * kPi / a));
  CHECK(1.0 / kappa(from_khz(581.0), a) ==
        doctest::Approx(from_khz(std::hypot(150.0, 581.0)) / (std::sqrt(2.0) * kPi)));
  double prev = kappa(0.0, a);
  for (double w = 50.0; w <= 1000.0; w += 50.0) {
    const double k = kappa(from_khz(w), a);
    CHECK(k < prev);
    prev = k;
  }
  CHECK_THROWS_AS(kappa(0.0, 0.0), std::invalid_argument);
}

TEST_CASE("magnetic rate of the m-p qubit") {
  const double a = from_khz(150.0);
  const double sb = sigma_b_from_t2(5.4, kGamma);
  CHECK(t2_of(rate_magnetic_mp(0.0, a, sb, kGamma)) == doctest::Approx(2.7).epsilon(1e-12));
  CHECK(t2_of(rate_magnetic_mp(from_khz(581.0), a, sb, kGamma)) ==
        doctest::Approx(std::hypot(150.0, 581.0) / 300.0 * 5.4).epsilon(1e-12));
  CHECK(t2_of(rate_magnetic_mp(from_khz(581.0), a, sigma_b_for(42.0), kGamma)) ==
        doctest::Approx(10.8).epsilon(0.01));
}

TEST_CASE("first-order rates equal the finite-difference slope rates") {
  const double h_b = 1e-3;
  for (double w_khz : {0.0, 230.0, 470.0, 581.0, 900.0}) {
    for (double a_khz : {-145.0, 150.0, 60.0}) {
      const double omega = from_khz(w_khz), a = from_khz(a_khz);
      const double sb = sigma_b_for(42.0);
      const double slope_b = (mp_splitting(omega, a, h_b, 0) - mp_splitting(omega, a, -h_b, 0)) / (2 * h_b);
      CHECK(rate_magnetic_mp(omega, a, sb, kGamma) ==
            doctest::Approx(gaussian_dephasing_rate(std::abs(slope_b), sb)).epsilon(1e-6));
      if (w_khz == 0.0) continue;
      const double h_w = 1e-6 * omega;
      const double slope_w = (mp_splitting(omega, a, 0, h_w) - mp_splitting(omega, a, 0, -h_w)) / (2 * h_w);
      const double so = from_khz(21.95);
      CHECK(rate_amplitude_mp(omega, a, so) ==
            doctest::Approx(gaussian_dephasing_rate(std::abs(slope_w), so)).epsilon(1e-6));
    }
  }
}

TEST_CASE("amplitude rate and combination") {
  const double a = from_khz(150.0), omega = from_khz(581.0);
  CHECK(rate_amplitude_mp(omega, a, 0.0) == 0.0);
  const double g_omega = rate_amplitude_mp(omega, a, from_khz(21.95));
  CHECK(t2_of(g_omega) == doctest::Approx(10.6).epsilon(0.01));

  RateBudget single;
  single.add("b", 2 * kPi / 10.8);
  CHECK(combine_rates(single) == doctest::Approx(10.8));

  const double g_b = rate_magnetic_mp(omega, a, sigma_b_for(42.0), kGamma);
  RateBudget both, reversed;
  both.add("b", g_b);
  both.add("omega", g_omega);
  reversed.add("omega", g_omega);
  reversed.add("b", g_b);
  CHECK(combine_rates(both) == doctest::Approx(5.35).epsilon(0.01));
  CHECK(combine_rates(both) == combine_rates(reversed));

  RateBudget zero;
  zero.add("b", 0.0);
  CHECK_THROWS_AS(combine_rates(zero), UnboundedCoherence);
  CHECK_THROWS_AS(combine_rates(RateBudget{}), UnboundedCoherence);
}

TEST_CASE("reflectometer amplitude spread") {
  CHECK(to_khz(sigma_omega_from_reflectometer(from_khz(581.0), 0.049, from_khz(-133.0))) ==
        doctest::Approx(21.952).epsilon(1e-4));
  CHECK(sigma_omega_from_reflectometer(from_khz(581.0), 0.0, from_khz(-133.0)) == 0.0);
  CHECK(to_khz(sigma_omega_from_reflectometer(from_khz(400.0), 0.049, from_khz(-133.0))) ==
        doctest::Approx(13.083).epsilon(1e-4));
  CHECK_THROWS_AS(sigma_omega_from_reflectometer(from_khz(100.0), 0.05, from_khz(-133.0)),
                  std::invalid_argument);
}

TEST_CASE("second-order envelope") {
  const double a = from_khz(150.0), sb = sigma_b_for(42.0);
  SUBCASE("no field noise") {
    for (double tau : {0.0, 1.0, 10.0, 100.0})
      CHECK(envelope_second_order(tau, from_khz(581.0), 0.0, a, kGamma) == 1.0);
  }
  SUBCASE("undriven limit is a Gaussian at half the 0,-1 time") {
    const double s = sigma_b_from_t2(5.4, kGamma);
    for (double tau = 0.0; tau <= 10.0; tau += 0.05) {
      const double g = std::exp(-2.0 * std::pow(kGamma * s * tau, 2));
      CHECK(std::abs(envelope_second_order(tau, 0.0, s, a, kGamma) - g) < 1e-6);
      CHECK(std::exp(-std::pow(tau / 2.7, 2)) == doctest::Approx(g).epsilon(1e-12));
    }
  }
  SUBCASE("1/e near 13.5 us at 581 kHz") {
    CHECK(envelope_second_order(13.5, from_khz(581.0), sb, a, kGamma) ==
          doctest::Approx(std::exp(-1.0)).epsilon(0.02));
  }
  SUBCASE("positive, unity at zero, non-increasing") {
    for (double w : {0.0, 100.0, 455.7, 581.0, 2000.0}) {
      double prev = envelope_second_order(0.0, from_khz(w), sb, a, kGamma);
      CHECK(prev == 1.0);
      // stays within double range even for the undriven Gaussian
      for (double tau = 0.01; tau <= 50.0; tau += 0.005) {
        const double f = envelope_second_order(tau, from_khz(w), sb, a, kGamma);
        REQUIRE(f > 0.0);
        REQUIRE(f <= prev);
        prev = f;
      }
    }
  }
}

TEST_CASE("second-order envelope equals the Gaussian field average") {
  // The second-order expansion of the m-p splitting in the field offset,
  // averaged over 10^6 Gaussian draws.
  const double omega = from_khz(581.0), a = from_khz(150.0), sb = sigma_b_for(42.0);
  const double w0 = std::hypot(omega, a);
  const double lin = 2.0 * kGamma * a / w0;
  const double quad = 2.0 * kGamma * kGamma * omega * omega / (w0 * w0 * w0);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, sb);
  std::vector<double> db(1'000'000);
  for (auto& x : db) x = n(rng);
  int within = 0;
  for (int k = 1; k <= 20; ++k) {
    const double tau = 1.5 * k;
    std::complex<double> mean = 0.0;
    for (double x : db) mean += std::polar(1.0, (lin * x + quad * x * x) * tau);
    mean /= static_cast<double>(db.size());
    const double phase = std::arg(mean);
    double s2 = 0.0;
    for (double x : db) {
      const double proj = std::cos((lin * x + quad * x * x) * tau - phase) - std::abs(mean);
      s2 += proj * proj;
    }
    const double se = std::sqrt(s2 / (db.size() - 1.0) / db.size());
    const double f = envelope_second_order(tau, omega, sb, a, kGamma);
    CHECK(std::abs(std::abs(mean) - f) <= 3.0 * se + 1e-12);
    const auto c = second_order_coherence(tau, omega, sb, a, kGamma);
    CHECK(std::abs(c) == doctest::Approx(f).epsilon(1e-12));
    within += std::abs(std::abs(mean) - f) <= 3.0 * se;
  }
  CHECK(within == 20);
}

TEST_CASE("max-protection envelope") {
  const double sb = sigma_b_for(42.0), omega = from_khz(455.7);
  CHECK(envelope_max_protection(0.0, omega, sb, kGamma) == 1.0);
  for (double tau = 0.0; tau <= 100.0; tau += 0.37)
    CHECK(envelope_max_protection(tau, omega, sb, kGamma) ==
          doctest::Approx(envelope_second_order(tau, omega, sb, 0.0, kGamma)).epsilon(1e-12));
  CHECK(envelope_max_protection(50.0, omega, sb, kGamma) > std::exp(-1.0));
  CHECK_THROWS_AS(envelope_max_protection(1.0, 0.0, sb, kGamma), std::invalid_argument);
}

TEST_CASE("one-over-e time") {
  const double a = from_khz(150.0), sb = sigma_b_for(42.0);
  CHECK(one_over_e_time(EnvelopeSpec::gaussian(5.4)).tau == doctest::Approx(5.4).epsilon(1e-6));
  const auto so = one_over_e_time(EnvelopeSpec::second_order(from_khz(581.0), sb, a, kGamma));
  CHECK_FALSE(so.beyond_horizon);
  CHECK(so.tau == doctest::Approx(13.5).epsilon(0.015));
  CHECK(so.tau > 10.8);
  CHECK(so.tau < 15.0);
  SolverOptions horizon50;
  horizon50.horizon = 50.0;
  const auto mp = one_over_e_time(EnvelopeSpec::max_protection(from_khz(455.7), sb, kGamma), horizon50);
  CHECK(mp.beyond_horizon);
  CHECK(mp.tau == 50.0);
  SUBCASE("approaches the undriven Gaussian as the drive vanishes") {
    const double s = sigma_b_from_t2(5.4, kGamma);
    const double ref = one_over_e_time(EnvelopeSpec::gaussian(2.7)).tau;
    const double t = one_over_e_time(EnvelopeSpec::second_order(from_khz(1.0), s, a, kGamma)).tau;
    CHECK(t == doctest::Approx(ref).epsilon(0.01));
  }
  SUBCASE("product envelopes") {
    const auto prod = EnvelopeSpec::gaussian(3.0) * EnvelopeSpec::gaussian(4.0);
    CHECK(one_over_e_time(prod).tau == doctest::Approx(12.0 / 5.0).epsilon(1e-6));
    CHECK(EnvelopeSpec::unity()(7.0) == 1.0);
  }
}

TEST_CASE("predicted m-p coherence time") {
  const double a = from_khz(150.0), sb = sigma_b_for(42.0);
  const auto first = predicted_t2_mp(from_khz(581.0), a, sb, 0.0, ModelOrder::first, kGamma);
  const auto second = predicted_t2_mp(from_khz(581.0), a, sb, 0.0, ModelOrder::second, kGamma);
  CHECK(first.t2 == doctest::Approx(10.8).epsilon(0.01));
  CHECK(second.t2 == doctest::Approx(13.5).epsilon(0.015));
  double prev = 0.0;
  for (double w = 10.0; w <= 1500.0; w += 10.0) {
    const auto f = predicted_t2_mp(from_khz(w), a, sb, 0.0, ModelOrder::first, kGamma);
    const auto s = predicted_t2_mp(from_khz(w), a, sb, 0.0, ModelOrder::second, kGamma);
    CHECK(s.t2 >= f.t2 * (1.0 - 1e-9));
    if (w > 150.0) CHECK(s.t2 > f.t2);
    CHECK(s.t2 > prev);
    prev = s.t2;
  }
  SUBCASE("amplitude noise shortens the second-order time") {
    const auto noisy = predicted_t2_mp(from_khz(581.0), a, sb, from_khz(21.95), ModelOrder::second, kGamma);
    CHECK(noisy.t2 < second.t2);
    const auto noisy1 = predicted_t2_mp(from_khz(581.0), a, sb, from_khz(21.95), ModelOrder::first, kGamma);
    CHECK(noisy1.t2 == doctest::Approx(5.35).epsilon(0.01));
  }
}
