#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"

#include "cdd/fitting.hpp"
#include "cdd/spin_model.hpp"
#include "cdd/units.hpp"

using namespace cdd;
using units::from_khz;
using units::to_khz;

namespace {

struct Case {
  ModelFunction model;
  std::vector<double> truth;
  FitData data;  ///< abscissa only; y filled per trial
};

std::vector<double> grid(double start, double stop, double step) {
  std::vector<double> g;
  for (int i = 0; start + i * step <= stop + 1e-9 * step; ++i) g.push_back(start + i * step);
  return g;
}

FitData tau_data(double stop, double step) {
  FitData d;
  d.x = grid(0.0, stop, step);
  d.y.assign(d.x.size(), 0.0);
  return d;
}

void set_truth(Case& c) {
  for (std::size_t k = 0; k < c.truth.size(); ++k) c.model.params[k].initial = c.truth[k];
  c.data.y = c.model.evaluate(c.truth, c.data);
}

// Parameter values chosen so the window spans a few oscillations and the
// decay, which keeps +-20% starting points inside the basin of attraction.
std::vector<Case> cases() {
  std::vector<Case> out;
  {
    Case c{model_undressed_ramsey(1.2), {0.5, 0.9, 3.0, 0.05, 0.9, 1.2}, tau_data(6.0, 0.02)};
    set_truth(c);
    out.push_back(c);
  }
  {
    Case c{model_ramsey_0p(0.9, 1.2), {0.4, 0.6, 0.5, 0.3, 1.4, 0.02, 3.0, 0.9, 1.2}, tau_data(6.0, 0.02)};
    set_truth(c);
    out.push_back(c);
  }
  {
    Case c{model_ramsey_mp(0.9, 0.97), {0.5, 3.0, 1.0, 0.4, 0.9, 0.97}, tau_data(6.0, 0.02)};
    set_truth(c);
    out.push_back(c);
  }
  {
    Case c{model_max_protection(0.5, 0.96, 0.26), {1.2, 0.3, 0.5, 2.0, 0.96, 0.26, 0.5},
           tau_data(8.0, 0.02)};
    set_truth(c);
    out.push_back(c);
  }
  {
    Case c{model_spectrum_joint(), {0.9, 0.3, 0.28, 120.0, 10.0, 470.0, 0.9, 0.5, 120.0, 5.0}, {}};
    for (int ch = 0; ch < 2; ++ch)
      for (double x : grid(-600.0, 600.0, 5.0)) {
        c.data.x.push_back(x);
        c.data.channel.push_back(ch);
      }
    c.data.abscissa_unit = "kHz";
    c.data.y.assign(c.data.x.size(), 0.0);
    set_truth(c);
    out.push_back(c);
  }
  return out;
}

std::string name_of(const Case& c) { return c.model.id; }

}  // namespace

TEST_CASE("noiseless round trip from perturbed starts") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.8, 1.2);
  for (auto c : cases()) {
    CAPTURE(name_of(c));
    for (int trial = 0; trial < 10; ++trial) {
      ModelFunction m = c.model;
      for (auto& p : m.params)
        if (!p.frozen) p.initial *= u(rng);
      const auto fit = nlls_fit(m, c.data);
      CHECK(fit.converged());
      for (std::size_t k = 0; k < c.truth.size(); ++k) {
        CAPTURE(fit.names[k]);
        CHECK(fit.values[k] == doctest::Approx(c.truth[k]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("95% intervals cover the truth in at least 90% of noisy fits") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (auto c : cases()) {
    CAPTURE(name_of(c));
    std::vector<int> covered(c.truth.size(), 0);
    int finite = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
      FitData d = c.data;
      for (auto& y : d.y) y += noise(rng);
      const auto fit = nlls_fit(c.model, d);
      // unresolved parameters get infinite intervals, which would cover trivially
      finite += fit.converged() && std::isfinite(fit.ci_high[1] - fit.ci_low[1]);
      for (std::size_t k = 0; k < c.truth.size(); ++k)
        covered[k] += fit.ci_low[k] <= c.truth[k] && c.truth[k] <= fit.ci_high[k];
    }
    for (std::size_t k = 0; k < c.truth.size(); ++k) {
      CAPTURE(c.model.params[k].name);
      if (!c.model.params[k].frozen) CHECK(covered[k] >= 180);
    }
    CHECK(finite == trials);
  }
}

TEST_CASE("analytic and finite-difference Jacobians agree") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.7, 1.3);
  for (auto c : cases()) {
    if (!c.model.gradient) continue;
    CAPTURE(name_of(c));
    for (int t = 0; t < 5; ++t) {
      auto p = c.truth;
      for (auto& v : p) v *= u(rng);
      const Eigen::MatrixXd fd = finite_difference_jacobian(c.model, p, c.data);
      const Eigen::MatrixXd an = analytic_jacobian(c.model, p, c.data);
      REQUIRE(fd.rows() == an.rows());
      REQUIRE(fd.cols() == an.cols());
      for (Eigen::Index j = 0; j < fd.cols(); ++j)
        CHECK((fd.col(j) - an.col(j)).norm() <= 1e-4 * an.col(j).norm());
    }
  }
}

TEST_CASE("fits are invariant under abscissa rescaling") {
  for (auto c : cases()) {
    CAPTURE(name_of(c));
    const double scale = 1e-3;  // us -> ms, or kHz -> MHz
    FitData scaled = c.data;
    for (auto& x : scaled.x) x *= scale;
    ModelFunction m = c.model;
    for (auto& p : m.params)
      if (!p.frozen) p.initial *= 1.05;
    const ModelFunction ms = m.rescaled(scale);
    const auto a = nlls_fit(m, c.data);
    const auto b = nlls_fit(ms, scaled);
    const auto expect = m.rescale_values(a.values, scale);
    for (std::size_t k = 0; k < expect.size(); ++k)
      CHECK(b.values[k] == doctest::Approx(expect[k]).epsilon(1e-6));
  }
}

TEST_CASE("degenerate inputs are flagged, not crashed on") {
  SUBCASE("constant data against a damped cosine") {
    FitData d = tau_data(10.0, 0.05);
    std::fill(d.y.begin(), d.y.end(), 0.5);
    ModelFunction m = model_ramsey_mp(0.9, 0.97);
    const auto fit = nlls_fit(m, d);
    CHECK_FALSE(fit.converged());
  }
  SUBCASE("zero amplitude leaves T2 unidentified") {
    Case c{model_undressed_ramsey(1.2), {0.5, 0.0, 3.0, 0.05, 0.9, 1.2}, tau_data(6.0, 0.02)};
    set_truth(c);
    c.model.param("a").initial = 0.5;
    const auto fit = nlls_fit(c.model, c.data);
    CHECK_FALSE(fit.converged());
    CHECK_FALSE(fit.warnings.empty());
  }
  SUBCASE("undriven 0p branches coincide") {
    Case c{model_ramsey_0p(0.0, 1.2), {0.4, 0.6, 0.5, 0.3, 0.0, 0.02, 3.0, 0.0, 1.2}, tau_data(6.0, 0.02)};
    set_truth(c);
    const auto fit = nlls_fit(c.model, c.data);
    CHECK_FALSE(fit.converged());
    CHECK_FALSE(fit.warnings.empty());
  }
  SUBCASE("undriven spectra cannot separate two dips") {
    auto c = cases().back();
    c.truth[5] = 0.0;
    c.truth[4] = 0.0;
    set_truth(c);
    c.model.param("omega").initial = 50.0;
    const auto fit = nlls_fit(c.model, c.data);
    CHECK_FALSE(fit.converged());
    CHECK_FALSE(fit.warnings.empty());
  }
}

TEST_CASE("contract errors") {
  ModelFunction m = model_ramsey_mp(0.9, 0.97);
  FitData few = tau_data(0.5, 0.1);
  CHECK_THROWS_AS(nlls_fit(m, few), std::invalid_argument);
  m.param("t2").initial = -1.0;
  CHECK_THROWS_AS(nlls_fit(m, tau_data(5.0, 0.05)), std::invalid_argument);
  CHECK_THROWS(m.index("no_such_parameter"));
}

TEST_CASE("spectrum model identity: detuning from fitted centers") {
  ModelFunction m = model_spectrum_joint();
  const double w0 = 12.0, delta = 35.0, omega = 470.0;
  const double root = std::hypot(delta, omega);
  const double lo = w0 + 0.5 * delta - 0.5 * root, hi = w0 + 0.5 * delta + 0.5 * root;
  CHECK(detuning_from_lines(lo, hi, w0) == doctest::Approx(delta).epsilon(1e-12));
  // dips of the model sit at those centers
  std::vector<double> p{1.0, 0.3, 0.3, 20.0, delta, omega, 1.0, 0.5, 30.0, w0};
  CHECK(m(p, lo, 0) < m(p, lo + 5.0, 0));
  CHECK(m(p, lo, 0) < m(p, lo - 5.0, 0));
  CHECK(m(p, hi, 0) < m(p, hi + 5.0, 0));
  CHECK(m(p, hi, 0) < m(p, hi - 5.0, 0));
}

TEST_CASE("fits of simulated traces") {
  SUBCASE("m-p oscillation at the dressed splitting") {
    const auto p = SystemParams::nv_defaults(from_khz(581.0), 0.0, from_khz(150.0));
    SimConfig cfg;
    cfg.n_shots = 1;
    std::vector<double> taus = grid(0.0, 30.0, 0.05);
    const auto trace = simulate_ramsey(RamseyKind::dressed_mp, taus, p, cfg);
    ModelFunction m = model_ramsey_mp(p.a_par(), trace.metadata["p0_undressed"].get<double>());
    const auto d = FitData::from_trace(trace);
    m.seed(d);
    const auto fit = nlls_fit(m, d);
    const double w = std::hypot(fit.value("omega"), p.a_par());
    CHECK(to_khz(w) == doctest::Approx(600.06).epsilon(1.0 / 600.0));
  }
  SUBCASE("undressed hyperfine splitting with short pulses") {
    // Finite pi/2 pulses give the two 13C branches opposite phase offsets
    // that the single-phase model cannot absorb; near-ideal pulses isolate
    // the frequency round trip.
    const auto p = SystemParams::nv_defaults(0.0, 0.0, from_khz(145.0));
    SimConfig cfg;
    cfg.n_shots = 1;
    RamseyOptions opts;
    opts.omega_rot = from_khz(250.0);
    opts.omega_mag = from_khz(5000.0);
    const auto trace = simulate_ramsey(RamseyKind::undressed_0m1, grid(0.0, 30.0, 0.05), p, cfg, opts);
    ModelFunction m = model_undressed_ramsey(opts.omega_rot);
    const auto d = FitData::from_trace(trace);
    m.seed(d);
    const auto fit = nlls_fit(m, d);
    CHECK(std::abs(to_khz(fit.value("a_par")) - 145.0) < 1.0);
  }
}

TEST_CASE("fit report") {
  auto c = cases()[2];
  const auto fit = nlls_fit(c.model, c.data);
  const auto text = format_fit_report(fit);
  CHECK(text.find("model: ramsey_mp") != std::string::npos);
  CHECK(text.find("status: converged") != std::string::npos);
  CHECK(text.find("omega") != std::string::npos);
  CHECK(text.find("kHz") != std::string::npos);
  CHECK(text.find("rss:") != std::string::npos);
}
