#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "cdd/fitting.hpp"

namespace cdd {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

ParamSpec scalar(std::string name, double initial, double lower = -kInf, double upper = kInf) {
  return {std::move(name), ParamKind::scalar, initial, lower, upper, false};
}
ParamSpec time_like(std::string name, double initial, double lower = 0.0) {
  return {std::move(name), ParamKind::abscissa, initial, lower, kInf, false};
}
ParamSpec rate(std::string name, double initial, double lower = -kInf) {
  return {std::move(name), ParamKind::inverse_abscissa, initial, lower, kInf, false};
}
ParamSpec frozen(ParamSpec p) {
  p.frozen = true;
  return p;
}

struct Peak {
  double omega;  ///< angular, per abscissa unit
  double magnitude;
};

// Local maxima of the zero-padded spectrum of channel 0, strongest first.
std::vector<Peak> spectral_peaks(const FitData& data) {
  Trace t;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.channel_of(i) != 0) continue;
    t.abscissa.push_back(data.x[i]);
    t.mean_p0.push_back(data.y[i]);
  }
  Spectrum s;
  try {
    s = fourier_magnitude(t, 8);
  } catch (const std::invalid_argument&) {
    return {};
  }
  std::vector<Peak> peaks;
  for (std::size_t k = 2; k + 1 < s.magnitude.size(); ++k) {
    const double m0 = s.magnitude[k - 1], m1 = s.magnitude[k], m2 = s.magnitude[k + 1];
    if (!(m1 > m0 && m1 >= m2)) continue;
    const double denom = m0 - 2.0 * m1 + m2;
    const double shift = denom != 0.0 ? 0.5 * (m0 - m2) / denom : 0.0;
    const double df = s.frequency_khz[1] - s.frequency_khz[0];
    // frequency_khz is cycles per 1e-3 abscissa units
    peaks.push_back({kTwoPi * (s.frequency_khz[k] + shift * df) * 1e-3, m1});
  }
  std::sort(peaks.begin(), peaks.end(),
            [](const Peak& a, const Peak& b) { return a.magnitude > b.magnitude; });
  return peaks;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Running maximum of |y - c| over a short window.
std::vector<double> smoothed_magnitude(const FitData& data, double c) {
  const std::size_t n = data.size();
  const std::size_t w = std::max<std::size_t>(3, n / 40);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::size_t j = i; j < std::min(n, i + w); ++j) m = std::max(m, std::abs(data.y[j] - c));
    out[i] = m;
  }
  return out;
}

// First abscissa where the smoothed envelope drops below `fraction` of its start.
double envelope_crossing(const FitData& data, double c, double fraction) {
  if (data.size() == 0) return 1.0;
  const auto env = smoothed_magnitude(data, c);
  const double start = env.front();
  for (std::size_t i = 0; i < env.size(); ++i)
    if (env[i] < fraction * start) return std::max(data.x[i], data.x.back() * 1e-3);
  return data.x.back();
}

// Phase of the component at `omega` relative to cos(omega x).
double phase_at(const FitData& data, double c, double omega) {
  double sc = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    sc += (data.y[i] - c) * std::cos(omega * data.x[i]);
    ss += (data.y[i] - c) * std::sin(omega * data.x[i]);
  }
  return std::atan2(-ss, sc);
}

void set(std::vector<ParamSpec>& params, std::string_view name, double value) {
  for (auto& p : params)
    if (p.name == name && !p.frozen && std::isfinite(value)) p.initial = value;
}

double get(const std::vector<ParamSpec>& params, std::string_view name) {
  for (const auto& p : params)
    if (p.name == name) return p.initial;
  return 0.0;
}

double rss_at(const std::vector<ParamSpec>& ps, const FitData& d, const ModelFunction::Evaluator& f) {
  std::vector<double> p;
  for (const auto& q : ps) p.push_back(q.initial);
  double rss = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r = d.y[i] - f(p, d.x[i], d.channel_of(i));
    rss += r * r;
  }
  return rss;
}

std::vector<double> log_candidates(double lo, double hi, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
  return out;
}

// Coarse grid search over up to two parameters, keeping the lowest-RSS point.
void scan_seed(std::vector<ParamSpec>& ps, const FitData& d, const ModelFunction::Evaluator& f,
               std::string_view name_a, const std::vector<double>& cand_a,
               std::string_view name_b = {}, const std::vector<double>& cand_b = {1.0}) {
  auto find = [&](std::string_view n) -> ParamSpec* {
    for (auto& q : ps)
      if (q.name == n && !q.frozen) return &q;
    return nullptr;
  };
  ParamSpec* a = find(name_a);
  ParamSpec* b = name_b.empty() ? nullptr : find(name_b);
  if (!a) return;
  const std::vector<double> bs = b ? cand_b : std::vector<double>{0.0};
  double best = kInf, best_a = a->initial, best_b = b ? b->initial : 0.0;
  for (double va : cand_a) {
    for (double vb : bs) {
      a->initial = va;
      if (b) b->initial = vb;
      const double r = rss_at(ps, d, f);
      if (r < best) {
        best = r;
        best_a = va;
        best_b = vb;
      }
    }
  }
  a->initial = best_a;
  if (b) b->initial = best_b;
}

std::vector<double> envelope_candidates(const FitData& d) {
  const double span = d.x.empty() ? 1.0 : std::max(d.x.back() - d.x.front(), 1e-12);
  return log_candidates(span / 30.0, 3.0 * span, 25);
}

double lorentzian(double u, double fwhm) {
  const double z = 2.0 * u / fwhm;
  return 1.0 / (z * z + 1.0);
}

}  // namespace

std::vector<std::string> model_names() {
  return {"undressed_ramsey", "ramsey_0p", "ramsey_mp", "max_protection", "spectrum_joint"};
}

ModelFunction model_undressed_ramsey(double omega_rot) {
  ModelFunction m;
  m.id = "undressed_ramsey";
  m.params = {scalar("c", 0.5),       scalar("a", 1.0, 0.0),          time_like("t2", 5.0, 1e-6),
              rate("delta_mag", 0.0), rate("a_par", kTwoPi * 0.145, 0.0),
              frozen(rate("omega_rot", omega_rot))};
  m.evaluator = [](std::span<const double> p, double tau, int) {
    const double env = std::exp(-(tau * tau) / (p[2] * p[2]));
    const double w = p[5] + p[3];
    return p[0] - 0.25 * p[1] * env *
                      (std::cos((w + 0.5 * p[4]) * tau) + std::cos((w - 0.5 * p[4]) * tau));
  };
  const auto eval = m.evaluator;
  m.gradient = [](std::span<const double> p, double tau, int, std::span<double> g) {
    const double env = std::exp(-(tau * tau) / (p[2] * p[2]));
    const double w = p[5] + p[3];
    const double cp = std::cos((w + 0.5 * p[4]) * tau), cm = std::cos((w - 0.5 * p[4]) * tau);
    const double sp = std::sin((w + 0.5 * p[4]) * tau), sm = std::sin((w - 0.5 * p[4]) * tau);
    g[0] = 1.0;
    g[1] = -0.25 * env * (cp + cm);
    g[2] = -0.25 * p[1] * (cp + cm) * env * 2.0 * tau * tau / (p[2] * p[2] * p[2]);
    g[3] = 0.25 * p[1] * env * tau * (sp + sm);
    g[4] = 0.25 * p[1] * env * 0.5 * tau * (sp - sm);
    g[5] = g[3];
  };
  m.seeder = [eval](std::vector<ParamSpec>& ps, const FitData& d) {
    const double c = mean_of(d.y);
    set(ps, "c", c);
    const auto env = smoothed_magnitude(d, c);
    if (!env.empty()) set(ps, "a", 2.0 * env.front());
    set(ps, "t2", envelope_crossing(d, c, std::exp(-1.0)));
    const auto peaks = spectral_peaks(d);
    const double rot = get(ps, "omega_rot");
    if (peaks.size() >= 2) {
      set(ps, "delta_mag", 0.5 * (peaks[0].omega + peaks[1].omega) - rot);
      set(ps, "a_par", std::abs(peaks[0].omega - peaks[1].omega));
    } else if (peaks.size() == 1) {
      set(ps, "delta_mag", peaks[0].omega - rot);
    }
    // Broadened lines pull the peak estimate of A apart; refine it together
    // with the envelope, whose beat nodes defeat the 1/e crossing.
    std::vector<double> a_cand;
    const double a0 = get(ps, "a_par");
    for (int i = 0; i <= 40; ++i) a_cand.push_back(a0 * (0.5 + i / 40.0));
    scan_seed(ps, d, eval, "t2", envelope_candidates(d), "a_par", a_cand);
  };
  return m;
}

ModelFunction model_ramsey_0p(double a_par, double omega_rot) {
  ModelFunction m;
  m.id = "ramsey_0p";
  m.params = {scalar("c", 0.5),
              scalar("a_p", 1.0),
              scalar("a_m", 1.0),
              scalar("phi", 0.0),
              rate("omega", kTwoPi * 0.348, 0.0),
              rate("delta_mag", 0.0),
              time_like("t2", 10.0, 1e-6),
              frozen(rate("a_par", a_par)),
              frozen(rate("omega_rot", omega_rot))};
  m.evaluator = [](std::span<const double> p, double tau, int) {
    const double env = 0.25 * std::exp(-(tau * tau) / (p[6] * p[6]));
    const double w = p[5] + p[8];
    const double split = std::sqrt(p[4] * p[4] + p[7] * p[7]);
    return p[0] + env * (p[1] * std::cos(w * tau + p[3]) + p[2] * std::cos((w + split) * tau + p[3]));
  };
  const auto eval_0p = m.evaluator;
  m.seeder = [eval_0p](std::vector<ParamSpec>& ps, const FitData& d) {
    const double c = mean_of(d.y);
    set(ps, "c", c);
    set(ps, "t2", envelope_crossing(d, c, std::exp(-1.0)));
    const auto env = smoothed_magnitude(d, c);
    const double rot = get(ps, "omega_rot");
    const double a_par = get(ps, "a_par");
    auto peaks = spectral_peaks(d);
    if (peaks.size() > 4) peaks.resize(4);
    if (peaks.empty()) return;
    // p branch: the strong line nearest omega_rot; m branch: the strong line above it
    auto p_it = std::min_element(peaks.begin(), peaks.end(), [rot](const Peak& a, const Peak& b) {
      return std::abs(a.omega - rot) < std::abs(b.omega - rot);
    });
    const Peak p_line = *p_it;
    set(ps, "delta_mag", p_line.omega - rot);
    set(ps, "phi", phase_at(d, c, p_line.omega));
    double total = p_line.magnitude;
    for (const auto& pk : peaks) {
      if (pk.omega <= p_line.omega + 1e-9) continue;
      const double split = pk.omega - p_line.omega;
      set(ps, "omega", std::sqrt(std::max(split * split - a_par * a_par, 0.0)));
      if (!env.empty()) {
        const double amp = 4.0 * env.front();
        total += pk.magnitude;
        set(ps, "a_p", amp * p_line.magnitude / total);
        set(ps, "a_m", amp * pk.magnitude / total);
      }
      break;
    }
    scan_seed(ps, d, eval_0p, "t2", envelope_candidates(d));
  };
  return m;
}

ModelFunction model_ramsey_mp(double a_par, double p0_undressed) {
  ModelFunction m;
  m.id = "ramsey_mp";
  m.params = {scalar("c", 0.5),
              time_like("t2", 10.0, 1e-6),
              rate("omega", kTwoPi * 0.581, 0.0),
              scalar("phi", 0.0),
              frozen(rate("a_par", a_par)),
              frozen(scalar("p0_ud", p0_undressed))};
  m.evaluator = [](std::span<const double> p, double tau, int) {
    const double w = std::sqrt(p[4] * p[4] + p[2] * p[2]);
    return p[0] + 0.5 * p[5] * std::exp(-(tau * tau) / (p[1] * p[1])) * std::cos(w * tau + p[3]);
  };
  const auto eval_mp = m.evaluator;
  m.gradient = [](std::span<const double> p, double tau, int, std::span<double> g) {
    const double w = std::sqrt(p[4] * p[4] + p[2] * p[2]);
    const double env = std::exp(-(tau * tau) / (p[1] * p[1]));
    const double c = std::cos(w * tau + p[3]), s = std::sin(w * tau + p[3]);
    const double dw = w > 0.0 ? 1.0 / w : 0.0;
    g[0] = 1.0;
    g[1] = 0.5 * p[5] * c * env * 2.0 * tau * tau / (p[1] * p[1] * p[1]);
    g[2] = -0.5 * p[5] * env * s * tau * p[2] * dw;
    g[3] = -0.5 * p[5] * env * s;
    g[4] = -0.5 * p[5] * env * s * tau * p[4] * dw;
    g[5] = 0.5 * env * c;
  };
  m.seeder = [eval_mp](std::vector<ParamSpec>& ps, const FitData& d) {
    const double c = mean_of(d.y);
    set(ps, "c", c);
    set(ps, "t2", envelope_crossing(d, c, std::exp(-1.0)));
    const auto peaks = spectral_peaks(d);
    if (peaks.empty()) return;
    const double a_par = get(ps, "a_par");
    const double w = peaks[0].omega;
    set(ps, "omega", std::sqrt(std::max(w * w - a_par * a_par, 0.0)));
    set(ps, "phi", phase_at(d, c, w));
    scan_seed(ps, d, eval_mp, "t2", envelope_candidates(d));
  };
  return m;
}

ModelFunction model_max_protection(double a_par, double p0_undressed, double gamma_sigma_b) {
  ModelFunction m;
  m.id = "max_protection";
  m.params = {rate("omega", kTwoPi * 0.4557, 1e-9),
              scalar("phi", 0.0),
              scalar("c", 0.5),
              time_like("t2_up", 4.0, 1e-6),
              frozen(scalar("p0_ud", p0_undressed)),
              frozen(rate("gamma_sigma_b", gamma_sigma_b)),
              frozen(rate("a_par", a_par))};
  m.evaluator = [](std::span<const double> p, double tau, int) {
    const double q = 2.0 * p[5];
    const double q4 = q * q * q * q;
    const double h = std::sqrt(p[0] / std::sqrt(p[0] * p[0] + q4 * tau * tau));
    const double up = std::sqrt(p[0] * p[0] + 4.0 * p[6] * p[6]);
    return p[2] + 0.25 * p[4] *
                      (h * std::cos(p[0] * tau + p[1]) +
                       std::exp(-(tau * tau) / (p[3] * p[3])) * std::cos(up * tau + p[1]));
  };
  const auto eval_max = m.evaluator;
  m.seeder = [eval_max](std::vector<ParamSpec>& ps, const FitData& d) {
    const double c = mean_of(d.y);
    set(ps, "c", c);
    // Two equal-weight branches: the fast one has decayed to 1/e when the
    // total envelope reaches (1 + 1/e) / 2 of its start.
    set(ps, "t2_up", envelope_crossing(d, c, 0.5 * (1.0 + std::exp(-1.0))));
    // The protected branch outlives the other and dominates the spectrum.
    const auto peaks = spectral_peaks(d);
    if (peaks.empty()) return;
    const double w = peaks[0].omega;
    set(ps, "omega", w);
    set(ps, "phi", phase_at(d, c, w));
    scan_seed(ps, d, eval_max, "t2_up", envelope_candidates(d));
  };
  return m;
}

ModelFunction model_spectrum_joint() {
  ModelFunction m;
  m.id = "spectrum_joint";
  m.params = {scalar("c_d", 1.0),           scalar("a_d1", 0.5),      scalar("a_d2", 0.5),
              time_like("gamma_d", 80.0, 1e-9), time_like("delta", 0.0, -kInf),
              time_like("omega", 470.0),    scalar("c_ud", 1.0),      scalar("a_ud", 1.0),
              time_like("gamma_ud", 80.0, 1e-9), time_like("w0", 0.0, -kInf)};
  m.evaluator = [](std::span<const double> p, double x, int channel) {
    if (channel == 1) return p[6] - p[7] * lorentzian(x - p[9], p[8]);
    const double r = std::sqrt(p[4] * p[4] + p[5] * p[5]);
    const double mid = p[9] + 0.5 * p[4];
    return p[0] - p[1] * lorentzian(x - mid - 0.5 * r, p[3]) -
           p[2] * lorentzian(x - mid + 0.5 * r, p[3]);
  };
  m.gradient = [](std::span<const double> p, double x, int channel, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    auto dl_du = [](double u, double f) {
      const double l = lorentzian(u, f);
      return -l * l * 8.0 * u / (f * f);
    };
    auto dl_df = [](double u, double f) {
      const double l = lorentzian(u, f);
      return l * l * 8.0 * u * u / (f * f * f);
    };
    if (channel == 1) {
      const double u = x - p[9];
      g[6] = 1.0;
      g[7] = -lorentzian(u, p[8]);
      g[8] = -p[7] * dl_df(u, p[8]);
      g[9] = p[7] * dl_du(u, p[8]);
      return;
    }
    const double r = std::sqrt(p[4] * p[4] + p[5] * p[5]);
    const double mid = p[9] + 0.5 * p[4];
    const double u1 = x - mid - 0.5 * r, u2 = x - mid + 0.5 * r;
    const double dr_dd = r > 0.0 ? p[4] / r : 0.0, dr_dw = r > 0.0 ? p[5] / r : 0.0;
    // d f / d center_i = a_i dL/du(u_i)
    const double f1 = p[1] * dl_du(u1, p[3]), f2 = p[2] * dl_du(u2, p[3]);
    g[0] = 1.0;
    g[1] = -lorentzian(u1, p[3]);
    g[2] = -lorentzian(u2, p[3]);
    g[3] = -p[1] * dl_df(u1, p[3]) - p[2] * dl_df(u2, p[3]);
    g[4] = f1 * (0.5 + 0.5 * dr_dd) + f2 * (0.5 - 0.5 * dr_dd);
    g[5] = f1 * 0.5 * dr_dw - f2 * 0.5 * dr_dw;
    g[9] = f1 + f2;
  };
  m.seeder = [](std::vector<ParamSpec>& ps, const FitData& d) {
    std::vector<double> xd, yd, xu, yu;
    for (std::size_t i = 0; i < d.size(); ++i) {
      (d.channel_of(i) == 0 ? xd : xu).push_back(d.x[i]);
      (d.channel_of(i) == 0 ? yd : yu).push_back(d.y[i]);
    }
    if (xd.size() < 3 || xu.size() < 3) return;
    // Undressed dip: deepest point, background from the maximum, width at half depth.
    const auto umin = std::min_element(yu.begin(), yu.end()) - yu.begin();
    const double cu = *std::max_element(yu.begin(), yu.end());
    const double depth = cu - yu[static_cast<std::size_t>(umin)];
    const double w0 = xu[static_cast<std::size_t>(umin)];
    double fwhm = 0.0;
    for (std::size_t i = 0; i < xu.size(); ++i)
      if (cu - yu[i] > 0.5 * depth) fwhm = std::max(fwhm, 2.0 * std::abs(xu[i] - w0));
    set(ps, "c_ud", cu);
    set(ps, "a_ud", depth);
    set(ps, "w0", w0);
    if (fwhm > 0.0) {
      set(ps, "gamma_ud", fwhm);
      set(ps, "gamma_d", fwhm);
    }
    // Dressed dips: the two deepest local minima.
    const double cd = *std::max_element(yd.begin(), yd.end());
    std::vector<std::pair<double, double>> minima;
    for (std::size_t i = 1; i + 1 < xd.size(); ++i)
      if (yd[i] < yd[i - 1] && yd[i] <= yd[i + 1]) minima.push_back({yd[i], xd[i]});
    std::sort(minima.begin(), minima.end());
    set(ps, "c_d", cd);
    if (minima.size() < 2) return;
    const double lo = std::min(minima[0].second, minima[1].second);
    const double hi = std::max(minima[0].second, minima[1].second);
    const double delta = lo + hi - 2.0 * w0;
    const double split = hi - lo;
    set(ps, "delta", delta);
    set(ps, "omega", std::sqrt(std::max(split * split - delta * delta, 0.0)));
    set(ps, "a_d1", cd - (minima[0].second > minima[1].second ? minima[0].first : minima[1].first));
    set(ps, "a_d2", cd - (minima[0].second > minima[1].second ? minima[1].first : minima[0].first));
  };
  return m;
}

}  // namespace cdd
