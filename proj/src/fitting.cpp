#include "cdd/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace cdd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::size_t> free_indices(const ModelFunction& model) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < model.params.size(); ++k)
    if (!model.params[k].frozen) idx.push_back(k);
  return idx;
}

double weight(const FitData& data, std::size_t i) {
  return data.sigma.empty() ? 1.0 : data.sigma[i];
}

Eigen::VectorXd residuals(const ModelFunction& model, std::span<const double> p,
                          const FitData& data) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i)
    r(static_cast<Eigen::Index>(i)) =
        (data.y[i] - model(p, data.x[i], data.channel_of(i))) / weight(data, i);
  return r;
}

void clamp_to_bounds(const ModelFunction& model, std::vector<double>& p) {
  for (std::size_t k = 0; k < p.size(); ++k)
    p[k] = std::clamp(p[k], model.params[k].lower, model.params[k].upper);
}

double scale_factor(ParamKind kind, double scale) {
  switch (kind) {
    case ParamKind::abscissa: return scale;
    case ParamKind::inverse_abscissa: return 1.0 / scale;
    case ParamKind::scalar: return 1.0;
  }
  return 1.0;
}

Eigen::MatrixXd jacobian(const ModelFunction& model, std::span<const double> p,
                         const FitData& data, const FitOptions& options) {
  if (options.analytic_jacobian && model.gradient) {
    Eigen::MatrixXd j = analytic_jacobian(model, p, data);
    for (std::size_t i = 0; i < data.size(); ++i) j.row(static_cast<Eigen::Index>(i)) /= weight(data, i);
    return j;
  }
  Eigen::MatrixXd j = finite_difference_jacobian(model, p, data, options.fd_step);
  for (std::size_t i = 0; i < data.size(); ++i) j.row(static_cast<Eigen::Index>(i)) /= weight(data, i);
  return j;
}

}  // namespace

void FitData::validate() const {
  if (y.size() != x.size()) throw std::invalid_argument("x and y differ in length");
  if (!sigma.empty() && sigma.size() != x.size())
    throw std::invalid_argument("sigma differs in length from x");
  if (!channel.empty() && channel.size() != x.size())
    throw std::invalid_argument("channel differs in length from x");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw std::invalid_argument("non-finite data point at index " + std::to_string(i));
    if (!sigma.empty() && !(sigma[i] > 0.0))
      throw std::invalid_argument("sigma must be > 0 at index " + std::to_string(i));
  }
}

FitData FitData::from_trace(const Trace& trace, bool weighted) {
  FitData d;
  d.x = trace.abscissa;
  d.y = trace.mean_p0;
  if (weighted) d.sigma = trace.std_error;
  const auto it = trace.metadata.find("abscissa");
  if (it != trace.metadata.end() && it->is_string())
    d.abscissa_unit = it->get<std::string>() == "delta_mag_khz" ? "kHz" : "us";
  return d;
}

FitData FitData::joint(const Trace& dressed, const Trace& undressed, bool weighted) {
  FitData d;
  d.abscissa_unit = "kHz";
  for (int ch = 0; ch < 2; ++ch) {
    const Trace& t = ch == 0 ? dressed : undressed;
    d.x.insert(d.x.end(), t.abscissa.begin(), t.abscissa.end());
    d.y.insert(d.y.end(), t.mean_p0.begin(), t.mean_p0.end());
    if (weighted) d.sigma.insert(d.sigma.end(), t.std_error.begin(), t.std_error.end());
    d.channel.insert(d.channel.end(), t.size(), ch);
  }
  return d;
}

std::size_t ModelFunction::index(std::string_view name) const {
  for (std::size_t k = 0; k < params.size(); ++k)
    if (params[k].name == name) return k;
  throw std::out_of_range("model " + id + " has no parameter " + std::string(name));
}

void ModelFunction::fix(std::string_view name, double value) {
  ParamSpec& p = param(name);
  p.initial = value;
  p.frozen = true;
}

std::vector<double> ModelFunction::initial_values() const {
  std::vector<double> v;
  v.reserve(params.size());
  for (const auto& p : params) v.push_back(p.initial);
  return v;
}

std::size_t ModelFunction::free_count() const {
  return static_cast<std::size_t>(
      std::count_if(params.begin(), params.end(), [](const ParamSpec& p) { return !p.frozen; }));
}

std::vector<double> ModelFunction::evaluate(std::span<const double> p, const FitData& data) const {
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = evaluator(p, data.x[i], data.channel_of(i));
  return out;
}

void ModelFunction::seed(const FitData& data) {
  if (!seeder) return;
  std::vector<ParamSpec> seeded = params;
  seeder(seeded, data);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].frozen) continue;
    if (std::isfinite(seeded[k].initial))
      params[k].initial = std::clamp(seeded[k].initial, params[k].lower, params[k].upper);
  }
}

std::vector<double> ModelFunction::rescale_values(std::span<const double> p, double scale) const {
  std::vector<double> out(p.begin(), p.end());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= scale_factor(params[k].kind, scale);
  return out;
}

ModelFunction ModelFunction::rescaled(double scale) const {
  if (!(scale > 0.0)) throw std::invalid_argument("scale must be > 0");
  ModelFunction m;
  m.id = id;
  m.params = params;
  for (auto& p : m.params) {
    const double f = scale_factor(p.kind, scale);
    p.initial *= f;
    p.lower *= f;
    p.upper *= f;
  }
  auto base = *this;
  auto to_base = [base, scale](std::span<const double> p) {
    std::vector<double> q(p.begin(), p.end());
    for (std::size_t k = 0; k < q.size(); ++k) q[k] /= scale_factor(base.params[k].kind, scale);
    return q;
  };
  m.evaluator = [base, scale, to_base](std::span<const double> p, double x, int ch) {
    return base.evaluator(to_base(p), x / scale, ch);
  };
  if (gradient) {
    m.gradient = [base, scale, to_base](std::span<const double> p, double x, int ch,
                                        std::span<double> out) {
      base.gradient(to_base(p), x / scale, ch, out);
      for (std::size_t k = 0; k < out.size(); ++k)
        out[k] /= scale_factor(base.params[k].kind, scale);
    };
  }
  return m;
}

std::string_view to_string(FitStatus status) {
  switch (status) {
    case FitStatus::converged: return "converged";
    case FitStatus::max_iterations: return "max_iterations";
    case FitStatus::degenerate: return "degenerate";
  }
  return "?";
}

std::size_t FitOutcome::index(std::string_view name) const {
  for (std::size_t k = 0; k < names.size(); ++k)
    if (names[k] == name) return k;
  throw std::out_of_range("fit outcome has no parameter " + std::string(name));
}

double FitOutcome::value(std::string_view name) const { return values[index(name)]; }

double FitOutcome::half_width(std::string_view name) const {
  const std::size_t k = index(name);
  return 0.5 * (ci_high[k] - ci_low[k]);
}

Eigen::MatrixXd finite_difference_jacobian(const ModelFunction& model, std::span<const double> p,
                                           const FitData& data, double rel_step) {
  const auto idx = free_indices(model);
  Eigen::MatrixXd j(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(idx.size()));
  std::vector<double> q(p.begin(), p.end());
  for (std::size_t c = 0; c < idx.size(); ++c) {
    const std::size_t k = idx[c];
    const ParamSpec& spec = model.params[k];
    const double h = rel_step * (p[k] != 0.0 ? std::abs(p[k]) : 1.0);
    double hi = p[k] + h, lo = p[k] - h;
    if (hi > spec.upper) hi = p[k];
    if (lo < spec.lower) lo = p[k];
    q[k] = hi;
    const auto f_hi = model.evaluate(q, data);
    q[k] = lo;
    const auto f_lo = model.evaluate(q, data);
    q[k] = p[k];
    for (std::size_t i = 0; i < data.size(); ++i)
      j(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = (f_hi[i] - f_lo[i]) / (hi - lo);
  }
  return j;
}

Eigen::MatrixXd analytic_jacobian(const ModelFunction& model, std::span<const double> p,
                                  const FitData& data) {
  if (!model.gradient) throw std::logic_error("model " + model.id + " has no analytic gradient");
  const auto idx = free_indices(model);
  Eigen::MatrixXd j(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(idx.size()));
  std::vector<double> g(model.params.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    model.gradient(p, data.x[i], data.channel_of(i), g);
    for (std::size_t c = 0; c < idx.size(); ++c)
      j(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = g[idx[c]];
  }
  return j;
}

FitOutcome nlls_fit(const ModelFunction& model, const FitData& data, const FitOptions& options) {
  data.validate();
  const auto idx = free_indices(model);
  const std::size_t n_free = idx.size();
  if (n_free == 0) throw std::invalid_argument("model has no free parameters");
  if (data.size() < std::max<std::size_t>(2 * n_free, 8))
    throw std::invalid_argument("need at least max(2 n_free, 8) points, got " +
                                std::to_string(data.size()));
  for (const auto& spec : model.params)
    if (!(spec.initial >= spec.lower && spec.initial <= spec.upper))
      throw std::invalid_argument("initial value of " + spec.name + " lies outside its bounds");

  std::vector<double> p = model.initial_values();
  Eigen::VectorXd r = residuals(model, p, data);
  double rss = r.squaredNorm();
  if (!std::isfinite(rss)) throw std::invalid_argument("model is not finite at the initial guess");

  FitOutcome out;
  out.model_id = model.id;
  out.n_points = data.size();
  out.dof = data.size() - n_free;
  out.confidence = options.confidence;
  out.abscissa_unit = data.abscissa_unit;
  out.status = FitStatus::max_iterations;

  auto free_norm = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t k : idx) s += v[k] * v[k];
    return std::sqrt(s);
  };

  double lambda = 1e-3;
  int iter = 0;
  bool done = false;
  while (!done && iter < options.max_iterations) {
    ++iter;
    if (rss == 0.0) {
      out.status = FitStatus::converged;
      break;
    }
    const Eigen::MatrixXd j = jacobian(model, p, data, options);
    const Eigen::MatrixXd a = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r;
    const double diag_floor = 1e-12 * std::max(a.diagonal().maxCoeff(), 1e-300);

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = a;
      for (Eigen::Index k = 0; k < damped.rows(); ++k)
        damped(k, k) += lambda * std::max(a(k, k), diag_floor);
      const Eigen::VectorXd delta = damped.ldlt().solve(g);

      std::vector<double> trial = p;
      for (std::size_t c = 0; c < n_free; ++c) trial[idx[c]] += delta(static_cast<Eigen::Index>(c));
      clamp_to_bounds(model, trial);
      double step_sq = 0.0;
      for (std::size_t k : idx) step_sq += (trial[k] - p[k]) * (trial[k] - p[k]);
      const double step = std::sqrt(step_sq);
      const bool tiny_step = step <= options.step_tolerance * (free_norm(p) + options.step_tolerance);

      const Eigen::VectorXd r_trial = residuals(model, trial, data);
      const double rss_trial = r_trial.squaredNorm();
      if (std::isfinite(rss_trial) && rss_trial < rss) {
        const double improvement = (rss - rss_trial) / rss;
        p = std::move(trial);
        r = r_trial;
        rss = rss_trial;
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
        if (improvement < options.rss_tolerance || tiny_step) {
          out.status = FitStatus::converged;
          done = true;
        }
      } else {
        lambda *= 10.0;
        if (tiny_step || lambda > 1e20) {
          // No downhill step exists at this precision.
          out.status = FitStatus::converged;
          done = true;
          break;
        }
      }
    }
  }
  out.iterations = iter;

  // Linearized covariance on column-normalized normal equations.
  const Eigen::MatrixXd j = jacobian(model, p, data, options);
  Eigen::VectorXd col = j.colwise().norm().transpose();
  Eigen::MatrixXd jn = j;
  for (Eigen::Index c = 0; c < jn.cols(); ++c)
    if (col(c) > 0.0) jn.col(c) /= col(c);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jn.transpose() * jn);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double ev_max = std::max(ev.maxCoeff(), 0.0);
  const double cutoff = 1e-12 * ev_max;

  Eigen::MatrixXd pinv = Eigen::MatrixXd::Zero(jn.cols(), jn.cols());
  std::vector<bool> unresolved(n_free, false);
  for (Eigen::Index m = 0; m < ev.size(); ++m) {
    const Eigen::VectorXd v = eig.eigenvectors().col(m);
    if (ev(m) > cutoff && ev_max > 0.0) {
      pinv += v * v.transpose() / ev(m);
    } else {
      for (Eigen::Index c = 0; c < v.size(); ++c)
        if (std::abs(v(c)) > 1e-3) unresolved[static_cast<std::size_t>(c)] = true;
    }
  }
  // A parameter whose relative change barely moves the model (for example a
  // decay time under a vanishing amplitude) is unresolved even when its
  // normalized column is well conditioned.
  double signal = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    signal += std::pow(model(p, data.x[i], data.channel_of(i)) / weight(data, i), 2);
  signal = std::sqrt(signal);
  for (Eigen::Index c = 0; c < col.size(); ++c) {
    const std::size_t k = idx[static_cast<std::size_t>(c)];
    double size = std::max(std::abs(p[k]), std::abs(model.params[k].initial));
    if (model.params[k].kind == ParamKind::scalar) size = std::max(size, 1.0);
    if (col(c) == 0.0 || (size > 0.0 && col(c) * size < 1e-9 * signal))
      unresolved[static_cast<std::size_t>(c)] = true;
  }

  const double s2 = out.dof > 0 ? rss / static_cast<double>(out.dof) : 0.0;
  out.covariance = Eigen::MatrixXd::Zero(jn.cols(), jn.cols());
  for (Eigen::Index a = 0; a < jn.cols(); ++a)
    for (Eigen::Index b = 0; b < jn.cols(); ++b)
      if (col(a) > 0.0 && col(b) > 0.0) out.covariance(a, b) = s2 * pinv(a, b) / (col(a) * col(b));

  const boost::math::students_t dist(static_cast<double>(std::max<std::size_t>(out.dof, 1)));
  const double t = boost::math::quantile(dist, 0.5 + 0.5 * options.confidence);

  bool rank_deficient = false;
  std::size_t c = 0;
  for (std::size_t k = 0; k < model.params.size(); ++k) {
    const ParamSpec& spec = model.params[k];
    out.names.push_back(spec.name);
    out.kinds.push_back(spec.kind);
    out.free.push_back(!spec.frozen);
    out.values.push_back(p[k]);
    if (spec.frozen) {
      out.ci_low.push_back(p[k]);
      out.ci_high.push_back(p[k]);
      continue;
    }
    double half = t * std::sqrt(std::max(out.covariance(static_cast<Eigen::Index>(c),
                                                        static_cast<Eigen::Index>(c)),
                                         0.0));
    if (unresolved[c]) {
      half = kInf;
      rank_deficient = true;
      out.warnings.push_back(spec.name + " is not identifiable from these data");
    } else if (spec.lower >= 0.0 && p[k] - half <= 0.0) {
      out.warnings.push_back(spec.name + " is not resolved from zero");
    }
    out.ci_low.push_back(p[k] - half);
    out.ci_high.push_back(p[k] + half);
    ++c;
  }
  if (rank_deficient) out.status = FitStatus::degenerate;
  out.rss = rss;
  return out;
}

std::string format_fit_report(const FitOutcome& o) {
  std::ostringstream s;
  s << "model: " << o.model_id << "\n";
  s << "status: " << to_string(o.status) << "\n";
  s << "iterations: " << o.iterations << "\n";
  s << "points: " << o.n_points << "\n";
  s << "dof: " << o.dof << "\n";
  s << std::setprecision(10) << "rss: " << o.rss << "\n";
  s << "confidence: " << o.confidence << "\n";
  for (const auto& w : o.warnings) s << "warning: " << w << "\n";
  s << std::left << std::setw(14) << "name" << std::setw(20) << "value" << std::setw(20)
    << "ci_low" << std::setw(20) << "ci_high" << std::setw(8) << "unit"
    << "fit\n";
  const bool tau_axis = o.abscissa_unit == "us";
  for (std::size_t k = 0; k < o.names.size(); ++k) {
    double scale = 1.0;
    std::string unit = "1";
    switch (o.kinds[k]) {
      case ParamKind::scalar: unit = o.names[k] == "phi" ? "rad" : "1"; break;
      case ParamKind::abscissa: unit = o.abscissa_unit; break;
      case ParamKind::inverse_abscissa:
        if (tau_axis) {
          scale = 1e3 / (2.0 * std::numbers::pi);
          unit = "kHz";
        } else {
          unit = "rad/" + o.abscissa_unit;
        }
        break;
    }
    s << std::setw(14) << o.names[k] << std::setprecision(12) << std::setw(20)
      << o.values[k] * scale << std::setw(20) << o.ci_low[k] * scale << std::setw(20)
      << o.ci_high[k] * scale << std::setw(8) << unit << (o.free[k] ? "free" : "frozen") << "\n";
  }
  return s.str();
}

}  // namespace cdd
