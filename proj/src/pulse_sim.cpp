#include "cdd/pulse_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <mutex>
#include <optional>
#include <thread>

#include <fftw3.h>

#include "cdd/errors.hpp"
#include "cdd/units.hpp"

namespace cdd {

namespace {

constexpr double kPi = std::numbers::pi;

using Matrix3c = Eigen::Matrix<Complex, 3, 3>;
using Vector3c = Eigen::Matrix<Complex, 3, 1>;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::array<int, 3> block_indices(Carbon c) {
  return {basis_index(+1, c), basis_index(0, c), basis_index(-1, c)};
}

void propagate_block(ComplexVector6& psi, const ComplexMatrix6& h, Carbon c, double duration) {
  const auto idx = block_indices(c);
  Matrix3c block;
  Vector3c v;
  for (int r = 0; r < 3; ++r) {
    v(r) = psi(idx[r]);
    for (int k = 0; k < 3; ++k) block(r, k) = h(idx[r], idx[k]);
  }
  Eigen::SelfAdjointEigenSolver<Matrix3c> solver(block);
  const auto& vecs = solver.eigenvectors();
  Vector3c coeff = vecs.adjoint() * v;
  for (int k = 0; k < 3; ++k) coeff(k) *= std::polar(1.0, -solver.eigenvalues()(k) * duration);
  v = vecs * coeff;
  for (int r = 0; r < 3; ++r) psi(idx[r]) = v(r);
}

void validate_segment(const Segment& s, std::size_t i, std::size_t n) {
  std::visit(overloaded{
                 [&](const Reset&) {
                   if (i != 0) return;
                 },
                 [&](const MagneticPulse& p) {
                   if (!(p.duration >= 0.0 && std::isfinite(p.duration)))
                     throw SequenceError(i, "pulse duration must be finite and >= 0");
                   if (!(p.omega_mag >= 0.0 && std::isfinite(p.omega_mag)))
                     throw SequenceError(i, "pulse strength must be finite and >= 0");
                   if (!std::isfinite(p.phase) || !std::isfinite(p.detuning_mag))
                     throw SequenceError(i, "pulse phase and detuning must be finite");
                 },
                 [&](const FreeEvolution& f) {
                   if (!(f.duration >= 0.0 && std::isfinite(f.duration)))
                     throw SequenceError(i, "free evolution duration must be finite and >= 0");
                 },
                 [&](const Readout&) {
                   if (i + 1 != n) throw SequenceError(i, "readout must be the final segment");
                 },
             },
             s);
}

void validate_sequence(const PulseSequence& seq) {
  if (seq.empty()) throw SequenceError(0, "empty sequence");
  if (!std::holds_alternative<Reset>(seq.front()))
    throw SequenceError(0, "sequence must begin with a reset");
  if (!std::holds_alternative<Readout>(seq.back()))
    throw SequenceError(seq.size() - 1, "sequence must end with a readout");
  for (std::size_t i = 0; i < seq.size(); ++i) validate_segment(seq[i], i, seq.size());
}

// Rotates the |0> amplitudes into (sign = +1) or out of (sign = -1) the frame
// of a pulse detuned by `detuning`, at absolute time t.
void apply_frame(ComplexVector6& psi, double detuning, double t, double sign) {
  const Complex phase = std::polar(1.0, -sign * detuning * t);
  for (Carbon c : kCarbons) psi(basis_index(0, c)) *= phase;
}

struct Accumulator {
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double std_error() const {
    return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  }
};

double p_line_midpoint(const SystemParams& p) {
  const DressedLevels levels = dressed_energies(p, {});
  return 0.5 * (levels.energy(DressedLabel::p_up) + levels.energy(DressedLabel::p_down));
}

nlohmann::ordered_json params_json(const SystemParams& p) {
  nlohmann::ordered_json j;
  j["gamma_mhz_per_gauss"] = p.gamma() / units::two_pi * 1e3;
  j["d0_ghz"] = units::to_mhz(p.d0()) * 1e-3;
  j["dd_dt_khz_per_c"] = units::to_khz(p.dd_dt());
  j["b_mg"] = p.b();
  j["omega_khz"] = units::to_khz(p.omega());
  j["delta_khz"] = units::to_khz(p.delta());
  j["a_par_khz"] = units::to_khz(p.a_par());
  j["omega_mech_mhz"] = units::to_mhz(p.omega_mech());
  j["q_factor"] = p.q_factor();
  return j;
}

nlohmann::ordered_json config_json(const SimConfig& c) {
  nlohmann::ordered_json j;
  j["shots"] = c.n_shots;
  j["seed"] = c.seed;
  j["carbon_weights"] = {c.carbon_weights.up, c.carbon_weights.down};
  j["sigma_b_mg"] = c.noise.sigma_b;
  j["sigma_t_c"] = c.noise.sigma_t;
  j["sigma_omega_khz"] = units::to_khz(c.noise.sigma_omega());
  return j;
}

template <class SequenceFor>
Trace run_trace(std::span<const double> grid, const SystemParams& p, const SimConfig& config,
                SequenceFor&& sequence_for) {
  config.validate();
  Trace trace;
  trace.abscissa.assign(grid.begin(), grid.end());
  trace.mean_p0.resize(grid.size());
  trace.std_error.resize(grid.size());
  trace.n_shots = config.n_shots;

  parallel_for(grid.size(), config.threads, [&](std::size_t point) {
    const PulseSequence seq = sequence_for(grid[point]);
    Accumulator acc;
    for (std::size_t shot = 0; shot < config.n_shots; ++shot) {
      ShotRng rng(config.seed, point, shot);
      const EnvironmentSample env = sample_environment(config.noise, rng);
      acc.add(run_sequence(seq, p, env, config.carbon_weights));
    }
    trace.mean_p0[point] = std::clamp(acc.mean, 0.0, 1.0);
    trace.std_error[point] = acc.std_error();
  });
  return trace;
}

// Without a mechanical drive there is no drive amplitude to fluctuate. The
// reflectometer model is referenced to the simulated drive when unset.
SimConfig drive_noise_for(const SimConfig& config, double omega) {
  SimConfig cfg = config;
  if (omega == 0.0) {
    cfg.noise.amplitude_noise = FixedAmplitudeNoise{};
  } else if (auto* r = std::get_if<ReflectometerNoise>(&cfg.noise.amplitude_noise)) {
    if (r->mean_omega <= 0.0) r->mean_omega = omega;
  }
  return cfg;
}

}  // namespace

SpinState SpinState::reset(const CarbonWeights& weights) {
  SpinState s;
  s.amplitudes(basis_index(0, Carbon::up)) = std::sqrt(weights.up);
  s.amplitudes(basis_index(0, Carbon::down)) = std::sqrt(weights.down);
  return s;
}

double SpinState::population_zero() const {
  return std::norm(amplitudes(basis_index(0, Carbon::up))) +
         std::norm(amplitudes(basis_index(0, Carbon::down)));
}

double SpinState::carbon_population(Carbon c) const {
  double sum = 0.0;
  for (int ms : {+1, 0, -1}) sum += std::norm(amplitudes(basis_index(ms, c)));
  return sum;
}

void SimConfig::validate() const {
  if (n_shots < 1) throw std::invalid_argument("n_shots must be >= 1");
  if (!(carbon_weights.up >= 0.0 && carbon_weights.down >= 0.0) ||
      std::abs(carbon_weights.up + carbon_weights.down - 1.0) > 1e-12)
    throw std::invalid_argument("carbon weights must be non-negative and sum to 1");
  noise.validate();
}

double pulse_duration(double omega_mag, Coupling coupling, double angle) {
  if (!(omega_mag > 0.0)) throw std::invalid_argument("pulse strength must be > 0");
  const double rabi = coupling == Coupling::double_quantum ? std::numbers::sqrt2 * omega_mag
                                                           : omega_mag;
  return angle / rabi;
}

EnvironmentSample sample_environment(const NoiseSpec& noise, ShotRng& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  EnvironmentSample env;
  // Fixed draw order keeps streams comparable across noise settings.
  const double zb = unit(rng);
  const double zo = unit(rng);
  const double zt = unit(rng);
  env.delta_b = noise.sigma_b * zb;
  env.delta_omega = noise.sigma_omega() * zo;
  env.delta_t = noise.sigma_t * zt;
  return env;
}

HermitianMatrix6 free_hamiltonian(const SystemParams& p, const EnvironmentSample& env) {
  ComplexMatrix6 h = build_dressing_hamiltonian(p, env).matrix();
  const double zero_level = p.d0() - zero_field_splitting(p, env);
  for (Carbon c : kCarbons) h(basis_index(0, c), basis_index(0, c)) = zero_level;
  return HermitianMatrix6(h);
}

HermitianMatrix6 drive_hamiltonian(const SystemParams& p, const EnvironmentSample& env,
                                   const MagneticPulse& pulse) {
  ComplexMatrix6 h = free_hamiltonian(p, env).matrix();
  const double half = 0.5 * pulse.omega_mag;
  for (Carbon c : kCarbons) {
    const int zero = basis_index(0, c), plus = basis_index(+1, c), minus = basis_index(-1, c);
    h(zero, zero) += pulse.detuning_mag;
    Complex to_minus = std::polar(half, pulse.phase);
    if (pulse.coupling == Coupling::double_quantum) {
      h(zero, plus) = half;
      h(plus, zero) = half;
      to_minus *= Complex(0.0, -1.0);
    }
    h(zero, minus) = to_minus;
    h(minus, zero) = std::conj(to_minus);
  }
  return HermitianMatrix6(h);
}

SpinState propagate(const SpinState& state, const HermitianMatrix6& h, double duration) {
  if (!(duration >= 0.0)) throw std::invalid_argument("duration must be >= 0");
  SpinState out = state;
  if (duration == 0.0) return out;
  if (h.is_carbon_block_diagonal()) {
    for (Carbon c : kCarbons) propagate_block(out.amplitudes, h.matrix(), c, duration);
    return out;
  }
  const Eigensystem eig = diagonalize(h);
  ComplexVector6 coeff = eig.vectors.adjoint() * state.amplitudes;
  for (int k = 0; k < 6; ++k) coeff(k) *= std::polar(1.0, -eig.values(k) * duration);
  out.amplitudes = eig.vectors * coeff;
  return out;
}

SpinState propagate(const SpinState& state, const ComplexMatrix6& h, double duration) {
  return propagate(state, HermitianMatrix6(h), duration);
}

double run_sequence(const PulseSequence& sequence, const SystemParams& p,
                    const EnvironmentSample& env, const CarbonWeights& weights,
                    const SegmentObserver& observer) {
  validate_sequence(sequence);
  SpinState state;
  double t = 0.0;
  std::optional<HermitianMatrix6> free_h;

  for (std::size_t i = 0; i < sequence.size(); ++i) {
    std::visit(overloaded{
                   [&](const Reset&) {
                     state = SpinState::reset(weights);
                     t = 0.0;
                   },
                   [&](const MagneticPulse& pulse) {
                     apply_frame(state.amplitudes, pulse.detuning_mag, t, +1.0);
                     state = propagate(state, drive_hamiltonian(p, env, pulse), pulse.duration);
                     t += pulse.duration;
                     apply_frame(state.amplitudes, pulse.detuning_mag, t, -1.0);
                   },
                   [&](const FreeEvolution& free) {
                     if (!free_h) free_h.emplace(free_hamiltonian(p, env));
                     state = propagate(state, *free_h, free.duration);
                     t += free.duration;
                   },
                   [&](const Readout&) {},
               },
               sequence[i]);
    if (observer) observer(i, state);
  }
  return state.population_zero();
}

std::string_view to_string(RamseyKind kind) {
  switch (kind) {
    case RamseyKind::undressed_0m1: return "undressed_0m1";
    case RamseyKind::dressed_0p: return "dressed_0p";
    case RamseyKind::dressed_mp: return "dressed_mp";
    case RamseyKind::max_protection: return "max_protection";
  }
  return "?";
}

RamseyKind ramsey_kind_from_string(std::string_view name) {
  for (RamseyKind k : {RamseyKind::undressed_0m1, RamseyKind::dressed_0p, RamseyKind::dressed_mp,
                       RamseyKind::max_protection})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown Ramsey kind: " + std::string(name));
}

double default_omega_mag(RamseyKind kind) {
  switch (kind) {
    case RamseyKind::undressed_0m1:
    case RamseyKind::dressed_0p: return units::from_khz(696.0);
    case RamseyKind::dressed_mp:
    case RamseyKind::max_protection: return units::from_khz(1513.0);
  }
  return 0.0;
}

double default_omega_rot() { return units::from_khz(250.0); }

SystemParams ramsey_params(RamseyKind kind, const SystemParams& p) {
  switch (kind) {
    case RamseyKind::undressed_0m1: return p.with_omega(0.0);
    case RamseyKind::max_protection: return p.with_delta(-std::abs(p.a_par()));
    default: return p;
  }
}

PulseSequence ramsey_sequence(RamseyKind kind, double tau, const SystemParams& p,
                              const RamseyOptions& options) {
  const double omega_mag = options.omega_mag > 0.0 ? options.omega_mag : default_omega_mag(kind);
  const double advance = RamseyOptions::kPhaseAdvanceSign * options.omega_rot * tau;

  if (kind == RamseyKind::undressed_0m1 || kind == RamseyKind::dressed_0p) {
    const double detuning =
        kind == RamseyKind::undressed_0m1 ? -0.5 * p.delta() : p_line_midpoint(p);
    MagneticPulse open{omega_mag, detuning, 0.0,
                       pulse_duration(omega_mag, Coupling::single_quantum, kPi / 2.0),
                       Coupling::single_quantum};
    MagneticPulse close = open;
    close.phase = advance;
    return {Reset{}, open, FreeEvolution{tau}, close, Readout{}};
  }

  MagneticPulse open{omega_mag, 0.0, 0.0,
                     pulse_duration(omega_mag, Coupling::double_quantum, kPi),
                     Coupling::double_quantum};
  MagneticPulse close = open;
  close.phase = options.closing_phase;
  return {Reset{}, open, FreeEvolution{tau}, close, Readout{}};
}

Trace simulate_ramsey(RamseyKind kind, std::span<const double> tau_grid, const SystemParams& p,
                      const SimConfig& config, const RamseyOptions& options) {
  if (kind != RamseyKind::undressed_0m1 && !(p.omega() > 0.0))
    throw std::invalid_argument("dressed Ramsey kinds need Omega > 0");
  if (!std::is_sorted(tau_grid.begin(), tau_grid.end()) ||
      (!tau_grid.empty() && tau_grid.front() < 0.0))
    throw std::invalid_argument("tau grid must be ascending and non-negative");

  const SystemParams sim = ramsey_params(kind, p);
  RamseyOptions opts = options;
  if (opts.omega_mag <= 0.0) opts.omega_mag = default_omega_mag(kind);

  const SimConfig cfg = drive_noise_for(config, sim.omega());

  Trace trace = run_trace(tau_grid, sim, cfg, [&](double tau) {
    return ramsey_sequence(kind, tau, sim, opts);
  });
  trace.metadata["kind"] = std::string(to_string(kind));
  trace.metadata["abscissa"] = "tau_us";
  trace.metadata["params"] = params_json(sim);
  trace.metadata["config"] = config_json(cfg);
  trace.metadata["omega_mag_khz"] = units::to_khz(opts.omega_mag);
  trace.metadata["omega_rot_khz"] = units::to_khz(opts.omega_rot);
  trace.metadata["closing_phase_rad"] = opts.closing_phase;
  if (kind == RamseyKind::dressed_mp || kind == RamseyKind::max_protection)
    trace.metadata["p0_undressed"] = undressed_reference_p0(sim, cfg, opts);
  return trace;
}

double undressed_reference_p0(const SystemParams& p, const SimConfig& config,
                              const RamseyOptions& options) {
  const SystemParams undressed = p.with_omega(0.0);
  const SimConfig cfg = drive_noise_for(config, 0.0);
  RamseyOptions opts = options;
  if (opts.omega_mag <= 0.0) opts.omega_mag = default_omega_mag(RamseyKind::dressed_mp);
  const PulseSequence seq = ramsey_sequence(RamseyKind::dressed_mp, 0.0, undressed, opts);
  Accumulator acc;
  for (std::size_t shot = 0; shot < cfg.n_shots; ++shot) {
    ShotRng rng(cfg.seed, ~std::uint64_t{0}, shot);
    acc.add(run_sequence(seq, undressed, sample_environment(cfg.noise, rng), cfg.carbon_weights));
  }
  return acc.mean;
}

Trace simulate_spectrum(std::span<const double> delta_mag_grid_khz, const SystemParams& p,
                        const SimConfig& config, const SpectrumOptions& options) {
  if (!std::is_sorted(delta_mag_grid_khz.begin(), delta_mag_grid_khz.end()))
    throw std::invalid_argument("detuning grid must be ascending");
  const double omega_mag = options.omega_mag > 0.0 ? options.omega_mag : units::from_khz(80.0);
  const double duration = pulse_duration(omega_mag, Coupling::single_quantum, options.pulse_area);
  const SimConfig cfg = drive_noise_for(config, p.omega());

  Trace trace = run_trace(delta_mag_grid_khz, p, cfg, [&](double detuning_khz) {
    MagneticPulse pulse{omega_mag, units::from_khz(detuning_khz), 0.0, duration,
                        Coupling::single_quantum};
    return PulseSequence{Reset{}, pulse, Readout{}};
  });
  trace.metadata["kind"] = "spectrum";
  trace.metadata["abscissa"] = "delta_mag_khz";
  trace.metadata["params"] = params_json(p);
  trace.metadata["config"] = config_json(cfg);
  trace.metadata["omega_mag_khz"] = units::to_khz(omega_mag);
  trace.metadata["pulse_area_rad"] = options.pulse_area;
  return trace;
}

Spectrum fourier_magnitude(const Trace& trace, std::size_t zero_pad_factor) {
  const std::size_t n = trace.size();
  if (n < 2) throw std::invalid_argument("need at least two samples");
  if (zero_pad_factor < 1) throw std::invalid_argument("zero_pad_factor must be >= 1");
  const double step = (trace.abscissa.back() - trace.abscissa.front()) / static_cast<double>(n - 1);
  if (!(step > 0.0)) throw std::invalid_argument("abscissa must be increasing");
  for (std::size_t i = 1; i < n; ++i) {
    const double d = trace.abscissa[i] - trace.abscissa[i - 1];
    if (std::abs(d - step) > 1e-6 * step) throw std::invalid_argument("abscissa grid is not uniform");
  }

  double mean = 0.0;
  for (double v : trace.mean_p0) mean += v;
  mean /= static_cast<double>(n);

  const std::size_t padded = n * zero_pad_factor;
  std::vector<double> in(padded, 0.0);
  for (std::size_t i = 0; i < n; ++i) in[i] = trace.mean_p0[i] - mean;
  const std::size_t bins = padded / 2 + 1;
  std::vector<fftw_complex> out(bins);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(padded), in.data(), out.data(), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  Spectrum s;
  s.frequency_khz.resize(bins);
  s.magnitude.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    // abscissa in us -> cycles/us = MHz
    s.frequency_khz[k] = static_cast<double>(k) / (static_cast<double>(padded) * step) * 1e3;
    s.magnitude[k] = std::hypot(out[k][0], out[k][1]);
  }
  return s;
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace cdd
