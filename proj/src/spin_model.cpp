#include "cdd/spin_model.hpp"

#include <cmath>
#include <stdexcept>

#include "cdd/units.hpp"

namespace cdd {

namespace {

void validate(const SystemParams::Spec& s) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!(finite(s.gamma) && s.gamma > 0.0)) throw std::invalid_argument("gamma must be > 0");
  if (!(finite(s.q_factor) && s.q_factor > 0.0))
    throw std::invalid_argument("q_factor must be > 0");
  if (!(finite(s.omega) && s.omega >= 0.0)) throw std::invalid_argument("omega must be >= 0");
  if (!(finite(s.d0) && finite(s.dd_dt) && finite(s.omega_mech) && finite(s.delta) &&
        finite(s.a_par)))
    throw std::invalid_argument("system parameters must be finite");
}

}  // namespace

SystemParams::SystemParams(const Spec& spec) : spec_(spec) { validate(spec_); }

SystemParams SystemParams::from_field(Spec spec, double b_mg) {
  spec.omega_mech = 2.0 * spec.gamma * b_mg + spec.delta;
  return SystemParams(spec);
}

SystemParams SystemParams::nv_defaults(double omega, double delta, double a_par) {
  Spec s;
  s.gamma = units::gyromagnetic_from_mhz_per_gauss(2.8);
  s.d0 = units::from_ghz(2.87);
  s.dd_dt = units::from_khz(-74.0);
  s.omega_mech = units::from_mhz(586.0);
  s.q_factor = 2700.0;
  s.omega = omega;
  s.delta = delta;
  s.a_par = a_par;
  return SystemParams(s);
}

SystemParams SystemParams::with_omega(double omega) const {
  Spec s = spec_;
  s.omega = omega;
  return SystemParams(s);
}

SystemParams SystemParams::with_delta(double delta) const {
  Spec s = spec_;
  s.delta = delta;
  return SystemParams(s);
}

SystemParams SystemParams::with_a_par(double a_par) const {
  Spec s = spec_;
  s.a_par = a_par;
  return SystemParams(s);
}

bool EnvironmentSample::is_finite() const {
  return std::isfinite(delta_b) && std::isfinite(delta_omega) && std::isfinite(delta_t);
}

HermitianMatrix6::HermitianMatrix6(const ComplexMatrix6& m) : m_(m) {
  if (!is_hermitian(m)) throw std::invalid_argument("matrix is not Hermitian");
}

bool HermitianMatrix6::is_hermitian(const ComplexMatrix6& m, double rel_tol) {
  if (!m.allFinite()) return false;
  const double scale = std::max(m.cwiseAbs().maxCoeff(), 1.0);
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

bool HermitianMatrix6::is_carbon_block_diagonal(double tol) const {
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c)
      if ((r % 2) != (c % 2) && std::abs(m_(r, c)) > tol) return false;
  return true;
}

std::string_view to_string(DressedLabel label) {
  switch (label) {
    case DressedLabel::zero_up: return "0_up";
    case DressedLabel::zero_down: return "0_down";
    case DressedLabel::m_up: return "m_up";
    case DressedLabel::m_down: return "m_down";
    case DressedLabel::p_up: return "p_up";
    case DressedLabel::p_down: return "p_down";
  }
  return "?";
}

double DressedLevels::energy(DressedLabel label) const {
  for (const auto& l : levels)
    if (l.label == label) return l.energy;
  throw std::invalid_argument("unknown dressed label");
}

double zero_field_splitting(const SystemParams& p, const EnvironmentSample& env) {
  return p.d0() + p.dd_dt() * env.delta_t;
}

double dressing_detuning(const SystemParams& p, const EnvironmentSample& env, Carbon c) {
  return p.delta() + 2.0 * p.gamma() * env.delta_b + carbon_sign(c) * p.a_par();
}

HermitianMatrix6 build_lab_hamiltonian(const SystemParams& p, const EnvironmentSample& env,
                                       double t_us) {
  const double zeeman = p.gamma() * (p.b() + env.delta_b);
  const double drive = (p.omega() + env.delta_omega) * std::cos(p.omega_mech() * t_us);
  const double d = zero_field_splitting(p, env);
  ComplexMatrix6 h = ComplexMatrix6::Zero();
  for (Carbon c : kCarbons) {
    const double hyperfine = 0.5 * p.a_par() * carbon_sign(c);
    const int plus = basis_index(+1, c), zero = basis_index(0, c), minus = basis_index(-1, c);
    h(plus, plus) = zeeman + hyperfine;
    h(zero, zero) = -d;
    h(minus, minus) = -zeeman - hyperfine;
    h(plus, minus) = drive;
    h(minus, plus) = drive;
  }
  return HermitianMatrix6(h);
}

HermitianMatrix6 build_rotating_hamiltonian(const SystemParams& p, const EnvironmentSample& env) {
  const double zeeman = p.gamma() * (p.b() + env.delta_b);
  const double half_drive = 0.5 * (p.omega() + env.delta_omega);
  const double d = zero_field_splitting(p, env);
  ComplexMatrix6 h = ComplexMatrix6::Zero();
  for (Carbon c : kCarbons) {
    const double shift = zeeman + 0.5 * (p.delta() + carbon_sign(c) * p.a_par());
    const int plus = basis_index(+1, c), zero = basis_index(0, c), minus = basis_index(-1, c);
    h(plus, plus) = shift;
    h(zero, zero) = -d;
    h(minus, minus) = -shift;
    h(plus, minus) = half_drive;
    h(minus, plus) = half_drive;
  }
  return HermitianMatrix6(h);
}

HermitianMatrix6 rotating_frame_offset(const SystemParams& p) {
  ComplexMatrix6 h = ComplexMatrix6::Zero();
  const double zeeman = p.gamma() * p.b();
  for (Carbon c : kCarbons) {
    h(basis_index(+1, c), basis_index(+1, c)) = zeeman;
    h(basis_index(-1, c), basis_index(-1, c)) = -zeeman;
  }
  return HermitianMatrix6(h);
}

HermitianMatrix6 build_dressing_hamiltonian(const SystemParams& p, const EnvironmentSample& env) {
  return HermitianMatrix6(build_rotating_hamiltonian(p, env).matrix() -
                          rotating_frame_offset(p).matrix());
}

DressedLevels dressed_energies(const SystemParams& p, const EnvironmentSample& env) {
  const double drive = p.omega() + env.delta_omega;
  const double d = zero_field_splitting(p, env);
  auto half_split = [&](Carbon c) {
    return 0.5 * std::hypot(drive, dressing_detuning(p, env, c));
  };
  const double up = half_split(Carbon::up);
  const double down = half_split(Carbon::down);
  return DressedLevels{{{
      {DressedLabel::zero_up, -d},
      {DressedLabel::zero_down, -d},
      {DressedLabel::m_up, -up},
      {DressedLabel::m_down, -down},
      {DressedLabel::p_up, up},
      {DressedLabel::p_down, down},
  }}};
}

Eigensystem diagonalize(const HermitianMatrix6& h) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix6> solver(h.matrix());
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigensolver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

Eigensystem diagonalize(const ComplexMatrix6& h) { return diagonalize(HermitianMatrix6(h)); }

double larmor_frequency(DressedLabel i, DressedLabel j, const SystemParams& p,
                        const EnvironmentSample& env) {
  if (i == j) throw std::invalid_argument("larmor_frequency needs two distinct levels");
  const DressedLevels levels = dressed_energies(p, env);
  return std::abs(levels.energy(i) - levels.energy(j));
}

TransitionOffsets dressed_transition_offsets(double omega, double delta) {
  if (!(omega >= 0.0)) throw std::invalid_argument("omega must be >= 0");
  const double root = std::hypot(delta, omega);
  return {0.5 * (delta - root), 0.5 * (delta + root)};
}

double detuning_from_lines(double w0m, double w0p, double w0m1) {
  return 2.0 * (0.5 * (w0m + w0p) - w0m1);
}

double mechanical_cutoff(double omega_mech, double q_factor) {
  if (!(q_factor > 0.0)) throw std::invalid_argument("q_factor must be > 0");
  return omega_mech / (2.0 * q_factor);
}

}  // namespace cdd
