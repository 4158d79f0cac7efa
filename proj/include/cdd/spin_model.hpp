#pragma once

#include <array>
#include <complex>
#include <string_view>

#include <Eigen/Dense>

namespace cdd {

using Complex = std::complex<double>;
using ComplexMatrix6 = Eigen::Matrix<Complex, 6, 6>;
using ComplexVector6 = Eigen::Matrix<Complex, 6, 1>;
using RealVector6 = Eigen::Matrix<double, 6, 1>;

/// 13C nuclear sublevel: up is m_I = +1/2, down is m_I = -1/2.
enum class Carbon { up, down };

inline constexpr std::array<Carbon, 2> kCarbons{Carbon::up, Carbon::down};

constexpr double carbon_sign(Carbon c) { return c == Carbon::up ? 1.0 : -1.0; }

/// Index into the fixed basis {+1 up, +1 down, 0 up, 0 down, -1 up, -1 down}.
constexpr int basis_index(int ms, Carbon c) {
  return (1 - ms) * 2 + (c == Carbon::up ? 0 : 1);
}

/// Static configuration of one NV center and its mechanical drive.
///
/// Stored in internal units (rad/us, mG, degrees C). The mechanical mode
/// frequency and the detuning are primary; the static axial field is derived
/// from omega_mech = 2 gamma b + delta so that the relation always holds.
class SystemParams {
 public:
  struct Spec {
    double gamma = 0.0;       ///< rad/us per mG
    double d0 = 0.0;          ///< rad/us
    double dd_dt = 0.0;       ///< rad/us per degree C
    double omega_mech = 0.0;  ///< rad/us
    double omega = 0.0;       ///< mechanical Rabi field, rad/us
    double delta = 0.0;       ///< mechanical detuning, rad/us
    double a_par = 0.0;       ///< signed 13C coupling, rad/us
    double q_factor = 1.0;
  };

  explicit SystemParams(const Spec& spec);

  /// Builds parameters from a static field instead of a mode frequency.
  static SystemParams from_field(Spec spec, double b_mg);

  /// NV center with the textbook constants (gamma/2pi = 2.8 MHz/G,
  /// D0/2pi = 2.87 GHz, dD/dT = -2pi 74 kHz/C, omega_mech/2pi = 586 MHz,
  /// Q = 2700) and the given drive and coupling.
  static SystemParams nv_defaults(double omega, double delta, double a_par);

  double gamma() const { return spec_.gamma; }
  double d0() const { return spec_.d0; }
  double dd_dt() const { return spec_.dd_dt; }
  double b() const { return (spec_.omega_mech - spec_.delta) / (2.0 * spec_.gamma); }
  double omega() const { return spec_.omega; }
  double delta() const { return spec_.delta; }
  double a_par() const { return spec_.a_par; }
  double omega_mech() const { return spec_.omega_mech; }
  double q_factor() const { return spec_.q_factor; }
  const Spec& spec() const { return spec_; }

  /// Copies with one field replaced. The mode frequency is held fixed, so a
  /// new detuning moves the static field.
  SystemParams with_omega(double omega) const;
  SystemParams with_delta(double delta) const;
  SystemParams with_a_par(double a_par) const;

  friend bool operator==(const SystemParams&, const SystemParams&) = default;

 private:
  Spec spec_;
};

/// One quasi-static draw of the environment. The zero sample is the nominal system.
struct EnvironmentSample {
  double delta_b = 0.0;      ///< mG
  double delta_omega = 0.0;  ///< rad/us
  double delta_t = 0.0;      ///< degrees C

  bool is_finite() const;
  friend bool operator==(const EnvironmentSample&, const EnvironmentSample&) = default;
};

/// 6x6 Hermitian matrix in the fixed spin x 13C basis.
class HermitianMatrix6 {
 public:
  static constexpr double kRelativeTolerance = 1e-12;

  /// Rejects (std::invalid_argument) matrices that are not Hermitian to
  /// kRelativeTolerance relative to the largest entry.
  explicit HermitianMatrix6(const ComplexMatrix6& m);

  const ComplexMatrix6& matrix() const { return m_; }
  Complex operator()(int r, int c) const { return m_(r, c); }

  /// True when no element couples the up and down 13C sublevels.
  bool is_carbon_block_diagonal(double tol = 0.0) const;

  static bool is_hermitian(const ComplexMatrix6& m, double rel_tol = kRelativeTolerance);

 private:
  ComplexMatrix6 m_;
};

enum class DressedLabel { zero_up, zero_down, m_up, m_down, p_up, p_down };

std::string_view to_string(DressedLabel label);

struct DressedLevel {
  DressedLabel label;
  double energy;  ///< rad/us
};

struct DressedLevels {
  std::array<DressedLevel, 6> levels;
  double energy(DressedLabel label) const;
};

struct Eigensystem {
  RealVector6 values;     ///< ascending
  ComplexMatrix6 vectors;  ///< columns are orthonormal eigenvectors
};

/// Zero-field splitting including the thermal shift of the sample.
double zero_field_splitting(const SystemParams& p, const EnvironmentSample& env);

/// xi = delta + 2 gamma db + s A for the given 13C sublevel.
double dressing_detuning(const SystemParams& p, const EnvironmentSample& env, Carbon c);

/// Lab-frame Hamiltonian with the mechanical drive as cos(omega_mech t).
HermitianMatrix6 build_lab_hamiltonian(const SystemParams& p, const EnvironmentSample& env,
                                       double t_us);

/// Rotating-wave Hamiltonian in the frame rotating at omega_mech / 2,
/// written with the total field b + db on the diagonal.
HermitianMatrix6 build_rotating_hamiltonian(const SystemParams& p, const EnvironmentSample& env);

/// The static gamma b S_z term carried by build_rotating_hamiltonian.
HermitianMatrix6 rotating_frame_offset(const SystemParams& p);

/// build_rotating_hamiltonian minus rotating_frame_offset: the dressing
/// Hamiltonian whose spectrum is dressed_energies.
HermitianMatrix6 build_dressing_hamiltonian(const SystemParams& p, const EnvironmentSample& env);

/// Closed-form energies {-D, -/+ sqrt(Omega_sum^2 + xi^2)/2} per sublevel.
DressedLevels dressed_energies(const SystemParams& p, const EnvironmentSample& env);

/// Dense Hermitian eigendecomposition. The raw-matrix overload rejects
/// non-Hermitian input.
Eigensystem diagonalize(const HermitianMatrix6& h);
Eigensystem diagonalize(const ComplexMatrix6& h);

/// |E_i - E_j| between two dressed levels.
double larmor_frequency(DressedLabel i, DressedLabel j, const SystemParams& p,
                        const EnvironmentSample& env);

struct TransitionOffsets {
  double zero_m;  ///< omega_{0,m} - omega_{0,-1}
  double zero_p;  ///< omega_{0,p} - omega_{0,-1}
};

/// Dressed line positions relative to the undressed 0 <-> -1 line.
TransitionOffsets dressed_transition_offsets(double omega, double delta);

/// Mechanical detuning implied by measured 0<->m, 0<->p and 0<->-1 lines.
double detuning_from_lines(double w0m, double w0p, double w0m1);

/// Amplitude-noise cutoff omega_mech / (2 Q).
double mechanical_cutoff(double omega_mech, double q_factor);

}  // namespace cdd
