#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdd/dephasing.hpp"
#include "cdd/rng.hpp"
#include "cdd/spin_model.hpp"

namespace cdd {

/// Occupation probabilities of the two 13C sublevels at reset.
struct CarbonWeights {
  double up = 0.5;
  double down = 0.5;
  friend bool operator==(const CarbonWeights&, const CarbonWeights&) = default;
};

/// Pure state over the six basis levels. Because every Hamiltonian here is
/// block-diagonal in the 13C index, the unpolarized 13C mixture is carried
/// exactly as sqrt(w_up)|0 up> + sqrt(w_down)|0 down>.
struct SpinState {
  ComplexVector6 amplitudes = ComplexVector6::Zero();

  static SpinState reset(const CarbonWeights& weights);
  double norm_squared() const { return amplitudes.squaredNorm(); }
  /// Population of |0> summed over both 13C sublevels.
  double population_zero() const;
  double carbon_population(Carbon c) const;
};

enum class Coupling { single_quantum, double_quantum };

struct Reset {};

/// Magnetic pulse referenced to the nominal 0 <-> -1 frame frequency.
///
/// Single-quantum pulses couple 0 <-> -1 with <0|H|-1> = Omega_mag/2 e^{i phase}.
/// Double-quantum pulses couple 0 <-> +1 with Omega_mag/2 and 0 <-> -1 with
/// -i Omega_mag/2 e^{i phase}; at phase 0 the bright state is an equal
/// superposition of m and p for any dressing.
struct MagneticPulse {
  double omega_mag = 0.0;     ///< rad/us
  double detuning_mag = 0.0;  ///< rad/us, drive minus (D0 + frame reference)
  double phase = 0.0;         ///< rad
  double duration = 0.0;      ///< us
  Coupling coupling = Coupling::single_quantum;
};

struct FreeEvolution {
  double duration = 0.0;  ///< us
};

struct Readout {};

using Segment = std::variant<Reset, MagneticPulse, FreeEvolution, Readout>;
using PulseSequence = std::vector<Segment>;

struct SimConfig {
  std::size_t n_shots = 1000;
  std::uint64_t seed = 0;
  CarbonWeights carbon_weights;
  NoiseSpec noise;
  unsigned threads = 0;  ///< 0 = hardware concurrency

  void validate() const;
};

/// Mean readout population per abscissa point.
struct Trace {
  std::vector<double> abscissa;  ///< tau in us, or Delta_mag in kHz
  std::vector<double> mean_p0;
  std::vector<double> std_error;
  std::size_t n_shots = 0;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

  std::size_t size() const { return abscissa.size(); }
};

/// Pulse length for a rotation by `angle` on the undressed transition. A
/// double-quantum pulse nutates |0> into the bright state at sqrt(2) Omega_mag.
double pulse_duration(double omega_mag, Coupling coupling, double angle);

/// One quasi-static draw. Zero spreads produce exact zeros.
EnvironmentSample sample_environment(const NoiseSpec& noise, ShotRng& rng);

/// Hamiltonian with the spin's 0 level referenced to the undriven frame
/// (it sits at D0 - D) and no magnetic drive.
HermitianMatrix6 free_hamiltonian(const SystemParams& p, const EnvironmentSample& env);

/// Hamiltonian in the frame co-rotating with the magnetic pulse: the 0 level
/// sits at detuning_mag + D0 - D, the +1/-1 block is the dressing Hamiltonian.
HermitianMatrix6 drive_hamiltonian(const SystemParams& p, const EnvironmentSample& env,
                                   const MagneticPulse& pulse);

/// exp(-i h duration) state, via eigendecomposition of each 13C block.
SpinState propagate(const SpinState& state, const HermitianMatrix6& h, double duration);
SpinState propagate(const SpinState& state, const ComplexMatrix6& h, double duration);

/// Observer invoked after every segment with (segment index, state).
using SegmentObserver = std::function<void(std::size_t, const SpinState&)>;

/// Final |0> population. Throws SequenceError naming the offending segment.
double run_sequence(const PulseSequence& sequence, const SystemParams& p,
                    const EnvironmentSample& env, const CarbonWeights& weights = {},
                    const SegmentObserver& observer = {});

enum class RamseyKind { undressed_0m1, dressed_0p, dressed_mp, max_protection };

std::string_view to_string(RamseyKind kind);
RamseyKind ramsey_kind_from_string(std::string_view name);

struct RamseyOptions {
  double omega_mag = 0.0;      ///< rad/us; 0 selects the per-kind default
  double omega_rot = 0.0;      ///< rad/us phase advance of the closing pulse (0p, 0m1)
  double closing_phase = 0.0;  ///< rad, closing double-quantum pulse (mp kinds)
  /// Sign applied to the omega_rot tau phase advance.
  static constexpr double kPhaseAdvanceSign = 1.0;
};

/// Per-kind default magnetic strength: 696 kHz (0m1, 0p), 1513 kHz (mp kinds).
double default_omega_mag(RamseyKind kind);
/// 250 kHz; chosen for visible fringes, not a measured value.
double default_omega_rot();

/// Parameters actually simulated for a kind (undressed drops Omega,
/// max_protection sets Delta = -|A|).
SystemParams ramsey_params(RamseyKind kind, const SystemParams& p);

/// The sequence simulated for one free-evolution time.
PulseSequence ramsey_sequence(RamseyKind kind, double tau, const SystemParams& p,
                              const RamseyOptions& options);

Trace simulate_ramsey(RamseyKind kind, std::span<const double> tau_grid, const SystemParams& p,
                      const SimConfig& config, const RamseyOptions& options = {});

/// Mean |0> population after the undressed double-quantum 2 pi sequence;
/// the contrast reference for the {m,p} fits.
double undressed_reference_p0(const SystemParams& p, const SimConfig& config,
                              const RamseyOptions& options = {});

struct SpectrumOptions {
  double omega_mag = 0.0;  ///< rad/us; 0 selects 80 kHz
  double pulse_area = 3.14159265358979323846;
};

/// P0 versus magnetic detuning. Grid and abscissa are in kHz.
Trace simulate_spectrum(std::span<const double> delta_mag_grid_khz, const SystemParams& p,
                        const SimConfig& config, const SpectrumOptions& options = {});

struct Spectrum {
  std::vector<double> frequency_khz;
  std::vector<double> magnitude;
};

/// |DFT| of the mean-subtracted signal. Requires a uniform tau grid in us.
Spectrum fourier_magnitude(const Trace& trace, std::size_t zero_pad_factor = 1);

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = all cores).
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace cdd
