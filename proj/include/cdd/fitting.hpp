#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdd/pulse_sim.hpp"

namespace cdd {

/// How a parameter transforms when the abscissa is rescaled x -> s x.
enum class ParamKind {
  scalar,            ///< unchanged (contrast, background, phase)
  abscissa,          ///< same unit as x (T2*, or a frequency on a kHz axis)
  inverse_abscissa,  ///< angular rate per abscissa unit (rad/us on a tau axis)
};

struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::scalar;
  double initial = 0.0;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool frozen = false;
};

/// Points to fit. `channel` selects a sub-model in joint fits (empty = all 0);
/// `sigma` enables weighting (empty = unweighted).
struct FitData {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> sigma;
  std::vector<int> channel;
  std::string abscissa_unit = "us";

  std::size_t size() const { return x.size(); }
  int channel_of(std::size_t i) const { return channel.empty() ? 0 : channel[i]; }
  void validate() const;

  static FitData from_trace(const Trace& trace, bool weighted = false);
  /// Dressed points on channel 0, undressed on channel 1. Abscissa in kHz.
  static FitData joint(const Trace& dressed, const Trace& undressed, bool weighted = false);
};

class ModelFunction {
 public:
  using Evaluator = std::function<double(std::span<const double> p, double x, int channel)>;
  /// Writes d model / d p_k for every parameter (frozen ones included).
  using Gradient =
      std::function<void(std::span<const double> p, double x, int channel, std::span<double> out)>;
  /// Refines initial guesses from the data; frozen parameters must be left alone.
  using Seeder = std::function<void(std::vector<ParamSpec>& params, const FitData& data)>;

  std::string id;
  std::vector<ParamSpec> params;
  Evaluator evaluator;
  Gradient gradient;  ///< optional
  Seeder seeder;      ///< optional

  std::size_t index(std::string_view name) const;
  ParamSpec& param(std::string_view name) { return params[index(name)]; }
  const ParamSpec& param(std::string_view name) const { return params[index(name)]; }
  /// Sets the initial value and freezes the parameter.
  void fix(std::string_view name, double value);

  std::vector<double> initial_values() const;
  std::size_t free_count() const;
  double operator()(std::span<const double> p, double x, int channel = 0) const {
    return evaluator(p, x, channel);
  }
  std::vector<double> evaluate(std::span<const double> p, const FitData& data) const;
  /// Applies the seeder (if any) to the initial guesses.
  void seed(const FitData& data);

  /// The same model on an abscissa multiplied by `scale`, with parameters
  /// converted accordingly.
  ModelFunction rescaled(double scale) const;
  /// Parameter vector converted to the rescaled model's units.
  std::vector<double> rescale_values(std::span<const double> p, double scale) const;
};

enum class FitStatus { converged, max_iterations, degenerate };
std::string_view to_string(FitStatus status);

struct FitOptions {
  int max_iterations = 500;
  double fd_step = 1e-6;          ///< relative finite-difference step
  double rss_tolerance = 1e-10;   ///< relative RSS improvement
  double step_tolerance = 1e-10;  ///< relative step norm
  double confidence = 0.95;
  bool analytic_jacobian = true;  ///< use ModelFunction::gradient when present
};

struct FitOutcome {
  std::string model_id;
  std::vector<std::string> names;
  std::vector<ParamKind> kinds;
  std::vector<bool> free;
  std::vector<double> values;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  Eigen::MatrixXd covariance;  ///< over free parameters, in order
  double rss = 0.0;
  std::size_t n_points = 0;
  std::size_t dof = 0;
  int iterations = 0;
  double confidence = 0.95;
  FitStatus status = FitStatus::converged;
  std::vector<std::string> warnings;
  std::string abscissa_unit = "us";

  bool converged() const { return status == FitStatus::converged; }
  double value(std::string_view name) const;
  double half_width(std::string_view name) const;
  std::size_t index(std::string_view name) const;
};

/// Levenberg-Marquardt on the bounded box. Throws std::invalid_argument when
/// there are too few points or the initial guess lies outside the bounds;
/// numerical trouble is reported through FitOutcome::status.
FitOutcome nlls_fit(const ModelFunction& model, const FitData& data, const FitOptions& options = {});

/// Jacobian of the model over the free parameters, by finite differences.
Eigen::MatrixXd finite_difference_jacobian(const ModelFunction& model, std::span<const double> p,
                                           const FitData& data, double rel_step = 1e-6);
/// Jacobian from ModelFunction::gradient; throws if the model has none.
Eigen::MatrixXd analytic_jacobian(const ModelFunction& model, std::span<const double> p,
                                  const FitData& data);

/// Plain-text fit report. Rates on a microsecond axis are shown in kHz.
std::string format_fit_report(const FitOutcome& outcome);

// Models. All rates are angular per microsecond, times in microseconds, except
// spectrum_joint whose abscissa and parameters are ordinary frequencies in kHz.

/// c - a/4 exp(-tau^2/T2^2) [cos((w_rot+d+A/2)tau) + cos((w_rot+d-A/2)tau)]
ModelFunction model_undressed_ramsey(double omega_rot);
/// c + exp(-tau^2/T2^2)/4 [a_p cos((d+w_rot)tau+phi) + a_m cos((d+w_rot+sqrt(W^2+A^2))tau+phi)]
ModelFunction model_ramsey_0p(double a_par, double omega_rot);
/// c + P0ud/2 exp(-tau^2/T2^2) cos(tau sqrt(A^2+W^2) + phi)
ModelFunction model_ramsey_mp(double a_par, double p0_undressed);
/// c + P0ud/4 [h(tau) cos(W tau + phi) + exp(-tau^2/T2up^2) cos(sqrt(W^2+4A^2) tau + phi)]
ModelFunction model_max_protection(double a_par, double p0_undressed, double gamma_sigma_b);
/// Channel 0: two Lorentzian dips at w0 + D/2 -+ sqrt(D^2+W^2)/2 sharing FWHM G_D.
/// Channel 1: one Lorentzian dip at w0.
ModelFunction model_spectrum_joint();

/// Model lookup by identifier, for the CLI.
std::vector<std::string> model_names();

}  // namespace cdd
