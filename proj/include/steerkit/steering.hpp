#pragma once

#include "steerkit/channels.hpp"
#include "steerkit/fock.hpp"

#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

namespace steerkit {

/// Sign applied to 2 Re(e^{i theta} rho_01) when correlating Bob's qubit with
/// Alice's announced sign. With s = sign(x) and the beam-splitter phase
/// convention this makes Tr[sigma^theta rho^theta_s] = +2 s |rho_01| for the
/// honest conditioned states.
inline constexpr double kCorrelatorOrientation = -1.0;

/// Marker for the n -> infinity limit of the settings-dependent bound.
inline constexpr int kInfiniteSettings = std::numeric_limits<int>::max();

/// Settings-dependent bound f(n). Tabulated for n = 6 and n = infinity only;
/// any other n needs an explicit override.
double f_factor(int n, std::optional<double> override_value = std::nullopt);

struct SteeringSettings {
  int n = 6;
  std::vector<double> thetas;  ///< canonicalized to (-pi/2, pi/2]
  double f_value = 0.6440;

  /// theta_j = pi j / n, j = 1..n, canonicalized modulo pi.
  static SteeringSettings uniform(int n, std::optional<double> f_override = std::nullopt);
  static SteeringSettings defaults() { return uniform(6); }

  void validate() const;
};

/// Maps a phase into (-pi/2, pi/2].
double canonical_setting(double theta);

/// Oriented correlator of a qubit state with the steering observable at phase theta.
double sigma_theta_expectation(const DensityMatrix& qubit, double theta);

/// (setting index j, announced sign s).
using CellKey = std::pair<int, int>;

struct ConditionedCell {
  double probability;  ///< P(s | theta_j)
  DensityMatrix state;  ///< Bob's qubit state for this cell
};

using ConditionedMap = std::map<CellKey, ConditionedCell>;

/// Per-setting terms sum_s P(s|theta_j) s Tr[sigma rho_s]. Throws
/// std::invalid_argument when a (j, s) cell is missing.
std::vector<double> steering_terms(const ConditionedMap& conditioned, const SteeringSettings& settings);
double steering_lhs_states(const ConditionedMap& conditioned, const SteeringSettings& settings);
double steering_rhs_state(const DensityMatrix& unconditioned_qubit, const SteeringSettings& settings);

double steering_lhs_analytic(const SourceParams& source, const NoiseParams& noise, double R,
                             const SteeringSettings& settings);
double steering_rhs_analytic(const SourceParams& source, const NoiseParams& noise, double R,
                             const SteeringSettings& settings);
double violation(const SourceParams& source, const NoiseParams& noise, double R, const SteeringSettings& settings);

struct SweepPoint {
  double R, lhs, rhs, violation;
};

struct SweepResult {
  std::vector<SweepPoint> curve;
  double r_opt;                  ///< argmax of the violation (golden-section refined)
  double v_opt;                  ///< violation at r_opt, may be negative
  std::optional<double> r_max;   ///< largest +/- zero crossing, if any
};

SweepResult sweep_reflectivity(const SourceParams& source, const NoiseParams& noise,
                               const SteeringSettings& settings, const std::vector<double>& grid);

/// Uniform grid from `start` to `stop` inclusive (within half a step).
std::vector<double> make_grid(double start, double stop, double step);

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& curve);

struct SteeringReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double violation = 0.0;
  std::vector<double> per_setting_terms;
  double bootstrap_mean = 0.0;
  double bootstrap_std = 0.0;
  double lhs_bootstrap_std = 0.0;
  double rhs_bootstrap_std = 0.0;
  int bootstrap_resamples = 0;
  int n = 6;
  double f = 0.6440;
  std::map<CellKey, std::size_t> counts;

  /// Sets violation = lhs - rhs.
  void finalize() { violation = lhs - rhs; }
};

nlohmann::json to_json(const SteeringReport& report);
SteeringReport report_from_json(const nlohmann::json& j);

}  // namespace steerkit
