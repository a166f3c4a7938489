#pragma once

#include "steerkit/channels.hpp"
#include "steerkit/fock.hpp"
#include "steerkit/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace steerkit {

// Quadrature convention: hbar = 1, vacuum variance 1/2,
// X^theta = (a e^{-i theta} + a^dagger e^{i theta}) / sqrt(2) = q cos(theta) + p sin(theta),
// and <x^theta|n> = e^{-i n theta} psi_n(x).

/// Hermite functions psi_0..psi_{out.size()-1} at x via the stable three-term recurrence.
void hermite_functions(double x, std::span<double> out);

double quad_wavefunction(int n, double x);

/// Born-rule density of outcome x for LO phase theta:
/// sum_nm rho_nm e^{-i(n-m) theta} psi_n(x) psi_m(x).
double quadrature_pdf(const DensityMatrix& rho, double theta, double x);

/// Numerical inverse-CDF sampler for homodyne outcomes. Cumulative integrals
/// of psi_n psi_m are tabulated once per truncation on a fine grid over
/// [-L, L] (L = 6, widened by 1.5x up to three times when a state leaks more
/// than 1e-6 of its mass outside); the root inside a grid cell is polished
/// with exact Gauss-Legendre integration of the density. Immutable after
/// construction and safe to share across threads.
class QuadratureSampler {
 public:
  explicit QuadratureSampler(FockDim dim = FockDim{});

  int levels() const noexcept { return levels_; }

  /// Draws one outcome. Throws std::runtime_error if the state is not
  /// contained in the widest window.
  double sample(const DensityMatrix& rho, double theta, Rng& rng) const;

  /// CDF of the outcome at x (x clipped to the widest window).
  double cdf(const DensityMatrix& rho, double theta, double x) const;

 private:
  struct Table {
    double half_width;
    double step;
    int points;
    std::vector<double> cumulative;  // points x pairs
  };

  std::vector<double> pair_coefficients(const DensityMatrix& rho, double theta) const;
  double table_cdf(const Table& t, const std::vector<double>& coef, int i) const;
  double pdf_from_coef(const std::vector<double>& coef, double x) const;
  double integrate_pdf(const std::vector<double>& coef, double a, double b) const;

  int levels_;
  int pairs_;
  std::vector<Table> tables_;
};

/// One homodyne sample. For Bob's records `s` carries the sign Alice announced
/// on the same trial; for Alice's honest records s = sign(x) with s = +1 at x >= 0.
struct QuadratureRecord {
  Party party = Party::A;
  int setting_index = 0;
  double lo_phase = 0.0;  ///< radians, in [0, 2pi)
  double x = 0.0;
  int s = 1;
  std::int64_t trial_id = 0;

  bool operator==(const QuadratureRecord&) const = default;
};

inline int sign_of(double x) { return x >= 0.0 ? 1 : -1; }

/// Wraps a phase into [0, 2pi).
double wrap_phase(double phase);

inline constexpr const char* kRecordCsvHeader = "party,setting_index,lo_phase_rad,x,s,trial_id";

/// Writes records with 9 significant digits per float.
void write_records_csv(const std::filesystem::path& path, std::span<const QuadratureRecord> records);
/// Throws std::runtime_error on a missing file, a bad header or a malformed/truncated row.
std::vector<QuadratureRecord> read_records_csv(const std::filesystem::path& path);

/// <x^theta|_A rho |x^theta>_A as an (unnormalized) operator on Bob's mode.
CMatrix bob_conditional(const TwoModeState& state, double theta, double x);

struct CollapseResult {
  double x;
  int s;
  DensityMatrix bob_state;
};

/// Samples Alice's outcome from her marginal at phase theta and returns Bob's
/// normalized post-measurement state. Outcomes whose marginal density falls
/// below 1e-300 are redrawn.
CollapseResult alice_measure_and_collapse(const TwoModeState& state, double theta,
                                          const QuadratureSampler& sampler, Rng& rng);

/// Idealized coarse-grained conditioned state of a pure split photon (2x2).
DensityMatrix conditioned_state_ideal(double R, double theta, int s);

/// Closed-form qubit-restricted conditioned state including source
/// admixtures, Alice loss and phase jitter. Evaluated exactly as written with
/// the raw source weights, so its trace is one only when p0 + p1 + p2 = 1.
DensityMatrix conditioned_state_full(const SourceParams& source, const NoiseParams& noise, double R,
                                     double theta, int s);

/// Closed-form qubit-restricted unconditioned state of Bob.
DensityMatrix unconditioned_state_full(const SourceParams& source, double R);

/// Integrals of psi_a psi_b over the half line of sign s, all a, b < levels.
/// Adaptive Gauss-Legendre on [0, 8]; the negative half line follows by parity.
Eigen::MatrixXd half_line_overlaps(int levels, int s);

struct ConditionedState {
  double probability;   ///< P(s | theta)
  DensityMatrix state;  ///< normalized, full truncation
};

/// Numerical route to Bob's conditioned state: coarse-grains Alice's outcome
/// on the half line, then averages over Gaussian LO jitter. `lossy` must
/// already include Alice's loss.
ConditionedState conditioned_state_numeric(const TwoModeState& lossy, double theta, double delta_theta, int s);

}  // namespace steerkit
