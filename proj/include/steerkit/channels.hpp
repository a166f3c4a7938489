#pragma once

#include "steerkit/fock.hpp"

#include <functional>
#include <numbers>
#include <vector>

namespace steerkit {

inline constexpr double kDegree = std::numbers::pi / 180.0;

/// Detection imperfections. Alice's total efficiency is derived, never stored.
struct NoiseParams {
  double eta_h = 0.96;               ///< Alice homodyne efficiency
  double l_A = 0.025;                ///< extra loss in Alice's apparatus
  double delta_theta = 3.9 * kDegree;  ///< RMS LO phase jitter [rad]
  double eta_B = 0.96;               ///< Bob detection efficiency (simulation knob)

  static NoiseParams defaults() { return {}; }
  static NoiseParams ideal() { return {1.0, 0.0, 0.0, 1.0}; }

  double eta_A() const noexcept { return eta_h * (1.0 - l_A); }
  void validate() const;
};

/// Photon-loss Kraus operators K_0..K_max_n on `levels` Fock levels, with
/// K_k[n-k, n] = sqrt(C(n,k) eta^(n-k) (1-eta)^k).
std::vector<CMatrix> loss_kraus(double eta, int max_n, int levels);
inline std::vector<CMatrix> loss_kraus(double eta, int max_n) { return loss_kraus(eta, max_n, max_n + 1); }

TwoModeState apply_loss_mode_A(const TwoModeState& state, double eta);
TwoModeState apply_loss_mode_B(const TwoModeState& state, double eta);
DensityMatrix apply_loss_single(const DensityMatrix& rho, double eta);

/// Gaussian average of a matrix-valued function of the phase,
/// integral dθ' N(θ'; theta, sigma^2) f(θ'), by Gauss-Hermite quadrature.
/// Starts at 21 nodes and doubles until two successive rules agree to 1e-9
/// (max-abs elementwise); throws std::runtime_error if 336 nodes do not settle.
CMatrix gaussian_phase_average(const std::function<CMatrix(double)>& f, double theta, double sigma);

/// Phase-jitter average of a state-valued function. delta_theta == 0 returns
/// statefn(theta) exactly.
DensityMatrix phase_jitter_average(const std::function<DensityMatrix(double)>& statefn, double theta,
                                   double delta_theta);

}  // namespace steerkit
