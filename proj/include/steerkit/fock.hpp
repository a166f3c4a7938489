#pragma once

#include <Eigen/Dense>

#include <complex>
#include <string>

#include <json.hpp>

namespace steerkit {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

/// Number of retained Fock levels |0>..|dim-1>. Four levels keep one guard
/// level above the two-photon physics of a heralded source.
inline constexpr int kDefaultFockLevels = 4;

class FockDim {
 public:
  explicit FockDim(int levels = kDefaultFockLevels);

  int value() const noexcept { return levels_; }
  int max_photons() const noexcept { return levels_ - 1; }
  bool operator==(const FockDim&) const = default;

 private:
  int levels_;
};

enum class Party { A, B };

/// Single-mode state on a truncated Fock space, stored as a complex Hermitian
/// matrix. Post-projection (unnormalized) instances carry normalized() == false.
class DensityMatrix {
 public:
  /// Throws std::invalid_argument for non-square or non-Hermitian input, and
  /// for normalized == true with |Tr - 1| > 1e-10. The stored matrix is the
  /// Hermitian part of the input.
  explicit DensityMatrix(const CMatrix& elements, bool normalized = true);

  static DensityMatrix fock(int n, FockDim dim);
  static DensityMatrix maximally_mixed(FockDim dim);
  static DensityMatrix pure(const CVector& amplitudes);
  static DensityMatrix diagonal(const Eigen::VectorXd& populations);

  int dim() const noexcept { return static_cast<int>(m_.rows()); }
  const CMatrix& matrix() const noexcept { return m_; }
  Complex operator()(int row, int col) const { return m_(row, col); }
  bool normalized() const noexcept { return normalized_; }

  double trace() const { return m_.trace().real(); }
  double purity() const;
  double min_eigenvalue() const;

  /// Returns the state divided by its trace. Throws if the trace is not positive.
  DensityMatrix renormalized() const;

  /// Zero-pads (or truncates) to a different number of levels without renormalizing.
  DensityMatrix resized(int levels) const;

 private:
  CMatrix m_;
  bool normalized_;
};

/// Joint Alice-Bob state; basis index a * dim_b + b for |n_A = a>|n_B = b>.
class TwoModeState {
 public:
  TwoModeState(const CMatrix& elements, int dim_a, int dim_b);

  int dim_a() const noexcept { return dim_a_; }
  int dim_b() const noexcept { return dim_b_; }
  const CMatrix& matrix() const noexcept { return m_; }
  int index(int a, int b) const noexcept { return a * dim_b_ + b; }
  Complex element(int a, int b, int a2, int b2) const { return m_(index(a, b), index(a2, b2)); }

  double trace() const { return m_.trace().real(); }
  double purity() const;
  double min_eigenvalue() const;

 private:
  CMatrix m_;
  int dim_a_;
  int dim_b_;
};

/// Heralded-source photon-number weights. p_h is carried as metadata only.
struct SourceParams {
  double p0 = 0.120;
  double p1 = 0.857;
  double p2 = 0.02;
  double p_h = 0.004;

  static SourceParams defaults() { return {}; }
  static SourceParams single_photon() { return {0.0, 1.0, 0.0, 0.0}; }

  /// Throws std::invalid_argument on a weight outside [0,1] or a sum above 1 + 1e-9.
  void validate() const;
  /// Same weights divided by p0 + p1 + p2 (p_h set to 0).
  SourceParams normalized() const;
  double total() const noexcept { return p0 + p1 + p2; }
};

/// Incoherent vacuum/one/two-photon mixture, renormalized over (p0, p1, p2).
DensityMatrix source_state(const SourceParams& params, FockDim dim = FockDim{});

/// Beam splitter of reflectivity R with vacuum in the second port:
/// c^dagger -> sqrt(R) b^dagger - sqrt(1-R) a^dagger (A transmitted to Alice,
/// B reflected to Bob). This sign is the phase convention for everything downstream.
TwoModeState beamsplit(const DensityMatrix& input, double reflectivity);

DensityMatrix partial_trace(const TwoModeState& state, Party keep);

/// {|0>,|1>} block divided by renorm. The result is flagged normalized when its
/// trace is within 1e-9 of one.
DensityMatrix restrict_qubit(const DensityMatrix& rho, double renorm);

/// Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2 of normalized states.
double fidelity(const DensityMatrix& a, const DensityMatrix& b);

/// Half the trace norm of a - b.
double trace_distance(const DensityMatrix& a, const DensityMatrix& b);

/// e^{i angle n} rho e^{-i angle n}: rotates phase space by +angle.
DensityMatrix phase_rotate(const DensityMatrix& rho, double angle);

nlohmann::json to_json(const DensityMatrix& rho);
DensityMatrix density_from_json(const nlohmann::json& j);

}  // namespace steerkit
