#pragma once

#include "steerkit/fock.hpp"
#include "steerkit/homodyne.hpp"
#include "steerkit/steering.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace steerkit {

/// Histogram layout for binned maximum likelihood: phase bins over [0, 2pi)
/// times uniform x bins over [x_min, x_max].
struct BinningSpec {
  int phase_bins = 30;
  int x_bins = 141;
  double x_min = -7.0;
  double x_max = 7.0;

  void validate() const;
  int cells() const noexcept { return phase_bins * x_bins; }
  bool operator==(const BinningSpec&) const = default;
};

/// Phase-major counts (phase_bin * x_bins + x_bin). Out-of-range outcomes are
/// dropped and counted separately.
struct BinnedCounts {
  BinningSpec spec;
  std::vector<std::uint32_t> counts;
  std::size_t total = 0;
  std::size_t dropped = 0;

  explicit BinnedCounts(const BinningSpec& s = {}) : spec(s), counts(static_cast<std::size_t>(s.cells()), 0) {}
  void add(double lo_phase, double x);
  BinnedCounts& operator+=(const BinnedCounts& other);
  std::size_t records() const noexcept { return total + dropped; }
  /// Number of phase bins holding at least one in-range count.
  int occupied_phase_bins() const;
};

BinnedCounts bin_records(std::span<const QuadratureRecord> records, const BinningSpec& spec = {});

/// Per-bin occupancy of LO phases over [0, 2pi).
std::vector<std::size_t> phase_coverage(std::span<const QuadratureRecord> records, int bins = 30);

/// Lossy homodyne POVM density at outcome x and LO phase phi:
/// sum_k K_k^dagger |x^phi><x^phi| K_k, so Tr[Pi_eta rho] = Tr[Pi_1 loss_eta(rho)].
CMatrix povm_element(double x, double phi, double eta, FockDim dim);

/// Cell POVMs for a binning: x-bin integrals of psi_n psi_m times the
/// phase-bin average of e^{i(n-m) phi}, then the loss map. Stored packed as
/// real vectors so that Tr[Pi rho] is a dot product.
class PovmTable {
 public:
  PovmTable(const BinningSpec& spec, double eta, FockDim dim);

  const BinningSpec& spec() const noexcept { return spec_; }
  double eta() const noexcept { return eta_; }
  int levels() const noexcept { return levels_; }
  CMatrix cell(int phase_bin, int x_bin) const;

  /// Packed layout: [Re diag (levels)] then (Re, Im) of each upper off-diagonal element.
  std::span<const double> packed(std::size_t cell_index) const {
    return {packed_.data() + cell_index * stride_, static_cast<std::size_t>(stride_)};
  }
  int stride() const noexcept { return stride_; }

 private:
  BinningSpec spec_;
  double eta_;
  int levels_;
  int stride_;
  std::vector<double> packed_;
};

struct MleOptions {
  int max_iter = 2000;
  double tol = 1e-10;  ///< stop when the log-likelihood gain per sample drops below this
  bool keep_trace = false;
};

struct MleResult {
  DensityMatrix state;
  int iterations = 0;
  double log_likelihood = 0.0;
  bool converged = false;
  bool phase_coverage_ok = true;  ///< false when < 90% of phase bins are occupied
  int dilution_steps = 0;         ///< iterations that needed the diluted update
  std::vector<double> log_likelihood_trace;
};

nlohmann::json to_json(const MleResult& result);

/// Iterative R rho R reconstruction from binned counts, starting from the
/// maximally mixed state unless `start` is given. Each accepted iterate has
/// log-likelihood no lower than the previous one. Throws std::invalid_argument
/// for an empty histogram or fewer occupied phase bins than the truncation
/// can identify (2 * levels - 1).
MleResult mle_reconstruct(const BinnedCounts& data, const PovmTable& povm, const MleOptions& options = {},
                          const DensityMatrix* start = nullptr);

MleResult mle_reconstruct(std::span<const QuadratureRecord> records, FockDim dim, double eta_B,
                          const MleOptions& options = {}, const BinningSpec& spec = {});

double log_likelihood(const BinnedCounts& data, const PovmTable& povm, const DensityMatrix& rho);

struct WignerGridSpec {
  int points = 101;
  double half_range = 4.0;
};

struct WignerGrid {
  std::vector<double> q_axis;
  std::vector<double> p_axis;
  Eigen::MatrixXd values;  ///< values(i, j) = W(q_i, p_j)

  double integral() const;
  double min() const { return values.minCoeff(); }
};

/// Wigner function with hbar = 1 (vacuum W(0,0) = 1/pi), from closed-form
/// Laguerre kernels of the Fock basis.
double wigner_point(const DensityMatrix& rho, double q, double p);
WignerGrid wigner(const DensityMatrix& rho, const WignerGridSpec& spec = {});
void write_wigner_csv(std::ostream& out, const WignerGrid& grid);

// --- Steering analysis of Bob's records ---------------------------------------------------------

using CellCounts = std::map<CellKey, BinnedCounts>;

struct SteeringEstimate {
  std::map<CellKey, MleResult> conditioned;  ///< full-truncation reconstructions (non-empty cells)
  std::optional<MleResult> unconditioned;
  ConditionedMap qubit_cells;                ///< P(s|theta_j) and qubit-restricted states
  std::optional<DensityMatrix> unconditioned_qubit;
  double lhs = 0.0;
  double rhs = 0.0;
  std::vector<double> per_setting;
};

/// Reconstructs every (setting, sign) cell and the pooled unconditioned state,
/// restricts them to the qubit subspace and evaluates both sides of the
/// steering inequality. P(s|theta_j) comes from the record counts. Empty cells
/// throw unless allow_empty, in which case they enter with P = 0.
SteeringEstimate estimate_steering(const CellCounts& cells, const SteeringSettings& settings,
                                   const PovmTable& povm, const MleOptions& options,
                                   const SteeringEstimate* warm_start = nullptr, bool allow_empty = false);

struct BootstrapResult {
  double mean = 0.0;
  double stddev = 0.0;
  double lhs_std = 0.0;
  double rhs_std = 0.0;
  std::vector<double> violations;
  std::vector<std::string> warnings;
};

/// Multinomial redraw of a histogram with its own total: identical in
/// distribution to resampling the underlying records with replacement.
BinnedCounts resample_counts(const BinnedCounts& counts, Rng& rng);

/// Bootstrap of the empirical violation: every resample redraws each cell,
/// re-runs the reconstructions (warm-started from `point`) and recomputes
/// LHS - RHS. Resample b uses the stream derive_seed(seed, tag, b), so the
/// result does not depend on the thread count.
BootstrapResult bootstrap_violation(const CellCounts& cells, const SteeringSettings& settings,
                                    const PovmTable& povm, const SteeringEstimate& point, int resamples,
                                    std::uint64_t seed, const MleOptions& options, bool allow_empty = false);

}  // namespace steerkit
