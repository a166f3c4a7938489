#include "steerkit/fock.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace steerkit {

namespace {

constexpr double kHermitianTol = 1e-12;
constexpr double kTraceTol = 1e-10;
constexpr double kPsdTol = 1e-10;

double max_abs(const CMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

// Largest deviation tolerated scales with the matrix magnitude so that
// unnormalized operators with large entries are not rejected spuriously.
void require_hermitian(const CMatrix& m, const char* what) {
  if (m.rows() != m.cols()) throw std::invalid_argument(std::string(what) + ": matrix is not square");
  const double scale = std::max(1.0, max_abs(m));
  if (max_abs(m - m.adjoint()) > kHermitianTol * scale)
    throw std::invalid_argument(std::string(what) + ": matrix is not Hermitian");
}

}  // namespace

FockDim::FockDim(int levels) : levels_(levels) {
  if (levels < 2) throw std::invalid_argument("FockDim: at least two levels are required");
}

DensityMatrix::DensityMatrix(const CMatrix& elements, bool normalized) : normalized_(normalized) {
  require_hermitian(elements, "DensityMatrix");
  if (elements.rows() < 1) throw std::invalid_argument("DensityMatrix: empty matrix");
  m_ = 0.5 * (elements + elements.adjoint());
  if (normalized && std::abs(m_.trace().real() - 1.0) > kTraceTol)
    throw std::invalid_argument("DensityMatrix: trace differs from one");
}

DensityMatrix DensityMatrix::fock(int n, FockDim dim) {
  if (n < 0 || n >= dim.value()) throw std::invalid_argument("DensityMatrix::fock: level outside truncation");
  CMatrix m = CMatrix::Zero(dim.value(), dim.value());
  m(n, n) = 1.0;
  return DensityMatrix(m);
}

DensityMatrix DensityMatrix::maximally_mixed(FockDim dim) {
  return DensityMatrix(CMatrix::Identity(dim.value(), dim.value()) / static_cast<double>(dim.value()));
}

DensityMatrix DensityMatrix::pure(const CVector& amplitudes) {
  const double norm = amplitudes.norm();
  if (norm == 0.0) throw std::invalid_argument("DensityMatrix::pure: zero vector");
  const CVector psi = amplitudes / norm;
  return DensityMatrix(psi * psi.adjoint());
}

DensityMatrix DensityMatrix::diagonal(const Eigen::VectorXd& populations) {
  CMatrix m = CMatrix::Zero(populations.size(), populations.size());
  for (Eigen::Index i = 0; i < populations.size(); ++i) m(i, i) = populations(i);
  return DensityMatrix(m, std::abs(populations.sum() - 1.0) <= kTraceTol);
}

double DensityMatrix::purity() const { return (m_ * m_).trace().real(); }

double DensityMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(m_, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

DensityMatrix DensityMatrix::renormalized() const {
  const double tr = trace();
  if (!(tr > 0.0)) throw std::runtime_error("DensityMatrix::renormalized: non-positive trace");
  return DensityMatrix(m_ / tr, true);
}

DensityMatrix DensityMatrix::resized(int levels) const {
  if (levels < 1) throw std::invalid_argument("DensityMatrix::resized: levels must be positive");
  CMatrix m = CMatrix::Zero(levels, levels);
  const int keep = std::min(levels, dim());
  m.topLeftCorner(keep, keep) = m_.topLeftCorner(keep, keep);
  const bool unit = std::abs(m.trace().real() - 1.0) <= kTraceTol;
  return DensityMatrix(m, normalized_ && unit);
}

TwoModeState::TwoModeState(const CMatrix& elements, int dim_a, int dim_b) : dim_a_(dim_a), dim_b_(dim_b) {
  if (dim_a < 1 || dim_b < 1 || elements.rows() != dim_a * dim_b)
    throw std::invalid_argument("TwoModeState: dimensions do not match the matrix");
  require_hermitian(elements, "TwoModeState");
  m_ = 0.5 * (elements + elements.adjoint());
  if (std::abs(m_.trace().real() - 1.0) > kTraceTol) throw std::invalid_argument("TwoModeState: trace differs from one");
}

double TwoModeState::purity() const { return (m_ * m_).trace().real(); }

double TwoModeState::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(m_, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

void SourceParams::validate() const {
  for (double p : {p0, p1, p2, p_h}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("SourceParams: probabilities must lie in [0,1]");
  }
  if (total() > 1.0 + 1e-9) throw std::invalid_argument("SourceParams: p0 + p1 + p2 exceeds one");
  if (total() < 1.0 - p_h - 1e-9) throw std::invalid_argument("SourceParams: p0 + p1 + p2 + p_h falls short of one");
}

SourceParams SourceParams::normalized() const {
  validate();
  const double s = total();
  return {p0 / s, p1 / s, p2 / s, 0.0};
}

DensityMatrix source_state(const SourceParams& params, FockDim dim) {
  if (dim.value() < 3) throw std::invalid_argument("source_state: two-photon term needs at least three levels");
  params.validate();
  const double s = params.total();
  if (!(s > 0.0)) throw std::invalid_argument("source_state: all weights are zero");
  Eigen::VectorXd pops = Eigen::VectorXd::Zero(dim.value());
  pops(0) = params.p0 / s;
  pops(1) = params.p1 / s;
  pops(2) = params.p2 / s;
  return DensityMatrix(DensityMatrix::diagonal(pops).matrix());
}

TwoModeState beamsplit(const DensityMatrix& input, double reflectivity) {
  if (!(reflectivity >= 0.0 && reflectivity <= 1.0)) throw std::invalid_argument("beamsplit: R must lie in [0,1]");
  const int d = input.dim();
  const double r = std::sqrt(reflectivity);
  const double t = -std::sqrt(1.0 - reflectivity);
  // Isometry |n> -> sum_k sqrt(C(n,k)) r^k t^(n-k) |n-k>_A |k>_B.
  CMatrix iso = CMatrix::Zero(d * d, d);
  for (int n = 0; n < d; ++n) {
    for (int k = 0; k <= n; ++k) {
      const double amp = std::sqrt(binomial(n, k)) * std::pow(r, k) * std::pow(t, n - k);
      iso((n - k) * d + k, n) = amp;
    }
  }
  const CMatrix joint = iso * input.matrix() * iso.adjoint();
  return TwoModeState(joint, d, d);
}

DensityMatrix partial_trace(const TwoModeState& state, Party keep) {
  const int da = state.dim_a();
  const int db = state.dim_b();
  if (keep == Party::B) {
    CMatrix out = CMatrix::Zero(db, db);
    for (int a = 0; a < da; ++a)
      for (int b = 0; b < db; ++b)
        for (int b2 = 0; b2 < db; ++b2) out(b, b2) += state.element(a, b, a, b2);
    return DensityMatrix(out);
  }
  CMatrix out = CMatrix::Zero(da, da);
  for (int a = 0; a < da; ++a)
    for (int a2 = 0; a2 < da; ++a2)
      for (int b = 0; b < db; ++b) out(a, a2) += state.element(a, b, a2, b);
  return DensityMatrix(out);
}

DensityMatrix restrict_qubit(const DensityMatrix& rho, double renorm) {
  if (!(renorm > 0.0)) throw std::invalid_argument("restrict_qubit: renormalization must be positive");
  const CMatrix block = rho.matrix().topLeftCorner(2, 2) / renorm;
  const bool unit = std::abs(block.trace().real() - 1.0) <= 1e-9;
  if (unit) return DensityMatrix(block / block.trace().real(), true);
  return DensityMatrix(block, false);
}

namespace {

CMatrix psd_sqrt(const CMatrix& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(m);
  Eigen::VectorXd ev = solver.eigenvalues();
  if (ev.minCoeff() < -kPsdTol) throw std::invalid_argument(std::string(what) + ": input is not positive semidefinite");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * ev.asDiagonal() * solver.eigenvectors().adjoint();
}

}  // namespace

double fidelity(const DensityMatrix& a, const DensityMatrix& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("fidelity: dimension mismatch");
  const CMatrix sa = psd_sqrt(a.matrix(), "fidelity");
  psd_sqrt(b.matrix(), "fidelity");
  const CMatrix inner = sa * b.matrix() * sa;
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(0.5 * (inner + inner.adjoint()), Eigen::EigenvaluesOnly);
  const double root_trace = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return std::clamp(root_trace * root_trace, 0.0, 1.0);
}

double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("trace_distance: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(a.matrix() - b.matrix(), Eigen::EigenvaluesOnly);
  return 0.5 * solver.eigenvalues().cwiseAbs().sum();
}

DensityMatrix phase_rotate(const DensityMatrix& rho, double angle) {
  CMatrix out = rho.matrix();
  for (int n = 0; n < rho.dim(); ++n)
    for (int m = 0; m < rho.dim(); ++m) out(n, m) *= std::polar(1.0, angle * (n - m));
  return DensityMatrix(out, rho.normalized());
}

nlohmann::json to_json(const DensityMatrix& rho) {
  nlohmann::json re = nlohmann::json::array();
  nlohmann::json im = nlohmann::json::array();
  for (int r = 0; r < rho.dim(); ++r) {
    nlohmann::json rr = nlohmann::json::array();
    nlohmann::json ii = nlohmann::json::array();
    for (int c = 0; c < rho.dim(); ++c) {
      rr.push_back(rho(r, c).real());
      ii.push_back(rho(r, c).imag());
    }
    re.push_back(std::move(rr));
    im.push_back(std::move(ii));
  }
  return {{"dim", rho.dim()}, {"re", re}, {"im", im}};
}

DensityMatrix density_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("dim") || !j.contains("re") || !j.contains("im"))
    throw std::invalid_argument("density matrix JSON needs dim, re and im");
  const int dim = j.at("dim").get<int>();
  const auto& re = j.at("re");
  const auto& im = j.at("im");
  if (dim < 1 || re.size() != static_cast<std::size_t>(dim) || im.size() != static_cast<std::size_t>(dim))
    throw std::invalid_argument("density matrix JSON: row count does not match dim");
  CMatrix m(dim, dim);
  for (int r = 0; r < dim; ++r) {
    if (re[r].size() != static_cast<std::size_t>(dim) || im[r].size() != static_cast<std::size_t>(dim))
      throw std::invalid_argument("density matrix JSON: column count does not match dim");
    for (int c = 0; c < dim; ++c) m(r, c) = Complex(re[r][c].get<double>(), im[r][c].get<double>());
  }
  return DensityMatrix(m, std::abs(m.trace().real() - 1.0) <= kTraceTol);
}

}  // namespace steerkit
