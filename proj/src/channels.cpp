#include "steerkit/channels.hpp"

#include "steerkit/numerics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace steerkit {

namespace {

void require_unit_interval(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0,1]");
}

double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

}  // namespace

void NoiseParams::validate() const {
  require_unit_interval(eta_h, "eta_h");
  require_unit_interval(l_A, "l_A");
  require_unit_interval(eta_B, "eta_B");
  if (!(delta_theta >= 0.0) || !std::isfinite(delta_theta)) throw std::invalid_argument("delta_theta must be >= 0");
}

std::vector<CMatrix> loss_kraus(double eta, int max_n, int levels) {
  require_unit_interval(eta, "loss_kraus: eta");
  if (max_n < 0 || max_n > levels - 1) throw std::invalid_argument("loss_kraus: max_n must be within the truncation");
  std::vector<CMatrix> ops;
  ops.reserve(max_n + 1);
  for (int k = 0; k <= max_n; ++k) {
    CMatrix op = CMatrix::Zero(levels, levels);
    for (int n = k; n <= max_n; ++n) {
      op(n - k, n) = std::sqrt(binomial(n, k) * std::pow(eta, n - k) * std::pow(1.0 - eta, k));
    }
    ops.push_back(std::move(op));
  }
  return ops;
}

TwoModeState apply_loss_mode_A(const TwoModeState& state, double eta) {
  const int da = state.dim_a();
  const int db = state.dim_b();
  const CMatrix id_b = CMatrix::Identity(db, db);
  CMatrix out = CMatrix::Zero(da * db, da * db);
  for (const CMatrix& k : loss_kraus(eta, da - 1, da)) {
    CMatrix full = CMatrix::Zero(da * db, da * db);
    for (int a = 0; a < da; ++a)
      for (int a2 = 0; a2 < da; ++a2)
        if (k(a, a2) != 0.0) full.block(a * db, a2 * db, db, db) = k(a, a2) * id_b;
    out += full * state.matrix() * full.adjoint();
  }
  return TwoModeState(out, da, db);
}

TwoModeState apply_loss_mode_B(const TwoModeState& state, double eta) {
  const int da = state.dim_a();
  const int db = state.dim_b();
  CMatrix out = CMatrix::Zero(da * db, da * db);
  for (const CMatrix& k : loss_kraus(eta, db - 1, db)) {
    CMatrix full = CMatrix::Zero(da * db, da * db);
    for (int a = 0; a < da; ++a) full.block(a * db, a * db, db, db) = k;
    out += full * state.matrix() * full.adjoint();
  }
  return TwoModeState(out, da, db);
}

DensityMatrix apply_loss_single(const DensityMatrix& rho, double eta) {
  const int d = rho.dim();
  if (eta == 1.0) return rho;
  CMatrix out = CMatrix::Zero(d, d);
  for (const CMatrix& k : loss_kraus(eta, d - 1, d)) out += k * rho.matrix() * k.adjoint();
  return DensityMatrix(out, rho.normalized());
}

CMatrix gaussian_phase_average(const std::function<CMatrix(double)>& f, double theta, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("gaussian_phase_average: sigma must be >= 0");
  if (sigma == 0.0) return f(theta);
  const auto evaluate = [&](int nodes) {
    const QuadratureRule& rule = gauss_hermite(nodes);
    CMatrix sum;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const CMatrix term = rule.weights[i] * f(theta + std::numbers::sqrt2 * sigma * rule.nodes[i]);
      if (i == 0) sum = term; else sum += term;
    }
    return CMatrix(sum / std::sqrt(std::numbers::pi));
  };
  CMatrix previous = evaluate(21);
  for (int nodes = 42; nodes <= 336; nodes *= 2) {
    CMatrix current = evaluate(nodes);
    if ((current - previous).cwiseAbs().maxCoeff() <= 1e-9) return current;
    previous = std::move(current);
  }
  throw std::runtime_error("gaussian_phase_average: quadrature did not converge");
}

DensityMatrix phase_jitter_average(const std::function<DensityMatrix(double)>& statefn, double theta,
                                   double delta_theta) {
  if (!(delta_theta >= 0.0)) throw std::invalid_argument("phase_jitter_average: delta_theta must be >= 0");
  if (delta_theta == 0.0) return statefn(theta);
  bool normalized = true;
  const CMatrix avg = gaussian_phase_average(
      [&](double phase) {
        DensityMatrix s = statefn(phase);
        normalized = normalized && s.normalized();
        return s.matrix();
      },
      theta, delta_theta);
  return DensityMatrix(avg, normalized);
}

}  // namespace steerkit
