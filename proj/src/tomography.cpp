#include "steerkit/tomography.hpp"

#include "steerkit/channels.hpp"
#include "steerkit/numerics.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace steerkit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::uint64_t kBootstrapTag = 0xB0075712;

// Packed Hermitian layout shared by PovmTable and the MLE loop.
std::vector<double> pack_hermitian(const CMatrix& m, bool weight_off_diagonal) {
  const int d = static_cast<int>(m.rows());
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(d) * d);
  for (int n = 0; n < d; ++n) out.push_back(m(n, n).real());
  const double w = weight_off_diagonal ? 2.0 : 1.0;
  for (int n = 0; n < d; ++n)
    for (int k = n + 1; k < d; ++k) {
      out.push_back(w * m(n, k).real());
      out.push_back(w * m(n, k).imag());
    }
  return out;
}

CMatrix unpack_hermitian(std::span<const double> v, int d) {
  CMatrix m(d, d);
  std::size_t i = 0;
  for (int n = 0; n < d; ++n) m(n, n) = v[i++];
  for (int n = 0; n < d; ++n)
    for (int k = n + 1; k < d; ++k) {
      m(n, k) = Complex(v[i], v[i + 1]);
      m(k, n) = Complex(v[i], -v[i + 1]);
      i += 2;
    }
  return m;
}

double dot(std::span<const double> a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

CMatrix apply_adjoint_loss(const CMatrix& op, double eta) {
  if (eta == 1.0) return op;
  const int d = static_cast<int>(op.rows());
  CMatrix out = CMatrix::Zero(d, d);
  for (const CMatrix& k : loss_kraus(eta, d - 1, d)) out += k.adjoint() * op * k;
  return out;
}

}  // namespace

void BinningSpec::validate() const {
  if (phase_bins < 1 || x_bins < 1) throw std::invalid_argument("BinningSpec: bin counts must be positive");
  if (!(x_max > x_min)) throw std::invalid_argument("BinningSpec: x_max must exceed x_min");
}

void BinnedCounts::add(double lo_phase, double x) {
  if (!(x >= spec.x_min && x < spec.x_max)) {
    ++dropped;
    return;
  }
  const double phase = wrap_phase(lo_phase);
  const int pb = std::min(spec.phase_bins - 1, static_cast<int>(phase / kTwoPi * spec.phase_bins));
  const int xb = std::min(spec.x_bins - 1, static_cast<int>((x - spec.x_min) / (spec.x_max - spec.x_min) * spec.x_bins));
  ++counts[static_cast<std::size_t>(pb) * spec.x_bins + xb];
  ++total;
}

BinnedCounts& BinnedCounts::operator+=(const BinnedCounts& other) {
  if (!(other.spec == spec)) throw std::invalid_argument("BinnedCounts: binning mismatch");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  total += other.total;
  dropped += other.dropped;
  return *this;
}

int BinnedCounts::occupied_phase_bins() const {
  int occupied = 0;
  for (int pb = 0; pb < spec.phase_bins; ++pb) {
    for (int xb = 0; xb < spec.x_bins; ++xb) {
      if (counts[static_cast<std::size_t>(pb) * spec.x_bins + xb] > 0) {
        ++occupied;
        break;
      }
    }
  }
  return occupied;
}

BinnedCounts bin_records(std::span<const QuadratureRecord> records, const BinningSpec& spec) {
  spec.validate();
  BinnedCounts out(spec);
  for (const QuadratureRecord& r : records) out.add(r.lo_phase, r.x);
  return out;
}

std::vector<std::size_t> phase_coverage(std::span<const QuadratureRecord> records, int bins) {
  if (bins < 1) throw std::invalid_argument("phase_coverage: bins must be positive");
  std::vector<std::size_t> hist(bins, 0);
  for (const QuadratureRecord& r : records)
    ++hist[std::min(bins - 1, static_cast<int>(wrap_phase(r.lo_phase) / kTwoPi * bins))];
  return hist;
}

CMatrix povm_element(double x, double phi, double eta, FockDim dim) {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("povm_element: eta must lie in (0,1]");
  const int d = dim.value();
  std::vector<double> psi(d);
  hermite_functions(x, psi);
  CMatrix ideal(d, d);
  for (int n = 0; n < d; ++n)
    for (int m = 0; m < d; ++m) ideal(n, m) = std::polar(psi[n] * psi[m], (n - m) * phi);
  return apply_adjoint_loss(ideal, eta);
}

PovmTable::PovmTable(const BinningSpec& spec, double eta, FockDim dim)
    : spec_(spec), eta_(eta), levels_(dim.value()), stride_(dim.value() * dim.value()) {
  spec.validate();
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("PovmTable: eta must lie in (0,1]");
  const int d = levels_;
  const QuadratureRule& gl = gauss_legendre(12);
  const double width = (spec.x_max - spec.x_min) / spec.x_bins;
  std::vector<double> psi(d);

  std::vector<Eigen::MatrixXd> x_integrals(spec.x_bins, Eigen::MatrixXd::Zero(d, d));
  for (int xb = 0; xb < spec.x_bins; ++xb) {
    const double mid = spec.x_min + (xb + 0.5) * width;
    for (std::size_t g = 0; g < gl.nodes.size(); ++g) {
      hermite_functions(mid + 0.5 * width * gl.nodes[g], psi);
      const double w = 0.5 * width * gl.weights[g];
      for (int n = 0; n < d; ++n)
        for (int m = 0; m < d; ++m) x_integrals[xb](n, m) += w * psi[n] * psi[m];
    }
  }

  const double dphi = kTwoPi / spec.phase_bins;
  packed_.reserve(static_cast<std::size_t>(spec.cells()) * stride_);
  for (int pb = 0; pb < spec.phase_bins; ++pb) {
    const double lo = pb * dphi;
    const double hi = lo + dphi;
    // Bin average of e^{i k phi} for k = n - m.
    std::vector<Complex> phase_avg(2 * d - 1);
    for (int k = -(d - 1); k <= d - 1; ++k) {
      phase_avg[k + d - 1] = k == 0 ? Complex(1.0)
                                    : (std::polar(1.0, k * hi) - std::polar(1.0, k * lo)) / (Complex(0.0, k) * dphi);
    }
    for (int xb = 0; xb < spec.x_bins; ++xb) {
      CMatrix ideal(d, d);
      for (int n = 0; n < d; ++n)
        for (int m = 0; m < d; ++m) ideal(n, m) = x_integrals[xb](n, m) * phase_avg[n - m + d - 1];
      const std::vector<double> p = pack_hermitian(apply_adjoint_loss(ideal, eta), false);
      packed_.insert(packed_.end(), p.begin(), p.end());
    }
  }
}

CMatrix PovmTable::cell(int phase_bin, int x_bin) const {
  return unpack_hermitian(packed(static_cast<std::size_t>(phase_bin) * spec_.x_bins + x_bin), levels_);
}

nlohmann::json to_json(const MleResult& result) {
  return {{"iterations", result.iterations},
          {"log_likelihood", result.log_likelihood},
          {"converged", result.converged},
          {"phase_coverage_ok", result.phase_coverage_ok},
          {"dilution_steps", result.dilution_steps}};
}

double log_likelihood(const BinnedCounts& data, const PovmTable& povm, const DensityMatrix& rho) {
  const std::vector<double> r = pack_hermitian(rho.matrix(), true);
  double ll = 0.0;
  for (std::size_t c = 0; c < data.counts.size(); ++c) {
    if (data.counts[c] == 0) continue;
    ll += data.counts[c] * std::log(std::max(dot(povm.packed(c), r), 1e-300));
  }
  return ll;
}

MleResult mle_reconstruct(const BinnedCounts& data, const PovmTable& povm, const MleOptions& options,
                          const DensityMatrix* start) {
  if (!(data.spec == povm.spec())) throw std::invalid_argument("mle_reconstruct: binning does not match POVM table");
  if (data.total == 0) throw std::invalid_argument("mle_reconstruct: no in-range records");
  const int d = povm.levels();
  const int occupied = data.occupied_phase_bins();
  if (occupied < std::min(2 * d - 1, data.spec.phase_bins))
    throw std::invalid_argument("mle_reconstruct: too few LO phases to identify the state (" +
                                std::to_string(occupied) + " phase bins occupied)");

  std::vector<std::size_t> active;
  std::vector<double> weight;
  for (std::size_t c = 0; c < data.counts.size(); ++c) {
    if (data.counts[c] == 0) continue;
    active.push_back(c);
    weight.push_back(static_cast<double>(data.counts[c]));
  }
  const double n_total = static_cast<double>(data.total);

  CMatrix rho = start ? start->matrix() : CMatrix(CMatrix::Identity(d, d) / static_cast<double>(d));
  if (rho.rows() != d) throw std::invalid_argument("mle_reconstruct: start state has the wrong truncation");
  rho /= rho.trace().real();

  std::vector<double> probs(active.size());
  const auto evaluate = [&](const CMatrix& state, std::vector<double>& p) {
    const std::vector<double> r = pack_hermitian(state, true);
    double ll = 0.0;
    for (std::size_t i = 0; i < active.size(); ++i) {
      p[i] = std::max(dot(povm.packed(active[i]), r), 1e-300);
      ll += weight[i] * std::log(p[i]);
    }
    return ll;
  };

  MleResult result{DensityMatrix(rho), 0, 0.0, false, true, 0, {}};
  result.phase_coverage_ok = occupied >= 0.9 * data.spec.phase_bins;
  double ll = evaluate(rho, probs);
  if (options.keep_trace) result.log_likelihood_trace.push_back(ll);

  std::vector<double> candidate_probs(active.size());
  std::vector<double> r_packed(static_cast<std::size_t>(povm.stride()));
  const CMatrix identity = CMatrix::Identity(d, d);
  int it = 0;
  for (; it < options.max_iter; ++it) {
    std::fill(r_packed.begin(), r_packed.end(), 0.0);
    for (std::size_t i = 0; i < active.size(); ++i) {
      const double w = weight[i] / (n_total * probs[i]);
      const std::span<const double> pi = povm.packed(active[i]);
      for (std::size_t k = 0; k < r_packed.size(); ++k) r_packed[k] += w * pi[k];
    }
    const CMatrix r_op = unpack_hermitian(r_packed, d);

    CMatrix candidate = r_op * rho * r_op;
    candidate /= candidate.trace().real();
    double candidate_ll = evaluate(candidate, candidate_probs);
    if (candidate_ll < ll) {
      // Diluted step N[(I + eps R) rho (I + eps R)] increases the likelihood for small eps.
      ++result.dilution_steps;
      double eps = 1.0;
      for (; eps > 1e-9; eps *= 0.5) {
        const CMatrix step = identity + eps * r_op;
        candidate = step * rho * step;
        candidate /= candidate.trace().real();
        candidate_ll = evaluate(candidate, candidate_probs);
        if (candidate_ll >= ll) break;
      }
      if (candidate_ll < ll) {
        result.converged = true;
        break;
      }
    }
    const double gain = candidate_ll - ll;
    rho = 0.5 * (candidate + candidate.adjoint());
    ll = candidate_ll;
    probs.swap(candidate_probs);
    if (options.keep_trace) result.log_likelihood_trace.push_back(ll);
    if (gain / n_total < options.tol) {
      ++it;
      result.converged = true;
      break;
    }
  }
  result.state = DensityMatrix(rho / rho.trace().real());
  result.iterations = it;
  result.log_likelihood = ll;
  return result;
}

MleResult mle_reconstruct(std::span<const QuadratureRecord> records, FockDim dim, double eta_B,
                          const MleOptions& options, const BinningSpec& spec) {
  const PovmTable povm(spec, eta_B, dim);
  return mle_reconstruct(bin_records(records, spec), povm, options);
}

double wigner_point(const DensityMatrix& rho, double q, double p) {
  const int d = rho.dim();
  const Complex alpha_conj(q / std::numbers::sqrt2, -p / std::numbers::sqrt2);
  const double r2 = 0.5 * (q * q + p * p);  // |alpha|^2
  const double x = 4.0 * r2;
  const double gauss = std::exp(-2.0 * r2) / std::numbers::pi;
  double w = 0.0;
  // Kernel of |m><n| for m >= n:
  // (-1)^n sqrt(n!/m!) (2 alpha*)^(m-n) e^{-2|alpha|^2} L_n^{(m-n)}(4|alpha|^2) / pi.
  for (int k = 0; k < d; ++k) {
    Complex power = std::pow(2.0 * alpha_conj, k);
    for (int n = 0; n + k < d; ++n) {
      const int m = n + k;
      double lag_prev = 1.0;
      double lag = 1.0;
      if (n >= 1) {
        lag = 1.0 + k - x;
        for (int j = 1; j < n; ++j) {
          const double next = ((2.0 * j + 1.0 + k - x) * lag - (j + k) * lag_prev) / (j + 1.0);
          lag_prev = lag;
          lag = next;
        }
      }
      double ratio = 1.0;  // sqrt(n!/m!)
      for (int i = n + 1; i <= m; ++i) ratio /= std::sqrt(static_cast<double>(i));
      const Complex kernel = (n % 2 == 0 ? 1.0 : -1.0) * ratio * power * gauss * lag;
      if (k == 0) w += rho(m, n).real() * kernel.real();
      else w += 2.0 * (rho(m, n) * kernel).real();
    }
  }
  return w;
}

WignerGrid wigner(const DensityMatrix& rho, const WignerGridSpec& spec) {
  if (spec.points < 2 || !(spec.half_range > 0.0)) throw std::invalid_argument("wigner: need >= 2 points and range > 0");
  WignerGrid grid;
  const double step = 2.0 * spec.half_range / (spec.points - 1);
  for (int i = 0; i < spec.points; ++i) {
    grid.q_axis.push_back(-spec.half_range + i * step);
    grid.p_axis.push_back(-spec.half_range + i * step);
  }
  grid.values.resize(spec.points, spec.points);
  for (int i = 0; i < spec.points; ++i)
    for (int j = 0; j < spec.points; ++j) grid.values(i, j) = wigner_point(rho, grid.q_axis[i], grid.p_axis[j]);
  return grid;
}

double WignerGrid::integral() const {
  if (q_axis.size() < 2 || p_axis.size() < 2) return 0.0;
  const double dq = q_axis[1] - q_axis[0];
  const double dp = p_axis[1] - p_axis[0];
  // Trapezoid weights; the kernels decay like Gaussians so edges contribute little.
  double sum = 0.0;
  const Eigen::Index nq = values.rows();
  const Eigen::Index np = values.cols();
  for (Eigen::Index i = 0; i < nq; ++i) {
    const double wi = (i == 0 || i == nq - 1) ? 0.5 : 1.0;
    for (Eigen::Index j = 0; j < np; ++j) {
      const double wj = (j == 0 || j == np - 1) ? 0.5 : 1.0;
      sum += wi * wj * values(i, j);
    }
  }
  return sum * dq * dp;
}

void write_wigner_csv(std::ostream& out, const WignerGrid& grid) {
  out << "q,p,w\n";
  char buf[96];
  for (std::size_t i = 0; i < grid.q_axis.size(); ++i)
    for (std::size_t j = 0; j < grid.p_axis.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.12g\n", grid.q_axis[i], grid.p_axis[j],
                    grid.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      out << buf;
    }
}

SteeringEstimate estimate_steering(const CellCounts& cells, const SteeringSettings& settings, const PovmTable& povm,
                                   const MleOptions& options, const SteeringEstimate* warm_start, bool allow_empty) {
  settings.validate();
  SteeringEstimate est;
  BinnedCounts pooled(povm.spec());
  for (int j = 0; j < settings.n; ++j) {
    std::size_t setting_records = 0;
    for (int s : {1, -1}) {
      const auto it = cells.find({j, s});
      if (it != cells.end()) setting_records += it->second.records();
    }
    for (int s : {1, -1}) {
      const CellKey key{j, s};
      const auto it = cells.find(key);
      const bool empty = it == cells.end() || it->second.total == 0;
      if (empty) {
        if (!allow_empty)
          throw std::runtime_error("steering analysis: empty cell (setting " + std::to_string(j) + ", sign " +
                                   std::to_string(s) + ")");
        est.qubit_cells.emplace(key, ConditionedCell{0.0, DensityMatrix::maximally_mixed(FockDim{2})});
        continue;
      }
      pooled += it->second;
      const DensityMatrix* start = nullptr;
      if (warm_start) {
        const auto w = warm_start->conditioned.find(key);
        if (w != warm_start->conditioned.end()) start = &w->second.state;
      }
      MleResult rec = mle_reconstruct(it->second, povm, options, start);
      const double block = rec.state.matrix().topLeftCorner(2, 2).trace().real();
      const double probability = static_cast<double>(it->second.records()) / static_cast<double>(setting_records);
      est.qubit_cells.emplace(key, ConditionedCell{probability, restrict_qubit(rec.state, block)});
      est.conditioned.emplace(key, std::move(rec));
    }
  }
  const DensityMatrix* start = warm_start && warm_start->unconditioned ? &warm_start->unconditioned->state : nullptr;
  MleResult unconditioned = mle_reconstruct(pooled, povm, options, start);
  const double block = unconditioned.state.matrix().topLeftCorner(2, 2).trace().real();
  est.unconditioned_qubit = restrict_qubit(unconditioned.state, block);
  est.unconditioned = std::move(unconditioned);
  est.per_setting = steering_terms(est.qubit_cells, settings);
  double sum = 0.0;
  for (double t : est.per_setting) sum += t;
  est.lhs = sum / settings.n;
  est.rhs = steering_rhs_state(*est.unconditioned_qubit, settings);
  return est;
}

BinnedCounts resample_counts(const BinnedCounts& counts, Rng& rng) {
  BinnedCounts out(counts.spec);
  out.total = counts.total;
  out.dropped = counts.dropped;
  long remaining = static_cast<long>(counts.total);
  double mass_left = static_cast<double>(counts.total);
  for (std::size_t c = 0; c < counts.counts.size() && remaining > 0; ++c) {
    if (counts.counts[c] == 0) continue;
    const double p = std::min(1.0, counts.counts[c] / mass_left);
    const long k = p >= 1.0 ? remaining : std::binomial_distribution<long>(remaining, p)(rng);
    out.counts[c] = static_cast<std::uint32_t>(k);
    remaining -= k;
    mass_left -= counts.counts[c];
  }
  return out;
}

BootstrapResult bootstrap_violation(const CellCounts& cells, const SteeringSettings& settings, const PovmTable& povm,
                                    const SteeringEstimate& point, int resamples, std::uint64_t seed,
                                    const MleOptions& options, bool allow_empty) {
  if (resamples < 1) throw std::invalid_argument("bootstrap: at least one resample is required");
  BootstrapResult result;
  for (const auto& [key, c] : cells) {
    if (c.records() > 0 && c.records() < 100) {
      result.warnings.push_back("cell (" + std::to_string(key.first) + "," + std::to_string(key.second) + ") has only " +
                                std::to_string(c.records()) + " records");
    }
  }
  std::vector<double> lhs(resamples), rhs(resamples);
  parallel_for(static_cast<std::size_t>(resamples), [&](std::size_t b) {
    Rng rng(derive_seed(seed, kBootstrapTag, b));
    CellCounts redrawn;
    for (const auto& [key, c] : cells) redrawn.emplace(key, resample_counts(c, rng));
    const SteeringEstimate est = estimate_steering(redrawn, settings, povm, options, &point, allow_empty);
    lhs[b] = est.lhs;
    rhs[b] = est.rhs;
  });
  const auto moments = [&](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  };
  result.violations.resize(resamples);
  for (int b = 0; b < resamples; ++b) result.violations[b] = lhs[b] - rhs[b];
  double unused = 0.0;
  moments(result.violations, result.mean, result.stddev);
  moments(lhs, unused, result.lhs_std);
  moments(rhs, unused, result.rhs_std);
  return result;
}

}  // namespace steerkit
