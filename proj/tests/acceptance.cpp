// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "steerkit/channels.hpp"
#include "steerkit/cli.hpp"
#include "steerkit/experiment.hpp"
#include "steerkit/homodyne.hpp"
#include "steerkit/steering.hpp"
#include "steerkit/tomography.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>

using namespace steerkit;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

double field(const std::string& text, const std::string& key) {
  const auto at = text.find(key + "=");
  if (at == std::string::npos) throw std::runtime_error("missing " + key + " in: " + text);
  return std::stod(text.substr(at + key.size() + 1));
}

// The honest R = 0.38 run is shared by criteria 5 and 8.
std::optional<RunArtifacts> honest_run;

const RunArtifacts& honest() {
  if (!honest_run) {
    ExperimentConfig c;
    c.R = 0.38;
    c.samples_per_setting = 20000;
    c.seed = 20240601;
    honest_run = run_honest(c);
  }
  return *honest_run;
}

Outcome analytic_violation() {
  std::ostringstream out, err;
  const int code = cli::run({"steer", "--analytic", "--R", "0.38"}, out, err);
  if (code != 0) return {false, "steer exited with " + std::to_string(code) + ": " + err.str()};
  const double v = field(out.str(), "violation");
  return {v >= 0.036 && v <= 0.048,
          "lhs=" + fmt("%.4f", field(out.str(), "lhs")) + " rhs=" + fmt("%.4f", field(out.str(), "rhs")) +
              " violation=" + fmt("%.4f", v) + " (window [0.036, 0.048])"};
}

Outcome sign_pattern() {
  const SourceParams source = SourceParams::defaults();
  const NoiseParams noise = NoiseParams::defaults();
  const SteeringSettings settings = SteeringSettings::defaults();
  std::string detail;
  bool pass = true;
  for (const auto& [R, positive] : {std::pair{0.08, true}, {0.38, true}, {0.50, true}, {0.90, false}}) {
    const double v = violation(source, noise, R, settings);
    pass = pass && (positive ? v > 0.0 : v < 0.0);
    detail += "v(" + fmt("%.2f", R) + ")=" + fmt("%+.4f", v) + " ";
  }
  return {pass, detail + "(expected + + + -)"};
}

Outcome sweep_landmarks() {
  const SweepResult s = sweep_reflectivity(SourceParams::defaults(), NoiseParams::defaults(), SteeringSettings::defaults(),
                                           make_grid(0.0, 1.0, 0.01));
  const bool opt_ok = std::abs(s.r_opt - 0.28) <= 0.02;
  const bool max_ok = s.r_max && std::abs(*s.r_max - 0.68) <= 0.02;
  return {opt_ok && max_ok, "R_opt=" + fmt("%.4f", s.r_opt) +
                                " R_max=" + (s.r_max ? fmt("%.4f", *s.r_max) : std::string("none")) +
                                " (targets 0.28+-0.02, 0.68+-0.02)"};
}

Outcome ideal_case() {
  const SteeringSettings settings = SteeringSettings::defaults();
  double worst = 1.0;
  int negatives = 0;
  for (int k = 1; k <= 49; ++k) {
    const double v = violation(SourceParams::single_photon(), NoiseParams::ideal(), 0.02 * k, settings);
    worst = std::min(worst, v);
    negatives += v <= 0.0;
  }
  return {negatives == 0, "min violation on {0.02..0.98} = " + fmt("%.5f", worst) + ", non-positive points " +
                              std::to_string(negatives)};
}

Outcome monte_carlo_consistency() {
  const RunArtifacts& a = honest();
  const SteeringReport& r = a.report;
  const double lhs_target = 0.6524;
  const double v_target = 0.0433;
  const bool lhs_ok = std::abs(r.lhs - lhs_target) <= 3.0 * r.lhs_bootstrap_std;
  const bool v_ok = std::abs(r.violation - v_target) <= 3.0 * r.bootstrap_std;
  return {lhs_ok && v_ok, "lhs=" + fmt("%.4f", r.lhs) + " +- " + fmt("%.4f", r.lhs_bootstrap_std) + " (target " +
                              fmt("%.4f", lhs_target) + "), violation=" + fmt("%.4f", r.violation) + " +- " +
                              fmt("%.4f", r.bootstrap_std) + " (target " + fmt("%.4f", v_target) + "), B=" +
                              std::to_string(r.bootstrap_resamples)};
}

Outcome tomography_round_trip() {
  const double eta = 0.9;
  const DensityMatrix truth = conditioned_state_ideal(0.5, 0.0, 1).resized(4);
  const DensityMatrix observed = apply_loss_single(truth, eta);
  const QuadratureSampler sampler(FockDim(4));
  Rng rng(derive_seed(6, 0, 0));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 100000;
  std::vector<QuadratureRecord> records;
  records.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double phi = 2.0 * std::numbers::pi * (i + u(rng)) / n;
    records.push_back({Party::B, 0, phi, sampler.sample(observed, phi, rng), 1, i});
  }
  MleOptions options;
  options.keep_trace = true;
  const MleResult result = mle_reconstruct(records, FockDim(4), eta, options);
  int decreases = 0;
  for (std::size_t i = 1; i < result.log_likelihood_trace.size(); ++i)
    decreases += result.log_likelihood_trace[i] < result.log_likelihood_trace[i - 1];
  const double f = fidelity(result.state, truth);
  return {f >= 0.99 && decreases == 0,
          "fidelity=" + fmt("%.5f", f) + " iterations=" + std::to_string(result.iterations) +
              " likelihood decreases=" + std::to_string(decreases) + " dilution steps=" +
              std::to_string(result.dilution_steps)};
}

Outcome wigner_checks() {
  const double w_one = wigner_point(DensityMatrix::fock(1, FockDim(4)), 0.0, 0.0);
  const bool origin_ok = std::abs(w_one + 1.0 / std::numbers::pi) <= 1e-6;

  const DensityMatrix zero = conditioned_state_ideal(0.5, 0.0, 1);
  const DensityMatrix shifted = conditioned_state_ideal(0.5, -std::numbers::pi / 3, 1);
  const WignerGrid grid_zero = wigner(zero);
  const bool negative = grid_zero.min() < 0.0;

  const WignerGrid grid_shifted = wigner(shifted);
  const double a = -std::numbers::pi / 3;
  double max_diff = 0.0;
  for (std::size_t i = 0; i < grid_shifted.q_axis.size(); ++i)
    for (std::size_t j = 0; j < grid_shifted.p_axis.size(); ++j) {
      const double q = grid_shifted.q_axis[i], p = grid_shifted.p_axis[j];
      const double rotated = wigner_point(zero, q * std::cos(a) + p * std::sin(a), -q * std::sin(a) + p * std::cos(a));
      max_diff = std::max(max_diff, std::abs(grid_shifted.values(static_cast<Eigen::Index>(i),
                                                                 static_cast<Eigen::Index>(j)) - rotated));
    }
  return {origin_ok && negative && max_diff <= 1e-6,
          "W_1(0,0)=" + fmt("%.9f", w_one) + " conditioned min=" + fmt("%.5f", grid_zero.min()) +
              " rotation max diff=" + fmt("%.2e", max_diff)};
}

Outcome no_signalling() {
  const SourceParams source = SourceParams::defaults().normalized();
  const NoiseParams noise = NoiseParams::defaults();
  const SteeringSettings settings = SteeringSettings::defaults();
  const TwoModeState lossy = apply_loss_mode_A(beamsplit(source_state(source), 0.38), noise.eta_A());

  // Analytic: sum_s P(s|theta) rho_s for every setting against the first one.
  std::vector<CMatrix> averages;
  for (double theta : settings.thetas) {
    CMatrix avg = CMatrix::Zero(4, 4);
    for (int s : {1, -1}) {
      const ConditionedState c = conditioned_state_numeric(lossy, theta, noise.delta_theta, s);
      avg += c.probability * c.state.matrix();
    }
    averages.push_back(avg);
  }
  double analytic_diff = 0.0;
  for (const CMatrix& m : averages) analytic_diff = std::max(analytic_diff, (m - averages[0]).cwiseAbs().maxCoeff());

  // Monte Carlo: mean post-collapse Bob state per setting against the exact reduced state.
  const DensityMatrix reduced = partial_trace(lossy, Party::B);
  const QuadratureSampler sampler(FockDim(4));
  const int n = 20000;
  double worst_z = 0.0;
  int outside = 0;
  for (int j = 0; j < settings.n; ++j) {
    Rng rng(derive_seed(8, 1, static_cast<std::uint64_t>(j)));
    std::normal_distribution<double> jitter(0.0, noise.delta_theta);
    CMatrix mean = CMatrix::Zero(4, 4);
    Eigen::MatrixXd sq_re = Eigen::MatrixXd::Zero(4, 4), sq_im = Eigen::MatrixXd::Zero(4, 4);
    for (int i = 0; i < n; ++i) {
      const CollapseResult c = alice_measure_and_collapse(lossy, settings.thetas[j] + jitter(rng), sampler, rng);
      mean += c.bob_state.matrix();
      sq_re += c.bob_state.matrix().real().cwiseAbs2();
      sq_im += c.bob_state.matrix().imag().cwiseAbs2();
    }
    mean /= n;
    for (int a = 0; a < 4; ++a)
      for (int b = a; b < 4; ++b) {
        const double parts[2][3] = {{mean(a, b).real(), reduced(a, b).real(), sq_re(a, b) / n},
                                    {mean(a, b).imag(), reduced(a, b).imag(), sq_im(a, b) / n}};
        for (const auto& part : parts) {
          const double sigma = std::sqrt(std::max(part[2] - part[0] * part[0], 0.0) / n);
          const double dev = std::abs(part[0] - part[1]);
          if (sigma == 0.0) {
            outside += dev > 1e-12;
            continue;
          }
          worst_z = std::max(worst_z, dev / sigma);
          outside += dev > 3.0 * sigma;
        }
      }
  }

  // Empirical P(+|theta_j) from the honest run.
  const RunArtifacts& run = honest();
  double worst_p = 0.0;
  bool p_ok = true;
  for (int j = 0; j < settings.n; ++j) {
    const double plus = static_cast<double>(run.report.counts.at({j, 1}));
    const double total = plus + static_cast<double>(run.report.counts.at({j, -1}));
    const double dev = std::abs(plus / total - 0.5) / std::sqrt(0.25 / total);
    worst_p = std::max(worst_p, dev);
    p_ok = p_ok && dev <= 3.0;
  }
  return {analytic_diff <= 1e-10 && outside == 0 && p_ok,
          "analytic max diff=" + fmt("%.2e", analytic_diff) + ", MC elements beyond 3 sigma=" +
              std::to_string(outside) + " (max |z|=" + fmt("%.2f", worst_z) + "), max |z| of P(+|theta)=" +
              fmt("%.2f", worst_p)};
}

Outcome adversary_bound() {
  constexpr int kSeeds = 20;
  std::string detail;
  bool pass = true;
  for (AdversaryStrategy strategy :
       {AdversaryStrategy::separable_honest, AdversaryStrategy::sign_random, AdversaryStrategy::best_deterministic}) {
    double worst = -1e9;
    int violations = 0;
    for (int k = 0; k < kSeeds; ++k) {
      ExperimentConfig c;
      c.R = 0.5;
      c.samples_per_setting = 20000;
      c.bootstrap_resamples = 100;
      c.seed = 1000 + static_cast<std::uint64_t>(k);
      const RunArtifacts a = run_adversary(c, strategy);
      const double z = a.report.violation / a.report.bootstrap_std;
      worst = std::max(worst, z);
      violations += a.report.violation > 3.0 * a.report.bootstrap_std;
    }
    pass = pass && violations == 0;
    detail += to_string(strategy) + ": max violation/sigma=" + fmt("%+.2f", worst) + " ";
  }
  return {pass, detail + "(" + std::to_string(kSeeds) + " seeds each, N=20000, B=100)"};
}

Outcome channel_algebra() {
  double completeness = 0.0;
  for (int k = 0; k <= 20; ++k) {
    const double eta = k / 20.0;
    for (int levels : {3, 4, 6}) {
      CMatrix sum = CMatrix::Zero(levels, levels);
      for (const CMatrix& op : loss_kraus(eta, levels - 1, levels)) sum += op.adjoint() * op;
      completeness = std::max(completeness, (sum - CMatrix::Identity(levels, levels)).cwiseAbs().maxCoeff());
    }
  }

  Rng rng(10);
  std::normal_distribution<double> g;
  CMatrix m(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = Complex(g(rng), g(rng));
  const CMatrix pos = m * m.adjoint();
  const DensityMatrix rho(pos / pos.trace().real());
  double povm = 0.0;
  for (double eta : {0.5, 0.9, 0.96})
    for (double x : {-2.0, -0.3, 0.8, 1.7})
      for (double phi : {0.0, 1.0, 2.5, 5.0}) {
        const double lossy = (povm_element(x, phi, eta, FockDim(4)) * rho.matrix()).trace().real();
        const double ideal =
            (povm_element(x, phi, 1.0, FockDim(4)) * apply_loss_single(rho, eta).matrix()).trace().real();
        povm = std::max(povm, std::abs(lossy - ideal));
      }

  const double sigma = 3.9 * kDegree;
  const CMatrix avg =
      gaussian_phase_average([](double t) { return CMatrix::Constant(1, 1, std::polar(1.0, t)); }, 0.0, sigma);
  const double damping = avg(0, 0).real();
  const double exact = std::exp(-0.5 * sigma * sigma);
  const bool pass = completeness <= 1e-12 && povm <= 1e-10 && std::abs(damping - exact) <= 1e-9 &&
                    std::abs(damping - 0.99768) < 1e-5;
  return {pass, "completeness err=" + fmt("%.1e", completeness) + " POVM identity err=" + fmt("%.1e", povm) +
                    " damping=" + fmt("%.9f", damping) + " (exp(-d^2/2)=" + fmt("%.9f", exact) + ")"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "analytic violation at R=0.38", 1.0, analytic_violation},
      {2, "violation sign pattern", 1.0, sign_pattern},
      {3, "sweep landmarks", 5.0, sweep_landmarks},
      {4, "ideal-case violation for all R", 1.0, ideal_case},
      {5, "Monte Carlo consistency", 300.0, monte_carlo_consistency},
      {6, "tomography round trip", 120.0, tomography_round_trip},
      {7, "Wigner checks", 0.0, wigner_checks},
      {8, "no-signalling", 0.0, no_signalling},
      {9, "adversary bound", 600.0, adversary_bound},
      {10, "Kraus/channel algebra", 0.0, channel_algebra},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome{false, ""};
    try {
      outcome = c.check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool pass = outcome.pass;
    std::string timing = fmt("%.2f s", seconds);
    if (c.budget_s > 0.0) {
      timing += " / budget " + fmt("%.0f s", c.budget_s);
      if (seconds >= c.budget_s) {
        pass = false;
        timing += " EXCEEDED";
      }
    }
    failures += !pass;
    std::printf("CRITERION %2d %s: %s [%s] %s\n", c.id, pass ? "PASS" : "FAIL", c.name, timing.c_str(),
                outcome.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
