#include "steerkit/steering.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>

namespace steerkit {

double f_factor(int n, std::optional<double> override_value) {
  if (override_value) {
    if (!(*override_value > 0.0)) throw std::invalid_argument("f(n) override must be positive");
    return *override_value;
  }
  if (n == 6) return 0.6440;
  if (n == kInfiniteSettings) return 2.0 / std::numbers::pi;
  throw std::invalid_argument("f(n) is tabulated only for n = 6 and n = infinity; supply the value for n = " +
                              std::to_string(n) +
                              " explicitly (general formula: Jones & Wiseman, Phys. Rev. A 84, 012110, Eq. 4.15)");
}

double canonical_setting(double theta) {
  const double pi = std::numbers::pi;
  double w = std::fmod(theta, pi);
  if (w > 0.5 * pi + 1e-12) w -= pi;
  if (w <= -0.5 * pi + 1e-12) w += pi;
  return w;
}

SteeringSettings SteeringSettings::uniform(int n, std::optional<double> f_override) {
  if (n < 2) throw std::invalid_argument("SteeringSettings: at least two settings are required");
  SteeringSettings s;
  s.n = n;
  s.f_value = f_factor(n, f_override);
  for (int j = 1; j <= n; ++j) s.thetas.push_back(canonical_setting(std::numbers::pi * j / n));
  return s;
}

void SteeringSettings::validate() const {
  if (n < 2) throw std::invalid_argument("SteeringSettings: n must be >= 2");
  if (static_cast<int>(thetas.size()) != n) throw std::invalid_argument("SteeringSettings: need exactly n phases");
  if (!(f_value > 0.0)) throw std::invalid_argument("SteeringSettings: f must be positive");
}

double sigma_theta_expectation(const DensityMatrix& qubit, double theta) {
  if (qubit.dim() != 2) throw std::invalid_argument("sigma_theta_expectation: qubit state required");
  return kCorrelatorOrientation * 2.0 * (std::polar(1.0, theta) * qubit(0, 1)).real();
}

std::vector<double> steering_terms(const ConditionedMap& conditioned, const SteeringSettings& settings) {
  settings.validate();
  std::vector<double> terms(settings.n, 0.0);
  for (int j = 0; j < settings.n; ++j) {
    for (int s : {1, -1}) {
      const auto it = conditioned.find({j, s});
      if (it == conditioned.end())
        throw std::invalid_argument("steering LHS: missing cell (setting " + std::to_string(j) + ", sign " +
                                    std::to_string(s) + ")");
      if (it->second.probability == 0.0) continue;
      terms[j] += it->second.probability * s * sigma_theta_expectation(it->second.state, settings.thetas[j]);
    }
  }
  return terms;
}

double steering_lhs_states(const ConditionedMap& conditioned, const SteeringSettings& settings) {
  double sum = 0.0;
  for (double t : steering_terms(conditioned, settings)) sum += t;
  return sum / settings.n;
}

double steering_rhs_state(const DensityMatrix& unconditioned_qubit, const SteeringSettings& settings) {
  if (unconditioned_qubit.dim() != 2) throw std::invalid_argument("steering RHS: qubit state required");
  const double z = (unconditioned_qubit(1, 1) - unconditioned_qubit(0, 0)).real();
  return settings.f_value * std::sqrt(std::max(0.0, 1.0 - z * z));
}

double steering_lhs_analytic(const SourceParams& source, const NoiseParams& noise, double R,
                             const SteeringSettings& settings) {
  (void)settings;
  if (!(R >= 0.0 && R <= 1.0)) throw std::invalid_argument("steering LHS: R must lie in [0,1]");
  const double eta = noise.eta_A();
  const double dephase = std::exp(-0.5 * noise.delta_theta * noise.delta_theta);
  return 2.0 * dephase * std::sqrt(eta * R * (1.0 - R) * 2.0 / std::numbers::pi) *
         (source.p1 + source.p2 * (1.0 - R) * (2.0 - eta)) / (1.0 - source.p2 * R * R);
}

double steering_rhs_analytic(const SourceParams& source, const NoiseParams& noise, double R,
                             const SteeringSettings& settings) {
  (void)noise;
  if (!(R >= 0.0 && R <= 1.0)) throw std::invalid_argument("steering RHS: R must lie in [0,1]");
  const double z = (source.p0 + source.p1 * (1.0 - 2.0 * R) + source.p2 * (1.0 - R) * (1.0 - 3.0 * R)) /
                   (1.0 - source.p2 * R * R);
  return settings.f_value * std::sqrt(std::max(0.0, 1.0 - z * z));
}

double violation(const SourceParams& source, const NoiseParams& noise, double R, const SteeringSettings& settings) {
  return steering_lhs_analytic(source, noise, R, settings) - steering_rhs_analytic(source, noise, R, settings);
}

std::vector<double> make_grid(double start, double stop, double step) {
  if (!(step > 0.0) || stop < start) throw std::invalid_argument("grid: need step > 0 and stop >= start");
  std::vector<double> grid;
  const auto count = static_cast<long>(std::floor((stop - start) / step + 0.5));
  for (long i = 0; i <= count; ++i) grid.push_back(std::min(stop, start + i * step));
  return grid;
}

SweepResult sweep_reflectivity(const SourceParams& source, const NoiseParams& noise,
                               const SteeringSettings& settings, const std::vector<double>& grid) {
  if (grid.size() < 2) throw std::invalid_argument("sweep: grid needs at least two points");
  const auto v = [&](double R) { return violation(source, noise, R, settings); };
  SweepResult result;
  for (double R : grid) {
    const double l = steering_lhs_analytic(source, noise, R, settings);
    const double r = steering_rhs_analytic(source, noise, R, settings);
    result.curve.push_back({R, l, r, l - r});
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.curve.size(); ++i)
    if (result.curve[i].violation > result.curve[best].violation) best = i;
  double a = result.curve[best == 0 ? 0 : best - 1].R;
  double b = result.curve[std::min(best + 1, result.curve.size() - 1)].R;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  while (b - a > 1e-7) {
    if (v(c) > v(d)) b = d; else a = c;
    c = b - inv_phi * (b - a);
    d = a + inv_phi * (b - a);
  }
  result.r_opt = 0.5 * (a + b);
  result.v_opt = v(result.r_opt);
  if (result.curve[best].violation > result.v_opt) {
    result.r_opt = result.curve[best].R;
    result.v_opt = result.curve[best].violation;
  }

  constexpr double kZero = 1e-12;
  for (std::size_t i = result.curve.size() - 1; i > 0; --i) {
    const SweepPoint& lo = result.curve[i - 1];
    const SweepPoint& hi = result.curve[i];
    if (lo.violation > kZero && hi.violation < -kZero) {
      double left = lo.R;
      double right = hi.R;
      while (right - left > 1e-7) {
        const double mid = 0.5 * (left + right);
        if (v(mid) > 0.0) left = mid; else right = mid;
      }
      result.r_max = 0.5 * (left + right);
      break;
    }
  }
  return result;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& curve) {
  out << "R,lhs,rhs,violation\n";
  char buf[128];
  for (const SweepPoint& p : curve) {
    std::snprintf(buf, sizeof buf, "%.6g,%.9g,%.9g,%.9g\n", p.R, p.lhs, p.rhs, p.violation);
    out << buf;
  }
}

namespace {

std::string cell_name(const CellKey& key) {
  return std::to_string(key.first) + ":" + (key.second > 0 ? "+" : "-");
}

CellKey parse_cell_name(const std::string& name) {
  const auto colon = name.find(':');
  if (colon == std::string::npos || colon + 2 != name.size()) throw std::invalid_argument("bad cell key " + name);
  const char sign = name[colon + 1];
  if (sign != '+' && sign != '-') throw std::invalid_argument("bad cell key " + name);
  return {std::stoi(name.substr(0, colon)), sign == '+' ? 1 : -1};
}

}  // namespace

nlohmann::json to_json(const SteeringReport& report) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [key, n] : report.counts) counts[cell_name(key)] = n;
  return {{"lhs", report.lhs},
          {"rhs", report.rhs},
          {"violation", report.violation},
          {"bootstrap_mean", report.bootstrap_mean},
          {"bootstrap_std", report.bootstrap_std},
          {"lhs_bootstrap_std", report.lhs_bootstrap_std},
          {"rhs_bootstrap_std", report.rhs_bootstrap_std},
          {"bootstrap_resamples", report.bootstrap_resamples},
          {"n", report.n},
          {"f", report.f},
          {"per_setting", report.per_setting_terms},
          {"counts", counts}};
}

SteeringReport report_from_json(const nlohmann::json& j) {
  SteeringReport r;
  r.lhs = j.at("lhs").get<double>();
  r.rhs = j.at("rhs").get<double>();
  r.violation = j.at("violation").get<double>();
  r.bootstrap_mean = j.at("bootstrap_mean").get<double>();
  r.bootstrap_std = j.at("bootstrap_std").get<double>();
  r.lhs_bootstrap_std = j.value("lhs_bootstrap_std", 0.0);
  r.rhs_bootstrap_std = j.value("rhs_bootstrap_std", 0.0);
  r.bootstrap_resamples = j.value("bootstrap_resamples", 0);
  r.n = j.at("n").get<int>();
  r.f = j.at("f").get<double>();
  r.per_setting_terms = j.at("per_setting").get<std::vector<double>>();
  for (const auto& [name, n] : j.at("counts").items()) r.counts[parse_cell_name(name)] = n.get<std::size_t>();
  return r;
}

}  // namespace steerkit
