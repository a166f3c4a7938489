#include "steerkit/cli.hpp"

#include "steerkit/experiment.hpp"
#include "steerkit/steering.hpp"
#include "steerkit/tomography.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace steerkit::cli {

namespace {

struct RunOptions {
  std::string config_path;
  std::optional<double> R;
  std::optional<int> samples;
  bool full_scale = false;
  std::optional<int> bootstrap;
  std::optional<double> eta_B;
  std::optional<std::string> phase_plan;
  std::optional<double> bob_jitter;
  std::optional<int> levels;
};

struct AnalyticOptions {
  bool analytic = false;
  std::optional<double> R;
  std::string sweep;
  bool ideal = false;
  int n = 6;
  std::optional<double> f;
  std::optional<double> p0, p1, p2, eta_h, l_A, delta_theta_deg;
  std::string out;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config_path, "Flat JSON experiment config");
  cmd->add_option("--R", o.R, "Beam-splitter reflectivity");
  cmd->add_option("--samples", o.samples, "Samples per setting (default 20000)");
  cmd->add_flag("--full-scale", o.full_scale, "Use 200000 samples per setting");
  cmd->add_option("--bootstrap", o.bootstrap, "Bootstrap resamples (default 200)");
  cmd->add_option("--eta-B", o.eta_B, "Bob detection efficiency");
  cmd->add_option("--phase-plan", o.phase_plan, "uniform_scan | uneven_scan");
  cmd->add_option("--bob-jitter-deg", o.bob_jitter, "RMS error of Bob's LO phase [deg]");
  cmd->add_option("--levels", o.levels, "Fock levels retained (>= 3)");
}

ExperimentConfig build_config(const RunOptions& o, std::optional<std::uint64_t> seed) {
  ExperimentConfig c;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw std::invalid_argument("cannot open config " + o.config_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    c = config_from_json(j);
  }
  if (o.R) c.R = *o.R;
  if (o.full_scale) c.samples_per_setting = ExperimentConfig::kFullScaleSamples;
  if (o.samples) c.samples_per_setting = *o.samples;
  if (o.bootstrap) c.bootstrap_resamples = *o.bootstrap;
  if (o.eta_B) c.noise.eta_B = *o.eta_B;
  if (o.phase_plan) c.bob_phase_plan = parse_phase_plan(*o.phase_plan);
  if (o.bob_jitter) c.bob_phase_jitter = *o.bob_jitter * kDegree;
  if (o.levels) c.fock_levels = *o.levels;
  if (seed) c.seed = *seed;
  c.validate();
  return c;
}

std::string summary(const RunArtifacts& a) {
  const SteeringReport& r = a.report;
  std::ostringstream s;
  s << "seed=" << a.config.seed << " R=" << a.config.R << " N=" << a.config.samples_per_setting
    << " lhs=" << fmt("%.6f", r.lhs) << " rhs=" << fmt("%.6f", r.rhs) << " violation=" << fmt("%.6f", r.violation)
    << " +- " << fmt("%.6f", r.bootstrap_std) << " (B=" << r.bootstrap_resamples << ")";
  if (a.provenance.value("adversarial", false)) s << " adversarial=" << a.provenance.at("strategy").get<std::string>();
  if (a.provenance.value("eta_B_override", false))
    s << " eta_B_override=" << a.provenance.at("eta_B").get<double>() << " (config " << a.config.noise.eta_B << ")";
  return s.str();
}

void print_warnings(const RunArtifacts& a, std::ostream& err) {
  for (const auto& w : a.provenance.value("warnings", nlohmann::json::array())) err << "warning: " << w.get<std::string>() << '\n';
}

double parse_number(const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw std::invalid_argument("not a number: '" + text + "'");
  return v;
}

std::vector<double> parse_range(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  if (parts.size() != 3) throw std::invalid_argument("range must be start:stop:step, got '" + spec + "'");
  const double start = parse_number(parts[0]);
  const double stop = parse_number(parts[1]);
  const double step = parse_number(parts[2]);
  if (start < 0.0 || stop > 1.0) throw std::invalid_argument("R range must lie within [0,1]");
  return make_grid(start, stop, step);
}

void add_analytic_options(CLI::App* cmd, AnalyticOptions& o) {
  cmd->add_flag("--ideal", o.ideal, "Pure single photon, no loss, no phase noise");
  cmd->add_option("--n", o.n, "Number of measurement settings");
  cmd->add_option("--f", o.f, "Override of f(n)");
  cmd->add_option("--p0", o.p0, "Vacuum weight");
  cmd->add_option("--p1", o.p1, "Single-photon weight");
  cmd->add_option("--p2", o.p2, "Two-photon weight");
  cmd->add_option("--eta-h", o.eta_h, "Alice homodyne efficiency");
  cmd->add_option("--l-A", o.l_A, "Additional loss at Alice");
  cmd->add_option("--delta-theta-deg", o.delta_theta_deg, "RMS LO phase jitter at Alice [deg]");
  cmd->add_option("--out", o.out, "CSV output path for sweeps (default stdout)");
}

int analytic(const AnalyticOptions& o, std::uint64_t seed, bool sweep_only, std::ostream& out, std::ostream& err) {
  SourceParams source = o.ideal ? SourceParams::single_photon() : SourceParams::defaults();
  NoiseParams noise = o.ideal ? NoiseParams::ideal() : NoiseParams::defaults();
  if (o.p0) source.p0 = *o.p0;
  if (o.p1) source.p1 = *o.p1;
  if (o.p2) source.p2 = *o.p2;
  if (o.eta_h) noise.eta_h = *o.eta_h;
  if (o.l_A) noise.l_A = *o.l_A;
  if (o.delta_theta_deg) noise.delta_theta = *o.delta_theta_deg * kDegree;
  source.validate();
  noise.validate();
  const SteeringSettings settings = SteeringSettings::uniform(o.n, o.f);

  const std::string range = sweep_only && o.sweep.empty() ? "0:1:0.01" : o.sweep;
  if (!sweep_only && o.R.has_value() == !range.empty())
    throw std::invalid_argument("steer: give exactly one of --R or --R-sweep");

  if (range.empty()) {
    const double R = *o.R;
    if (!(R >= 0.0 && R <= 1.0)) throw std::invalid_argument("steer: R must lie in [0,1]");
    const double lhs = steering_lhs_analytic(source, noise, R, settings);
    const double rhs = steering_rhs_analytic(source, noise, R, settings);
    out << "seed=" << seed << " R=" << R << " n=" << settings.n << " f=" << settings.f_value
        << " lhs=" << fmt("%.6f", lhs) << " rhs=" << fmt("%.6f", rhs) << " violation=" << fmt("%.6f", lhs - rhs)
        << '\n';
    return kExitOk;
  }

  const SweepResult sweep = sweep_reflectivity(source, noise, settings, parse_range(range));
  std::ostringstream line;
  line << "seed=" << seed << " R_opt=" << fmt("%.4f", sweep.r_opt) << " v_opt=" << fmt("%.6f", sweep.v_opt)
       << " R_max=" << (sweep.r_max ? fmt("%.4f", *sweep.r_max) : std::string("none"));
  if (o.out.empty()) {
    write_sweep_csv(out, sweep.curve);
    err << line.str() << '\n';
  } else {
    std::ofstream file(o.out);
    if (!file) throw std::runtime_error("cannot write " + o.out);
    write_sweep_csv(file, sweep.curve);
    out << line.str() << " out=" << o.out << '\n';
  }
  return kExitOk;
}

DensityMatrix read_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open state file " + path);
  try {
    return density_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("bad state file " + path + ": " + e.what());
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Single-photon EPR-steering simulator and analysis toolkit", "steerkit"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Master seed (echoed in every output)");

  RunOptions sim;
  std::string sim_out;
  CLI::App* simulate = app.add_subcommand("simulate", "Simulate an honest run and persist it");
  add_run_options(simulate, sim);
  simulate->add_option("--seed", seed, "Master seed");
  simulate->add_option("--out", sim_out, "Run directory")->required();

  std::string analyze_in;
  std::optional<double> analyze_eta;
  CLI::App* analyze = app.add_subcommand("analyze", "Re-run tomography and steering analysis on a run directory");
  analyze->add_option("--in", analyze_in, "Run directory")->required();
  analyze->add_option("--eta-B", analyze_eta, "Override the compensated Bob efficiency");
  analyze->add_option("--seed", seed, "Accepted for symmetry; the stored seed is used");

  AnalyticOptions steer_opts;
  CLI::App* steer = app.add_subcommand("steer", "Closed-form steering LHS, RHS and violation");
  steer->add_flag("--analytic", steer_opts.analytic, "Closed-form evaluation (the only mode)");
  steer->add_option("--R", steer_opts.R, "Reflectivity");
  steer->add_option("--R-sweep", steer_opts.sweep, "start:stop:step");
  steer->add_option("--seed", seed, "Echoed only");
  add_analytic_options(steer, steer_opts);

  AnalyticOptions sweep_opts;
  CLI::App* sweep = app.add_subcommand("sweep", "Analytic violation versus R as CSV");
  sweep->add_option("--range", sweep_opts.sweep, "start:stop:step (default 0:1:0.01)");
  sweep->add_option("--seed", seed, "Echoed only");
  add_analytic_options(sweep, sweep_opts);

  std::string state_path;
  std::optional<int> fock;
  int grid_points = 101;
  double grid_range = 4.0;
  std::string wigner_out;
  CLI::App* wig = app.add_subcommand("wigner", "Wigner function of a stored state on a square grid");
  wig->add_option("--state", state_path, "State JSON (dim, re, im)");
  wig->add_option("--fock", fock, "Use the Fock state |n> instead of a file");
  wig->add_option("--grid", grid_points, "Points per axis");
  wig->add_option("--range", grid_range, "Half width of the grid");
  wig->add_option("--out", wigner_out, "CSV output path (default stdout)");
  wig->add_option("--seed", seed, "Echoed only");

  RunOptions adv;
  std::string strategy;
  std::string adv_out;
  CLI::App* adversary = app.add_subcommand("adversary", "Simulate a local-hidden-state strategy");
  adversary->add_option("--strategy", strategy, "separable_honest | sign_random | best_deterministic")->required();
  add_run_options(adversary, adv);
  adversary->add_option("--seed", seed, "Master seed");
  adversary->add_option("--out", adv_out, "Run directory (optional)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (simulate->parsed()) {
      const ExperimentConfig config = build_config(sim, seed);
      const RunArtifacts a = run_honest(config);
      persist(a, sim_out);
      out << summary(a) << " out=" << sim_out << '\n';
      print_warnings(a, err);
    } else if (analyze->parsed()) {
      const RunArtifacts stored = load(analyze_in);
      const RunArtifacts a = analyze_records(stored.config, stored.alice_records, stored.bob_records, analyze_eta);
      persist_analysis(a, analyze_in);
      out << summary(a) << '\n' << report_json(a).dump(2) << '\n';
      print_warnings(a, err);
    } else if (steer->parsed()) {
      return analytic(steer_opts, seed.value_or(ExperimentConfig{}.seed), false, out, err);
    } else if (sweep->parsed()) {
      return analytic(sweep_opts, seed.value_or(ExperimentConfig{}.seed), true, out, err);
    } else if (wig->parsed()) {
      if (state_path.empty() == !fock.has_value()) throw std::invalid_argument("wigner: give exactly one of --state or --fock");
      if (grid_points < 2 || !(grid_range > 0.0)) throw std::invalid_argument("wigner: need --grid >= 2 and --range > 0");
      if (fock && *fock < 0) throw std::invalid_argument("wigner: Fock number must be >= 0");
      const DensityMatrix rho = fock ? DensityMatrix::fock(*fock, FockDim(std::max(2, *fock + 1))) : read_state(state_path);
      const WignerGrid grid = wigner(rho, {grid_points, grid_range});
      std::ostringstream line;
      line << "seed=" << seed.value_or(ExperimentConfig{}.seed) << " W(0,0)=" << fmt("%.9f", wigner_point(rho, 0.0, 0.0))
           << " min=" << fmt("%.9f", grid.min()) << " integral=" << fmt("%.6f", grid.integral());
      if (wigner_out.empty()) {
        write_wigner_csv(out, grid);
        err << line.str() << '\n';
      } else {
        std::ofstream file(wigner_out);
        if (!file) throw std::runtime_error("cannot write " + wigner_out);
        write_wigner_csv(file, grid);
        out << line.str() << " out=" << wigner_out << '\n';
      }
    } else if (adversary->parsed()) {
      const AdversaryStrategy s = parse_strategy(strategy);
      const ExperimentConfig config = build_config(adv, seed);
      const RunArtifacts a = run_adversary(config, s);
      if (!adv_out.empty()) persist(a, adv_out);
      out << summary(a) << (adv_out.empty() ? "" : " out=" + adv_out) << '\n';
      print_warnings(a, err);
    }
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace steerkit::cli
