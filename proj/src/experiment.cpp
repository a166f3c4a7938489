#include "steerkit/experiment.hpp"

#include "steerkit/numerics.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace steerkit {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::uint64_t kSimulationTag = 0x5131;
constexpr std::uint64_t kAnalysisTag = 0xA7A1;
constexpr std::size_t kShardSize = 5000;

double record_phase(double phase) {
  const double q = quantize_9(wrap_phase(phase));
  return q >= kTwoPi ? 0.0 : q;
}

std::string cell_file(const CellKey& key) {
  return "cond_" + std::to_string(key.first) + (key.second > 0 ? "_p" : "_m") + ".json";
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void check_schema(const nlohmann::json& j, const fs::path& path) {
  const int version = j.value("schema_version", -1);
  if (version != kSchemaVersion)
    throw std::runtime_error(path.string() + ": schema_version " + std::to_string(version) + " (expected " +
                             std::to_string(kSchemaVersion) + ")");
}

// Bob's hidden pure qubit states for the deterministic adversary: Bloch z of
// the honest unconditioned state, transverse direction at the mid-angles
// pi (k + 1/2) / n, k = 0..2n-1.
std::vector<DensityMatrix> hidden_states(const ExperimentConfig& config) {
  const DensityMatrix u = unconditioned_state_full(config.source.normalized(), config.R);
  const double z = (u(1, 1) - u(0, 0)).real() / u.trace();
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const int n = config.settings.n;
  std::vector<DensityMatrix> states;
  for (int k = 0; k < 2 * n; ++k) {
    const double phi = std::numbers::pi * (k + 0.5) / n;
    CMatrix m = CMatrix::Zero(config.fock_levels, config.fock_levels);
    m(0, 0) = 0.5 * (1.0 - z);
    m(1, 1) = 0.5 * (1.0 + z);
    m(0, 1) = -0.5 * r * std::polar(1.0, -phi);
    m(1, 0) = std::conj(m(0, 1));
    states.push_back(apply_loss_single(DensityMatrix(m), config.noise.eta_B));
  }
  return states;
}

TwoModeState separable_source(const ExperimentConfig& config) {
  const int d = config.fock_levels;
  CMatrix m = CMatrix::Zero(d * d, d * d);
  m(0 * d + 1, 0 * d + 1) = config.R;        // photon with Bob
  m(1 * d + 0, 1 * d + 0) = 1.0 - config.R;  // photon with Alice
  return TwoModeState(m, d, d);
}

double bob_phase(const ExperimentConfig& config, std::size_t i, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  switch (config.bob_phase_plan) {
    case PhasePlan::uniform_scan:
      return kTwoPi * (static_cast<double>(i) + u) / config.samples_per_setting;
    case PhasePlan::uneven_scan: {
      // Monotone warp of the stratified scan: occupancy varies by about +-40% across bins.
      const double phi = kTwoPi * (static_cast<double>(i) + u) / config.samples_per_setting;
      return phi + 0.4 * std::sin(phi);
    }
    case PhasePlan::fixed_list:
      return config.bob_phase_list[i % config.bob_phase_list.size()];
  }
  return 0.0;
}

}  // namespace

std::string to_string(PhasePlan plan) {
  switch (plan) {
    case PhasePlan::uniform_scan: return "uniform_scan";
    case PhasePlan::uneven_scan: return "uneven_scan";
    case PhasePlan::fixed_list: return "fixed_list";
  }
  return "?";
}

PhasePlan parse_phase_plan(const std::string& name) {
  if (name == "uniform_scan") return PhasePlan::uniform_scan;
  if (name == "uneven_scan") return PhasePlan::uneven_scan;
  if (name == "fixed_list") return PhasePlan::fixed_list;
  throw std::invalid_argument("unknown bob_phase_plan '" + name + "'");
}

std::string to_string(AdversaryStrategy strategy) {
  switch (strategy) {
    case AdversaryStrategy::separable_honest: return "separable_honest";
    case AdversaryStrategy::sign_random: return "sign_random";
    case AdversaryStrategy::best_deterministic: return "best_deterministic";
  }
  return "?";
}

AdversaryStrategy parse_strategy(const std::string& name) {
  if (name == "separable_honest") return AdversaryStrategy::separable_honest;
  if (name == "sign_random") return AdversaryStrategy::sign_random;
  if (name == "best_deterministic") return AdversaryStrategy::best_deterministic;
  throw std::invalid_argument("unknown adversary strategy '" + name +
                              "' (expected separable_honest, sign_random or best_deterministic)");
}

void ExperimentConfig::validate() const {
  if (!(R >= 0.0 && R <= 1.0)) throw std::invalid_argument("config: R must lie in [0,1]");
  source.validate();
  noise.validate();
  settings.validate();
  if (samples_per_setting < kMinSamplesForClaim)
    throw std::invalid_argument("config: samples_per_setting must be >= " + std::to_string(kMinSamplesForClaim));
  if (bob_phase_plan == PhasePlan::fixed_list && bob_phase_list.empty())
    throw std::invalid_argument("config: fixed_list phase plan needs bob_phase_list");
  if (!(bob_phase_jitter >= 0.0)) throw std::invalid_argument("config: bob_phase_jitter must be >= 0");
  if (fock_levels < 3) throw std::invalid_argument("config: fock_levels must be >= 3");
  if (bootstrap_resamples < 0) throw std::invalid_argument("config: bootstrap_resamples must be >= 0");
  binning.validate();
  if (mle.max_iter < 1 || bootstrap_mle.max_iter < 1) throw std::invalid_argument("config: MLE max_iter must be >= 1");
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"schema_version", kSchemaVersion},
          {"R", c.R},
          {"p0", c.source.p0},
          {"p1", c.source.p1},
          {"p2", c.source.p2},
          {"p_h", c.source.p_h},
          {"eta_h", c.noise.eta_h},
          {"l_A", c.noise.l_A},
          {"delta_theta", c.noise.delta_theta},
          {"eta_B", c.noise.eta_B},
          {"n_settings", c.settings.n},
          {"f", c.settings.f_value},
          {"samples_per_setting", c.samples_per_setting},
          {"bob_phase_plan", to_string(c.bob_phase_plan)},
          {"bob_phase_list", c.bob_phase_list},
          {"bob_phase_jitter", c.bob_phase_jitter},
          {"seed", c.seed},
          {"adversary", c.adversary ? nlohmann::json(to_string(*c.adversary)) : nlohmann::json(nullptr)},
          {"fock_levels", c.fock_levels},
          {"bootstrap_resamples", c.bootstrap_resamples},
          {"phase_bins", c.binning.phase_bins},
          {"x_bins", c.binning.x_bins},
          {"x_min", c.binning.x_min},
          {"x_max", c.binning.x_max},
          {"mle_max_iter", c.mle.max_iter},
          {"mle_tol", c.mle.tol},
          {"bootstrap_mle_max_iter", c.bootstrap_mle.max_iter},
          {"bootstrap_mle_tol", c.bootstrap_mle.tol}};
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  static const char* const known[] = {
      "schema_version", "R", "p0", "p1", "p2", "p_h", "eta_h", "l_A", "delta_theta", "delta_theta_deg", "eta_B",
      "n_settings", "f", "samples_per_setting", "bob_phase_plan", "bob_phase_list", "bob_phase_jitter", "seed",
      "adversary", "fock_levels", "bootstrap_resamples", "phase_bins", "x_bins", "x_min", "x_max", "mle_max_iter",
      "mle_tol", "bootstrap_mle_max_iter", "bootstrap_mle_tol"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  if (j.contains("schema_version") && j.at("schema_version").get<int>() != kSchemaVersion)
    throw std::invalid_argument("config: unsupported schema_version");
  if (j.contains("delta_theta") && j.contains("delta_theta_deg"))
    throw std::invalid_argument("config: give delta_theta or delta_theta_deg, not both");

  ExperimentConfig c;
  try {
    c.R = j.value("R", c.R);
    c.source.p0 = j.value("p0", c.source.p0);
    c.source.p1 = j.value("p1", c.source.p1);
    c.source.p2 = j.value("p2", c.source.p2);
    c.source.p_h = j.value("p_h", c.source.p_h);
    c.noise.eta_h = j.value("eta_h", c.noise.eta_h);
    c.noise.l_A = j.value("l_A", c.noise.l_A);
    c.noise.delta_theta = j.value("delta_theta", c.noise.delta_theta);
    if (j.contains("delta_theta_deg")) c.noise.delta_theta = j.at("delta_theta_deg").get<double>() * kDegree;
    c.noise.eta_B = j.value("eta_B", c.noise.eta_B);
    const int n = j.value("n_settings", 6);
    std::optional<double> f;
    if (j.contains("f") && !j.at("f").is_null()) f = j.at("f").get<double>();
    // The tabulated value needs no override; only pass f through when it differs.
    if (f && n == 6 && *f == f_factor(6)) f.reset();
    c.settings = SteeringSettings::uniform(n, f);
    c.samples_per_setting = j.value("samples_per_setting", c.samples_per_setting);
    c.bob_phase_plan = parse_phase_plan(j.value("bob_phase_plan", std::string("uniform_scan")));
    c.bob_phase_list = j.value("bob_phase_list", std::vector<double>{});
    c.bob_phase_jitter = j.value("bob_phase_jitter", 0.0);
    c.seed = j.value("seed", c.seed);
    if (j.contains("adversary") && !j.at("adversary").is_null())
      c.adversary = parse_strategy(j.at("adversary").get<std::string>());
    c.fock_levels = j.value("fock_levels", c.fock_levels);
    c.bootstrap_resamples = j.value("bootstrap_resamples", c.bootstrap_resamples);
    c.binning.phase_bins = j.value("phase_bins", c.binning.phase_bins);
    c.binning.x_bins = j.value("x_bins", c.binning.x_bins);
    c.binning.x_min = j.value("x_min", c.binning.x_min);
    c.binning.x_max = j.value("x_max", c.binning.x_max);
    c.mle.max_iter = j.value("mle_max_iter", c.mle.max_iter);
    c.mle.tol = j.value("mle_tol", c.mle.tol);
    c.bootstrap_mle.max_iter = j.value("bootstrap_mle_max_iter", c.bootstrap_mle.max_iter);
    c.bootstrap_mle.tol = j.value("bootstrap_mle_tol", c.bootstrap_mle.tol);
  } catch (const nlohmann::json::type_error& e) {
    throw std::invalid_argument(std::string("config: wrong value type: ") + e.what());
  }
  c.validate();
  return c;
}

SimulatedRecords simulate_records(const ExperimentConfig& config) {
  config.validate();
  const FockDim dim(config.fock_levels);
  const QuadratureSampler sampler(dim);
  const int n = config.settings.n;
  const std::size_t per_setting = static_cast<std::size_t>(config.samples_per_setting);
  const std::optional<AdversaryStrategy> adversary = config.adversary;

  // Bob's loss commutes with Alice's projection, so it is applied to the joint state once.
  const TwoModeState prepared = adversary == AdversaryStrategy::separable_honest
                                    ? separable_source(config)
                                    : beamsplit(source_state(config.source, dim), config.R);
  const TwoModeState joint =
      apply_loss_mode_B(apply_loss_mode_A(prepared, config.noise.eta_A()), config.noise.eta_B);
  const std::vector<DensityMatrix> hidden =
      adversary == AdversaryStrategy::best_deterministic ? hidden_states(config) : std::vector<DensityMatrix>{};
  std::vector<int> hidden_signs;
  for (const DensityMatrix& h : hidden)
    for (int j = 0; j < n; ++j)
      hidden_signs.push_back(sign_of(sigma_theta_expectation(restrict_qubit(h, 1.0), config.settings.thetas[j])));

  SimulatedRecords out;
  out.alice.resize(n * per_setting);
  out.bob.resize(n * per_setting);
  const std::size_t shards = (per_setting + kShardSize - 1) / kShardSize;

  parallel_for(static_cast<std::size_t>(n) * shards, [&](std::size_t task) {
    const int j = static_cast<int>(task / shards);
    const std::size_t shard = task % shards;
    Rng rng(derive_seed(config.seed, kSimulationTag + static_cast<std::uint64_t>(j), shard));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double theta = config.settings.thetas[j];
    const std::size_t end = std::min(per_setting, (shard + 1) * kShardSize);
    for (std::size_t i = shard * kShardSize; i < end; ++i) {
      const std::size_t slot = j * per_setting + i;
      const double jitter = normal(rng);
      double x_a = 0.0;
      int s = 1;
      DensityMatrix bob_state = DensityMatrix::maximally_mixed(dim);
      if (adversary == AdversaryStrategy::best_deterministic) {
        const auto k = std::uniform_int_distribution<std::size_t>(0, hidden.size() - 1)(rng);
        // Announce the sign that best correlates with the hidden state; |x| looks like vacuum noise.
        s = hidden_signs[k * n + j];
        x_a = s * std::abs(normal(rng)) / std::numbers::sqrt2;
        bob_state = hidden[k];
      } else {
        CollapseResult c =
            alice_measure_and_collapse(joint, theta + config.noise.delta_theta * jitter, sampler, rng);
        x_a = c.x;
        s = c.s;
        bob_state = std::move(c.bob_state);
        if (adversary == AdversaryStrategy::sign_random) s = std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
      }
      const double phi = bob_phase(config, i, rng);
      const double bob_jitter = config.bob_phase_jitter > 0.0 ? config.bob_phase_jitter * normal(rng) : 0.0;
      const double x_b = sampler.sample(bob_state, phi + bob_jitter, rng);
      const auto trial = static_cast<std::int64_t>(slot);
      out.alice[slot] = {Party::A, j, record_phase(theta), quantize_9(x_a), s, trial};
      out.bob[slot] = {Party::B, j, record_phase(phi), quantize_9(x_b), s, trial};
    }
  });
  return out;
}

RunArtifacts analyze_records(const ExperimentConfig& config, std::vector<QuadratureRecord> alice,
                             std::vector<QuadratureRecord> bob, std::optional<double> eta_B_override) {
  config.validate();
  const int n = config.settings.n;
  if (eta_B_override && !(*eta_B_override > 0.0 && *eta_B_override <= 1.0))
    throw std::invalid_argument("analysis: eta_B must lie in (0,1]");
  const double eta_B = eta_B_override.value_or(config.noise.eta_B);
  const FockDim dim(config.fock_levels);
  const PovmTable povm(config.binning, eta_B, dim);

  CellCounts cells;
  for (int j = 0; j < n; ++j)
    for (int s : {1, -1}) cells.emplace(CellKey{j, s}, BinnedCounts(config.binning));
  for (const QuadratureRecord& r : bob) {
    if (r.party != Party::B) throw std::invalid_argument("analysis: Bob's record list holds an Alice record");
    if (r.setting_index < 0 || r.setting_index >= n)
      throw std::invalid_argument("analysis: setting index out of range in Bob's records");
    cells.at({r.setting_index, r.s}).add(r.lo_phase, r.x);
  }

  const bool adversarial = config.adversary.has_value();
  const SteeringEstimate point = estimate_steering(cells, config.settings, povm, config.mle, nullptr, adversarial);

  RunArtifacts a;
  a.config = config;
  a.alice_records = std::move(alice);
  a.bob_records = std::move(bob);
  for (const auto& [key, rec] : point.conditioned) a.reconstructed_states.emplace(key, rec.state);
  a.unconditioned_state = point.unconditioned->state;

  SteeringReport& report = a.report;
  report.lhs = point.lhs;
  report.rhs = point.rhs;
  report.finalize();
  report.per_setting_terms = point.per_setting;
  report.n = n;
  report.f = config.settings.f_value;
  for (const auto& [key, c] : cells) report.counts[key] = c.records();

  std::vector<std::string> warnings;
  if (config.bootstrap_resamples > 0) {
    const BootstrapResult boot =
        bootstrap_violation(cells, config.settings, povm, point, config.bootstrap_resamples,
                            derive_seed(config.seed, kAnalysisTag, 0), config.bootstrap_mle, adversarial);
    report.bootstrap_mean = boot.mean;
    report.bootstrap_std = boot.stddev;
    report.lhs_bootstrap_std = boot.lhs_std;
    report.rhs_bootstrap_std = boot.rhs_std;
    report.bootstrap_resamples = config.bootstrap_resamples;
    warnings = boot.warnings;
  }

  nlohmann::json mle = nlohmann::json::object();
  std::size_t dropped = 0;
  bool all_converged = point.unconditioned->converged;
  bool coverage_ok = point.unconditioned->phase_coverage_ok;
  for (const auto& [key, rec] : point.conditioned) {
    mle[std::to_string(key.first) + (key.second > 0 ? ":+" : ":-")] = to_json(rec);
    dropped += cells.at(key).dropped;
    all_converged = all_converged && rec.converged;
    coverage_ok = coverage_ok && rec.phase_coverage_ok;
  }
  mle["unconditioned"] = to_json(*point.unconditioned);
  if (!all_converged) warnings.push_back("maximum-likelihood iteration hit max_iter before converging");
  if (!coverage_ok) warnings.push_back("LO phase coverage below 90% of bins in at least one cell");
  if (dropped > 0) warnings.push_back(std::to_string(dropped) + " Bob records fell outside the x binning range");
  for (const auto& [key, c] : cells)
    if (c.records() == 0)
      warnings.push_back("empty cell (" + std::to_string(key.first) + "," + std::to_string(key.second) + ")");

  a.provenance = {{"seed", config.seed},
                  {"code_version", kCodeVersion},
                  {"schema_version", kSchemaVersion},
                  {"adversarial", adversarial},
                  {"strategy", adversarial ? nlohmann::json(to_string(*config.adversary)) : nlohmann::json(nullptr)},
                  {"eta_B", eta_B},
                  {"eta_B_override", eta_B_override.has_value()},
                  {"mle_converged", all_converged},
                  {"phase_coverage_ok", coverage_ok},
                  {"dropped_records", dropped},
                  {"mle", mle},
                  {"warnings", warnings}};
  return a;
}

RunArtifacts run_honest(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.adversary.reset();
  SimulatedRecords rec = simulate_records(c);
  return analyze_records(c, std::move(rec.alice), std::move(rec.bob));
}

RunArtifacts run_adversary(const ExperimentConfig& config, AdversaryStrategy strategy) {
  ExperimentConfig c = config;
  c.adversary = strategy;
  SimulatedRecords rec = simulate_records(c);
  return analyze_records(c, std::move(rec.alice), std::move(rec.bob));
}

std::vector<RunArtifacts> replicate(const ExperimentConfig& config, int k) {
  if (k < 1) throw std::invalid_argument("replicate: k must be >= 1");
  std::vector<RunArtifacts> runs;
  for (int i = 0; i < k; ++i) {
    ExperimentConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(i);
    runs.push_back(c.adversary ? run_adversary(c, *c.adversary) : run_honest(c));
  }
  return runs;
}

nlohmann::json report_json(const RunArtifacts& a) {
  return {{"schema_version", kSchemaVersion}, {"report", to_json(a.report)}, {"provenance", a.provenance}};
}

void persist(const RunArtifacts& a, const fs::path& dir) {
  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(a.config));
  write_records_csv(dir / "alice.csv", a.alice_records);
  write_records_csv(dir / "bob.csv", a.bob_records);
  persist_analysis(a, dir);
}

void persist_analysis(const RunArtifacts& a, const fs::path& dir) {
  fs::create_directories(dir / "states");
  for (const auto& entry : fs::directory_iterator(dir / "states"))
    if (entry.path().extension() == ".json") fs::remove(entry.path());
  for (const auto& [key, rho] : a.reconstructed_states) write_json(dir / "states" / cell_file(key), to_json(rho));
  if (a.unconditioned_state) write_json(dir / "states" / "unconditioned.json", to_json(*a.unconditioned_state));
  write_json(dir / "report.json", report_json(a));
}

RunArtifacts load(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("run directory " + dir.string() + " does not exist");
  RunArtifacts a;
  const nlohmann::json config = read_json(dir / "config.json");
  check_schema(config, dir / "config.json");
  try {
    a.config = config_from_json(config);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("invalid config.json: ") + e.what());
  }
  a.alice_records = read_records_csv(dir / "alice.csv");
  a.bob_records = read_records_csv(dir / "bob.csv");
  const std::size_t expected = static_cast<std::size_t>(a.config.settings.n) * a.config.samples_per_setting;
  if (a.alice_records.size() != expected || a.bob_records.size() != expected)
    throw std::runtime_error("record counts do not match the config (expected " + std::to_string(expected) +
                             " per party)");

  for (int j = 0; j < a.config.settings.n; ++j)
    for (int s : {1, -1}) {
      const fs::path p = dir / "states" / cell_file({j, s});
      if (fs::exists(p)) a.reconstructed_states.emplace(CellKey{j, s}, density_from_json(read_json(p)));
    }
  if (fs::exists(dir / "states" / "unconditioned.json"))
    a.unconditioned_state = density_from_json(read_json(dir / "states" / "unconditioned.json"));

  const nlohmann::json report = read_json(dir / "report.json");
  check_schema(report, dir / "report.json");
  a.report = report_from_json(report.at("report"));
  a.provenance = report.at("provenance");
  return a;
}

}  // namespace steerkit
