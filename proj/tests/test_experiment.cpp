#include "steerkit/experiment.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>

using namespace steerkit;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(int samples = 2000, int bootstrap = 0) {
  ExperimentConfig c;
  c.samples_per_setting = samples;
  c.bootstrap_resamples = bootstrap;
  c.seed = 11;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("steerkit_exp_" + name);
  fs::remove_all(p);
  return p;
}

bool same_reports(const SteeringReport& a, const SteeringReport& b) {
  return a.lhs == b.lhs && a.rhs == b.rhs && a.violation == b.violation && a.bootstrap_std == b.bootstrap_std &&
         a.bootstrap_mean == b.bootstrap_mean && a.per_setting_terms == b.per_setting_terms && a.counts == b.counts;
}

}  // namespace

TEST_CASE("config JSON") {
  ExperimentConfig c = small_config();
  c.adversary = AdversaryStrategy::sign_random;
  c.bob_phase_plan = PhasePlan::uneven_scan;
  const ExperimentConfig back = config_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(to_json(back) == to_json(c));

  nlohmann::json j = {{"R", 0.5}, {"delta_theta_deg", 3.9}, {"seed", 18446744073709551615ull}};
  const ExperimentConfig d = config_from_json(j);
  CHECK(d.noise.delta_theta == doctest::Approx(3.9 * std::numbers::pi / 180.0));
  CHECK(d.seed == 18446744073709551615ull);
  CHECK(d.settings.f_value == 0.6440);

  CHECK_THROWS_AS(config_from_json({{"R", 1.5}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"samples_per_setting", 999}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"delta_theta", 0.1}, {"delta_theta_deg", 3.9}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"reflectivity", 0.5}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"adversary", "oracle"}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"n_settings", 4}}), std::invalid_argument);
  CHECK(config_from_json({{"n_settings", 4}, {"f", 0.66}}).settings.f_value == 0.66);
  CHECK_THROWS_AS(config_from_json({{"bob_phase_plan", "fixed_list"}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_strategy("oracle"), std::invalid_argument);
}

TEST_CASE("simulated records: layout, determinism, thread independence") {
  const ExperimentConfig c = small_config(3000);
  setenv("STEERKIT_THREADS", "1", 1);
  const SimulatedRecords one = simulate_records(c);
  setenv("STEERKIT_THREADS", "3", 1);
  const SimulatedRecords three = simulate_records(c);
  unsetenv("STEERKIT_THREADS");
  CHECK(one.alice == three.alice);
  CHECK(one.bob == three.bob);
  REQUIRE(one.alice.size() == 6 * 3000);

  ExperimentConfig other = c;
  other.seed = 12;
  CHECK(simulate_records(other).bob != one.bob);

  for (std::size_t i = 0; i < one.alice.size(); ++i) {
    const QuadratureRecord& a = one.alice[i];
    const QuadratureRecord& b = one.bob[i];
    CHECK(a.party == Party::A);
    CHECK(b.party == Party::B);
    CHECK(a.trial_id == b.trial_id);
    CHECK(a.s == b.s);
    CHECK(a.s == sign_of(a.x));
    CHECK(a.setting_index == b.setting_index);
    CHECK(b.lo_phase >= 0.0);
    CHECK(b.lo_phase < 2.0 * std::numbers::pi);
    if (i > 50) break;
  }
  // Empirical P(s = + | theta_j) = 1/2 within three binomial sigma.
  for (int j = 0; j < 6; ++j) {
    int plus = 0;
    for (int i = 0; i < 3000; ++i) plus += one.alice[j * 3000 + i].s > 0;
    CHECK(std::abs(plus / 3000.0 - 0.5) <= 3.0 * std::sqrt(0.25 / 3000.0));
  }
}

TEST_CASE("honest run, persistence and reload") {
  const ExperimentConfig c = small_config(2000, 10);
  const RunArtifacts a = run_honest(c);
  CHECK(a.reconstructed_states.size() == 12);
  REQUIRE(a.unconditioned_state.has_value());
  for (const auto& [key, n] : a.report.counts) CHECK(n > 0);
  CHECK(a.report.bootstrap_std > 0.0);
  CHECK(a.provenance.at("seed").get<std::uint64_t>() == c.seed);
  CHECK_FALSE(a.provenance.at("adversarial").get<bool>());

  const fs::path dir = scratch("roundtrip");
  persist(a, dir);
  const RunArtifacts back = load(dir);
  CHECK(same_reports(back.report, a.report));
  CHECK(back.alice_records == a.alice_records);
  CHECK(back.bob_records == a.bob_records);
  CHECK(back.provenance == a.provenance);
  for (const auto& [key, rho] : a.reconstructed_states)
    CHECK((back.reconstructed_states.at(key).matrix() - rho.matrix()).cwiseAbs().maxCoeff() == 0.0);

  // Re-analysis of the stored records reproduces the report exactly.
  const RunArtifacts again = analyze_records(back.config, back.alice_records, back.bob_records);
  CHECK(same_reports(again.report, a.report));

  // A different compensated efficiency changes the reconstruction and is flagged.
  const RunArtifacts overridden = analyze_records(back.config, back.alice_records, back.bob_records, 0.8);
  CHECK(overridden.provenance.at("eta_B_override").get<bool>());
  CHECK(overridden.report.lhs != a.report.lhs);

  const fs::path copy = scratch("truncated");
  fs::copy(dir, copy, fs::copy_options::recursive);
  {
    std::ifstream in(copy / "bob.csv");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(copy / "bob.csv", std::ios::trunc);
    out << text.substr(0, text.size() - 20);
  }
  CHECK_THROWS_AS(load(copy), std::runtime_error);

  fs::remove_all(copy);
  fs::copy(dir, copy, fs::copy_options::recursive);
  {
    nlohmann::json report;
    std::ifstream(copy / "report.json") >> report;
    report["schema_version"] = 99;
    std::ofstream(copy / "report.json") << report.dump();
  }
  CHECK_THROWS_AS(load(copy), std::runtime_error);

  fs::remove_all(copy);
  fs::copy(dir, copy, fs::copy_options::recursive);
  {
    nlohmann::json config;
    std::ifstream(copy / "config.json") >> config;
    config["samples_per_setting"] = 2500;
    std::ofstream(copy / "config.json") << config.dump();
  }
  CHECK_THROWS_AS(load(copy), std::runtime_error);

  CHECK_THROWS_AS(load(scratch("missing")), std::runtime_error);
  fs::remove_all(dir);
  fs::remove_all(copy);
}

TEST_CASE("replicate") {
  const ExperimentConfig c = small_config(1000, 0);
  const std::vector<RunArtifacts> runs = replicate(c, 2);
  REQUIRE(runs.size() == 2);
  CHECK(runs[0].config.seed == c.seed);
  CHECK(runs[1].config.seed == c.seed + 1);
  CHECK(same_reports(runs[0].report, run_honest(c).report));
  CHECK(runs[0].bob_records != runs[1].bob_records);
  CHECK(same_reports(replicate(c, 1)[0].report, runs[0].report));
  CHECK_THROWS_AS(replicate(c, 0), std::invalid_argument);
}

TEST_CASE("pooled reconstruction matches the s-weighted conditioned reconstructions") {
  ExperimentConfig c = small_config(20000, 0);
  const RunArtifacts a = run_honest(c);
  const std::size_t total = 6 * 20000;
  CMatrix mix = CMatrix::Zero(4, 4);
  for (const auto& [key, rho] : a.reconstructed_states)
    mix += static_cast<double>(a.report.counts.at(key)) / total * rho.matrix();
  CHECK(trace_distance(DensityMatrix(mix), *a.unconditioned_state) <= 0.03);
}

TEST_CASE("bootstrap error shrinks like 1/sqrt(N)") {
  ExperimentConfig small = small_config(4000, 60);
  ExperimentConfig large = small_config(16000, 60);
  const double s_small = run_honest(small).report.bootstrap_std;
  const double s_large = run_honest(large).report.bootstrap_std;
  const double ratio = s_small / s_large;
  MESSAGE("bootstrap std ratio " << ratio);
  CHECK(ratio > 1.5);
  CHECK(ratio < 2.7);
}

TEST_CASE("adversaries stay below the bound") {
  ExperimentConfig c = small_config(5000, 40);
  c.R = 0.5;
  for (AdversaryStrategy s :
       {AdversaryStrategy::separable_honest, AdversaryStrategy::sign_random, AdversaryStrategy::best_deterministic}) {
    const RunArtifacts a = run_adversary(c, s);
    CHECK(a.provenance.at("adversarial").get<bool>());
    CHECK(a.provenance.at("strategy").get<std::string>() == to_string(s));
    CHECK(a.report.violation <= 3.0 * a.report.bootstrap_std);
    if (s == AdversaryStrategy::sign_random) CHECK(std::abs(a.report.lhs) <= 3.0 * a.report.lhs_bootstrap_std);
  }
}

TEST_CASE("uneven LO scan still reconstructs") {
  ExperimentConfig c = small_config(5000, 0);
  c.bob_phase_plan = PhasePlan::uneven_scan;
  const RunArtifacts a = run_honest(c);
  CHECK(a.provenance.at("phase_coverage_ok").get<bool>());
  CHECK(std::abs(a.report.lhs - 0.6544) < 0.03);
}

TEST_CASE("full-scale record file parses quickly") {
  std::vector<QuadratureRecord> records(1200000);
  for (std::size_t i = 0; i < records.size(); ++i)
    records[i] = {Party::B, static_cast<int>(i % 6), 1.23456789, -0.987654321, i % 2 ? 1 : -1,
                  static_cast<std::int64_t>(i)};
  const fs::path dir = scratch("large");
  fs::create_directories(dir);
  write_records_csv(dir / "bob.csv", records);
  const auto start = std::chrono::steady_clock::now();
  const std::vector<QuadratureRecord> back = read_records_csv(dir / "bob.csv");
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  MESSAGE("parsed 1.2M rows in " << seconds << " s");
  CHECK(back.size() == records.size());
  CHECK(seconds < 10.0);
  fs::remove_all(dir);
}
