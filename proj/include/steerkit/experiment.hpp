#pragma once

#include "steerkit/channels.hpp"
#include "steerkit/fock.hpp"
#include "steerkit/homodyne.hpp"
#include "steerkit/steering.hpp"
#include "steerkit/tomography.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace steerkit {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kCodeVersion = "steerkit 1.0.0";

enum class PhasePlan { uniform_scan, uneven_scan, fixed_list };

enum class AdversaryStrategy { separable_honest, sign_random, best_deterministic };

std::string to_string(PhasePlan plan);
PhasePlan parse_phase_plan(const std::string& name);
std::string to_string(AdversaryStrategy strategy);
/// Throws std::invalid_argument for an unknown tag.
AdversaryStrategy parse_strategy(const std::string& name);

struct ExperimentConfig {
  double R = 0.38;
  SourceParams source = SourceParams::defaults();
  NoiseParams noise = NoiseParams::defaults();
  SteeringSettings settings = SteeringSettings::defaults();
  int samples_per_setting = 20000;
  PhasePlan bob_phase_plan = PhasePlan::uniform_scan;
  std::vector<double> bob_phase_list;  ///< used by fixed_list, cycled per trial
  double bob_phase_jitter = 0.0;       ///< RMS error of Bob's LO phase [rad]
  std::uint64_t seed = 1;
  std::optional<AdversaryStrategy> adversary;
  int fock_levels = kDefaultFockLevels;
  int bootstrap_resamples = 200;
  BinningSpec binning;
  MleOptions mle;
  MleOptions bootstrap_mle{500, 1e-8, false};

  static constexpr int kFullScaleSamples = 200000;
  static constexpr int kMinSamplesForClaim = 1000;

  /// Throws std::invalid_argument on any out-of-range field.
  void validate() const;
};

/// Flat JSON: R, p0, p1, p2, p_h, eta_h, l_A, delta_theta (rad) or
/// delta_theta_deg, eta_B, n_settings, f, samples_per_setting, bob_phase_plan,
/// bob_phase_list, bob_phase_jitter, seed, adversary, fock_levels,
/// bootstrap_resamples, schema_version. Missing keys keep their defaults.
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& j);

struct RunArtifacts {
  ExperimentConfig config;
  std::vector<QuadratureRecord> alice_records;
  std::vector<QuadratureRecord> bob_records;
  std::map<CellKey, DensityMatrix> reconstructed_states;  ///< full truncation, per (j, s)
  std::optional<DensityMatrix> unconditioned_state;
  SteeringReport report;
  nlohmann::json provenance;  ///< seed, code version, adversary, eta_B used, MLE diagnostics, warnings
};

struct SimulatedRecords {
  std::vector<QuadratureRecord> alice;
  std::vector<QuadratureRecord> bob;
};

/// Generates Alice's and Bob's records for config (honest unless
/// config.adversary is set). Trials are split into shards with independent
/// streams derive_seed(seed, setting, shard); output does not depend on the
/// thread count.
SimulatedRecords simulate_records(const ExperimentConfig& config);

/// Tomography + steering analysis of persisted records. eta_B_override
/// replaces the efficiency compensated in the reconstruction.
RunArtifacts analyze_records(const ExperimentConfig& config, std::vector<QuadratureRecord> alice,
                             std::vector<QuadratureRecord> bob, std::optional<double> eta_B_override = std::nullopt);

RunArtifacts run_honest(const ExperimentConfig& config);
RunArtifacts run_adversary(const ExperimentConfig& config, AdversaryStrategy strategy);

/// k runs with seeds seed + i, i = 0..k-1.
std::vector<RunArtifacts> replicate(const ExperimentConfig& config, int k);

/// Writes config.json, alice.csv, bob.csv, states/*.json and report.json.
void persist(const RunArtifacts& artifacts, const std::filesystem::path& dir);
/// Writes only the derived outputs (states/*.json and report.json), leaving
/// config and records untouched.
void persist_analysis(const RunArtifacts& artifacts, const std::filesystem::path& dir);
/// Throws std::runtime_error on a missing directory or file, a schema-version
/// mismatch, truncated data or record counts that disagree with the config.
RunArtifacts load(const std::filesystem::path& dir);

/// report.json contents: the steering report plus provenance.
nlohmann::json report_json(const RunArtifacts& artifacts);

}  // namespace steerkit
