#pragma once

#include "dmq/env.hpp"
#include "dmq/errors.hpp"
#include "dmq/learner.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dmq {

/// Instance refused before learning because optimal Q is not linear in the features.
class RealizabilityError : public InputError {
 public:
  RealizabilityError(const std::string& what, double residual) : InputError(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

inline constexpr double kRealizabilityTolerance = 1e-8;

struct InstanceConfig {
  std::string generator = "tabular";  // tabular | lock | file
  int horizon = 3;
  int actions = 3;
  int states_per_level = 5;
  double reward_sparsity = 0.3;
  /// Tabular curation: regenerate until the minimum gap reaches this value.
  double min_gap = 0.0;
  int max_attempts = 1000;
  std::string features = "one_hot";  // one_hot | qstar
  int feature_dim = 0;               // qstar only; 0 means K
  double reward_at_end = 1.0;
  std::string key = "pattern";  // lock: pattern | seeded
  std::filesystem::path path;
};

struct ParamConfig {
  ParamMode mode = ParamMode::Practical;
  PracticalSettings practical;
  std::optional<double> gamma;
  std::optional<double> variation_constant;
};

struct ExperimentConfig {
  InstanceConfig instance;
  ParamConfig params;
  std::vector<std::uint64_t> seeds;
  std::uint64_t budget = 200000;
  std::filesystem::path output_dir = "dmq_out";
  std::int64_t eval_episodes = 10000;
  double success_threshold = 0.05;

  /// Strict parse: unknown keys, wrong types and nonpositive values are rejected
  /// with InputError.
  static ExperimentConfig from_json(const Json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

struct CurvePoint {
  std::uint64_t trajectories = 0;
  int level = 0;
  double value = 0.0;
  double best_value = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct RunRecord {
  std::uint64_t seed = 0;
  bool complete = false;
  std::string generator;
  int instance_attempts = 0;
  std::optional<double> min_gap;
  double realizability_residual = 0.0;
  double value_mc_mean = 0.0;
  double value_mc_stderr = 0.0;
  double value_exact = 0.0;
  double v_star = 0.0;
  double suboptimality = 0.0;
  double suboptimality_exact = 0.0;
  bool success = false;
  std::uint64_t trajectories = 0;
  std::uint64_t checking_trajectories = 0;
  std::uint64_t labeled_trajectories = 0;
  std::uint64_t refresh_trajectories = 0;
  std::vector<int> policy_set_sizes;
  double policy_cap = 0.0;
  std::vector<Json> triggers;
  std::vector<CurvePoint> learning_curve;
  std::uint64_t substreams_used = 0;
  Json schedule;
  double wall_clock_seconds = 0.0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

/// Stable field order. `include_timing = false` drops wall-clock fields, giving the
/// byte-comparable form used for determinism checks.
Json record_to_json(const RunRecord& r, bool include_timing = true);
RunRecord record_from_json(const Json& j);

/// Builds the instance for one seed (tabular generation is curated by min_gap).
struct PreparedInstance {
  Instance instance;
  int attempts = 1;
};
PreparedInstance prepare_instance(const InstanceConfig& config, std::uint64_t seed);

/// Runs every seed and returns one record per seed, in seed order.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config);

/// Single seed on a ready instance. Throws RealizabilityError when the residual
/// exceeds kRealizabilityTolerance.
RunRecord run_single(const ExperimentConfig& config, const PreparedInstance& prepared, std::uint64_t seed);

/// success_rate and mean_suboptimality are computed over completed runs (null when
/// there are none); mean_trajectories over all runs.
Json summarize(const std::vector<RunRecord>& records, double success_threshold);

/// Writes records.jsonl, learning_curve.csv and summary.json into `dir`. The
/// directory is probed for writability before anything is written.
void emit_metrics(const std::vector<RunRecord>& records, const std::filesystem::path& dir, double success_threshold);

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitBudget = 2, kExitInvariant = 3 };

}  // namespace dmq
