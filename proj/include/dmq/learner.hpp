#pragma once

#include "dmq/dsec.hpp"
#include "dmq/env.hpp"
#include "dmq/policy.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dmq {

enum class ParamMode { Theory, Practical };

/// Parameters of one learner run.
///   eps_t          oracle trigger threshold (eps2 of every check)
///   eps_s          constraint budget; a check at level h' uses eps_s / |Pi_h'|
///   lambda_ridge   ridge penalty of the per-(level, action) regression
///   lambda_r       oracle regularizer, used as lambda_r / |Pi_h'|
///   policy_cap     B, hard upper bound on |Pi_h|
///   samples_per_policy  N
struct ParamSchedule {
  ParamMode mode = ParamMode::Practical;
  double epsilon = 0.05;
  double gamma = 0.0;
  double variation_constant = 1.0;
  int dim = 0;
  int horizon = 0;
  int actions = 0;

  double eps_t = 0.0;
  double eps_s = 0.0;
  double eps_n = 0.0;
  double lambda_ridge = 0.0;
  double lambda_r = 0.0;
  double policy_cap = 0.0;
  std::uint64_t samples_per_policy = 0;

  /// Throws ParameterError on a nonpositive parameter; returns advisory warnings.
  std::vector<std::string> validate() const;
  Json to_json() const;
};

/// Closed-form schedule used in the sample-complexity analysis:
/// eps_t = gamma^2 eps / (5H), eps_s = 96 C eps^2 d ln(d/eps), eps_N = eps^2,
/// lambda_ridge = eps^2, lambda_r = eps^6, B = 12 d ln(d/eps),
/// N = ceil(d / lambda_r^2 * ln(1/eps)^3), saturated at the uint64 maximum.
ParamSchedule theory_params(double epsilon, double gamma, double variation_constant, int dim, int horizon,
                            int actions);

struct PracticalSettings {
  std::uint64_t samples_per_policy = 200;
  double lambda_ridge = 1e-3;
  double lambda_r = 1e-4;
  double eps_t = 1e-2;
  /// Defaults to eps_t * d / 2.
  std::optional<double> eps_s;
  /// Target accuracy; only used for the default policy cap.
  double epsilon = 0.05;
  /// Defaults to 12 d ln(d / epsilon).
  std::optional<double> policy_cap;
};

ParamSchedule practical_params(int dim, int horizon, int actions, const PracticalSettings& settings = {});

struct TriggerEvent {
  int level = 0;         // h': the level whose policy set grew
  int source_level = 0;  // h: the level being checked
  int action = 0;
  bool empty_reference = false;
  std::optional<double> value;
  double threshold = 0.0;
  int policy_count_after = 0;
  std::uint64_t trajectories = 0;
};

struct PolicySetChange {
  std::uint64_t trajectories = 0;
  int level = 0;
  int size = 0;
};

struct LevelCompletion {
  int level = 0;
  std::uint64_t trajectories = 0;
};

struct PhaseTotals {
  std::uint64_t checking = 0;
  std::uint64_t labeled = 0;
  std::uint64_t refresh = 0;
  double checking_seconds = 0.0;
  double labeled_seconds = 0.0;
  double refresh_seconds = 0.0;
};

/// The learner's global variables: Q estimates, per-level policy sets and state
/// sets, plus accounting.
struct GlobalState {
  LinearQTable q;
  std::vector<std::vector<std::shared_ptr<const Policy>>> policy_sets;
  std::vector<std::vector<int>> state_sets;
  std::uint64_t trajectory_counter = 0;
  std::uint64_t substreams_used = 0;
  PhaseTotals phases;
  std::vector<TriggerEvent> triggers;
  std::vector<PolicySetChange> policy_set_history;
  std::vector<LevelCompletion> completions;

  GlobalState(int horizon, int actions, int dim, double norm_bound);
};

struct RunReport {
  bool complete = true;
  std::uint64_t trajectories = 0;
  PhaseTotals phases;
  std::vector<int> policy_set_sizes;
  std::vector<PolicySetChange> policy_set_history;
  std::vector<TriggerEvent> triggers;
  std::vector<LevelCompletion> completions;
  std::uint64_t substreams_used = 0;
  double wall_seconds = 0.0;
};

RunReport run_report(const GlobalState& state);

/// Called after every completed learn_level with the current estimates.
using LevelObserver = std::function<void(const LevelCompletion&, const LinearQTable&)>;

/// Runs the exploration loop over one MDP. All randomness comes from substreams
/// derived from (seed, phase counter), one substream per collection phase.
class Learner {
 public:
  Learner(const EpisodicMdp& mdp, ParamSchedule schedule, std::uint64_t seed, std::uint64_t budget,
          LevelObserver observer = {});

  /// Levels h = H-1, ..., 0 in turn. Returns false when the trajectory budget ran out.
  bool run();

  /// Checks later levels for every action, then fits theta_h^a on fresh labeled data
  /// and refreshes D_h with N states per policy in Pi_h.
  void learn_level(int level);

  /// For each policy in (a snapshot of) Pi_h, rolls out its (h, a) composite N times
  /// and runs the shift check at h' = H-1, ..., h+1; a trigger adds the composite to
  /// Pi_h' and re-learns level h'.
  void check_level(int level, int action);

  std::shared_ptr<const GreedyPolicy> greedy_policy() const;

  const GlobalState& state() const { return state_; }
  const ParamSchedule& schedule() const { return schedule_; }

 private:
  Rng next_substream();
  Trajectory sample(const Policy& policy, Rng& rng);
  void add_policy(int level, std::shared_ptr<const Policy> policy);

  const EpisodicMdp& mdp_;
  ParamSchedule schedule_;
  std::uint64_t seed_;
  std::uint64_t budget_;
  LevelObserver observer_;
  GlobalState state_;
  int depth_ = 0;
  std::uint64_t depth_cap_;
};

struct DmqResult {
  std::shared_ptr<const GreedyPolicy> policy;
  GlobalState state;
  RunReport report;
};

/// Full run. Budget exhaustion is not an error: the result is flagged incomplete and
/// carries the greedy policy of the estimates reached so far.
DmqResult dmq_run(const EpisodicMdp& mdp, const ParamSchedule& schedule, std::uint64_t seed, std::uint64_t budget,
                  LevelObserver observer = {});

Json trigger_to_json(const TriggerEvent& t);

}  // namespace dmq
