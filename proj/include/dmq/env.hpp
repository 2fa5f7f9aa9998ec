#pragma once

#include "dmq/linalg.hpp"
#include "dmq/rng.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

namespace dmq {

using Json = nlohmann::ordered_json;

/// Finite-support reward law.
struct RewardLaw {
  std::vector<double> values;
  std::vector<double> probs;

  double mean() const;
  double max() const;
  double sample(Rng& rng) const;
};

/// Raw tables of a tabular episodic MDP. Levels and states are zero-based; level 0
/// holds exactly one state, the fixed start state.
struct MdpTables {
  int horizon = 0;
  int action_count = 0;
  std::vector<int> state_counts;
  /// transitions[h][s][a] is a distribution over the states of level h+1; empty at h = H-1.
  std::vector<std::vector<std::vector<std::vector<double>>>> transitions;
  std::vector<std::vector<std::vector<RewardLaw>>> rewards;
  std::vector<std::vector<Vector>> features;
};

/// Largest total reward any single realization can collect (max over paths with
/// positive probability of the largest reward in each support).
double max_realized_return(const MdpTables& tables);

/// Immutable finite-horizon MDP with a feature map. Construction validates:
/// transition rows are distributions (sum within 1e-12), rewards are nonnegative
/// with every realized return <= 1, features share one dimension and have norm <= 1.
class EpisodicMdp {
 public:
  explicit EpisodicMdp(MdpTables tables);

  int horizon() const { return t_.horizon; }
  int action_count() const { return t_.action_count; }
  int state_count(int level) const { return t_.state_counts.at(level); }
  int feature_dim() const { return dim_; }

  const std::vector<double>& transition(int level, int state, int action) const {
    return t_.transitions[level][state][action];
  }
  const RewardLaw& reward(int level, int state, int action) const {
    return t_.rewards[level][state][action];
  }
  const Vector& feature(int level, int state) const { return t_.features[level][state]; }

  /// Feature rows for a list of states at one level.
  Matrix feature_rows(int level, std::span<const int> states) const;

  const MdpTables& tables() const { return t_; }

 private:
  MdpTables t_;
  int dim_ = 0;
};

class Trajectory {
 public:
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;

  /// On-the-go reward: sum of rewards from `level` to the end of the episode.
  double return_from(int level) const;
};

/// Interface for anything that can act in an EpisodicMdp. Implementations must be
/// immutable so they can be shared across rollouts.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual int act(const EpisodicMdp& mdp, int level, int state, Rng& rng) const = 0;

  /// Writes the action probabilities at (level, state) into `probs` (size K).
  virtual void action_distribution(const EpisodicMdp& mdp, int level, int state,
                                   std::span<double> probs) const = 0;

  virtual Json to_json() const = 0;
};

/// Deterministic lookup-table policy: one action per (level, state).
class TabularPolicy final : public Policy {
 public:
  TabularPolicy() = default;
  explicit TabularPolicy(std::vector<std::vector<int>> actions) : actions_(std::move(actions)) {}

  int act(const EpisodicMdp& mdp, int level, int state, Rng& rng) const override;
  void action_distribution(const EpisodicMdp& mdp, int level, int state,
                           std::span<double> probs) const override;
  Json to_json() const override;

  int action(int level, int state) const { return actions_.at(level).at(state); }
  const std::vector<std::vector<int>>& table() const { return actions_; }

 private:
  std::vector<std::vector<int>> actions_;
};

Trajectory sample_trajectory(const EpisodicMdp& mdp, const Policy& policy, Rng& rng);
Trajectory sample_trajectory(const EpisodicMdp& mdp, const Policy& policy, Rng& rng,
                             std::uint64_t& trajectory_counter);

/// Exact optimal values. Q[h][s][a], V[h][s]; ties in the optimal policy go to the
/// lowest action index. `min_gap` is +infinity when no state-action pair has a
/// positive gap.
struct GroundTruth {
  std::vector<std::vector<std::vector<double>>> q;
  std::vector<std::vector<double>> v;
  TabularPolicy optimal_policy;
  double min_gap = std::numeric_limits<double>::infinity();

  double start_value() const { return v.at(0).at(0); }
};

/// Gaps at or below this are treated as ties when computing the minimum gap.
inline constexpr double kGapTolerance = 1e-12;

GroundTruth value_iteration_exact(const EpisodicMdp& mdp);

/// State-occupancy distribution at every level under `policy`.
std::vector<std::vector<double>> state_distributions(const EpisodicMdp& mdp, const Policy& policy);

/// V^pi at every (level, state) by backward induction.
std::vector<std::vector<double>> policy_values_exact(const EpisodicMdp& mdp, const Policy& policy);

double policy_value_exact(const EpisodicMdp& mdp, const Policy& policy);

struct Instance {
  EpisodicMdp mdp;
  GroundTruth truth;
};

struct TabularSpec {
  int horizon = 3;
  int action_count = 3;
  int states_per_level = 5;
  double reward_sparsity = 0.3;
};

/// Random tabular instance: Dirichlet(1) transition rows, Bernoulli-style
/// finite-support rewards, level-local one-hot features. Rewards are scaled once so
/// that every realized return is <= 1 and every exact linear coefficient has norm <= 1.
Instance gen_random_tabular(const TabularSpec& spec, Rng& rng);

/// Combination lock: level 0 holds the start state, later levels hold a "good" state
/// (index 0) and a "dead" state (index 1). key[h] is the only action that keeps the
/// agent in the good state; reward is paid only for taking key[H-1] in the good state
/// at the last level. An empty key selects the pattern key[h] = (h + 1) % K.
Instance gen_combination_lock(int horizon, int action_count, double reward_at_end,
                              std::vector<int> key = {});

/// Replaces features by phi(s) = (Q*(s, 0..K-1), 0...) / c, c = max_s ||Q*(s, .)||.
/// Optimal Q is linear in these features by construction. Requires dim >= K.
Instance with_qstar_embedding(const Instance& instance, int dim);

/// Max over (level, action) of the largest absolute residual of the least-squares
/// fit of Q*(., a) on the level's features.
double verify_realizability(const EpisodicMdp& mdp, const GroundTruth& truth);

/// Minimum-norm least-squares coefficients theta[h][a] for Q*(., a) at level h.
std::vector<std::vector<Vector>> exact_coefficients(const EpisodicMdp& mdp, const GroundTruth& truth);

/// max over policies and levels of E[gap^2] / E[gap]^2 where gap = V* - V^pi under
/// the exact level-h occupancy of the policy. Pairs with zero expected gap are
/// skipped; returns 1 when every pair is skipped. Never below 1.
double estimate_variation_constant(const EpisodicMdp& mdp, const GroundTruth& truth,
                                   std::span<const Policy* const> policies);

TabularPolicy random_deterministic_policy(const EpisodicMdp& mdp, Rng& rng);

Json instance_to_json(const EpisodicMdp& mdp);
EpisodicMdp instance_from_json(const Json& j);
void save_instance(const EpisodicMdp& mdp, const std::filesystem::path& path);
EpisodicMdp load_instance(const std::filesystem::path& path);

}  // namespace dmq
