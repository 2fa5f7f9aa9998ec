#pragma once

#include "dmq/env.hpp"

#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

namespace dmq {

/// Linear Q estimates f_h^a(s) = phi(s)^T theta_h^a for every (level, action).
/// Writes are checked against `norm_bound` (1 / lambda_ridge inside the learner).
class LinearQTable {
 public:
  LinearQTable(int horizon, int action_count, int dim,
               double norm_bound = std::numeric_limits<double>::infinity());

  int horizon() const { return horizon_; }
  int action_count() const { return actions_; }
  int dim() const { return dim_; }
  double norm_bound() const { return norm_bound_; }

  const Vector& coefficients(int level, int action) const { return theta_.at(level).at(action); }
  /// Throws InvariantViolation when ||theta|| exceeds the norm bound.
  void set_coefficients(int level, int action, Vector theta);

  double value(int level, int action, const Vector& phi) const { return phi.dot(coefficients(level, action)); }

  Json to_json() const;
  static LinearQTable from_json(const Json& j);

  friend bool operator==(const LinearQTable& a, const LinearQTable& b);

 private:
  int horizon_;
  int actions_;
  int dim_;
  double norm_bound_;
  std::vector<std::vector<Vector>> theta_;
};

/// Lowest-index maximizer of phi^T theta_h^a over a.
int greedy_action(const LinearQTable& q, int level, const Vector& phi);

/// pi(s) = unif(A) at every state.
class UniformPolicy final : public Policy {
 public:
  int act(const EpisodicMdp& mdp, int level, int state, Rng& rng) const override;
  void action_distribution(const EpisodicMdp& mdp, int level, int state, std::span<double> probs) const override;
  Json to_json() const override;
};

/// Greedy policy over a private copy of a LinearQTable.
class GreedyPolicy final : public Policy {
 public:
  explicit GreedyPolicy(LinearQTable q) : q_(std::move(q)) {}

  int act(const EpisodicMdp& mdp, int level, int state, Rng& rng) const override;
  void action_distribution(const EpisodicMdp& mdp, int level, int state, std::span<double> probs) const override;
  Json to_json() const override;

  const LinearQTable& table() const { return q_; }

 private:
  LinearQTable q_;
};

/// Composite roll-in / forced-action / greedy roll-out policy:
///   level < switch_level  -> roll-in policy
///   level == switch_level -> forced action
///   level > switch_level  -> greedy w.r.t. coefficients frozen at construction.
class ExplorationPolicy final : public Policy {
 public:
  ExplorationPolicy(std::shared_ptr<const Policy> roll_in, int switch_level, int forced_action,
                    const LinearQTable& current);

  int act(const EpisodicMdp& mdp, int level, int state, Rng& rng) const override;
  void action_distribution(const EpisodicMdp& mdp, int level, int state, std::span<double> probs) const override;
  Json to_json() const override;

  int switch_level() const { return switch_level_; }
  int forced_action() const { return forced_action_; }
  const std::shared_ptr<const Policy>& roll_in() const { return roll_in_; }

  static std::shared_ptr<const ExplorationPolicy> from_json(const Json& j);

 private:
  ExplorationPolicy() = default;
  int tail_action(int level, const Vector& phi) const;

  std::shared_ptr<const Policy> roll_in_;
  int switch_level_ = 0;
  int forced_action_ = 0;
  /// tail_[level - switch_level - 1] is a K x d matrix whose rows are theta^a.
  std::vector<Matrix> tail_;
};

std::shared_ptr<const ExplorationPolicy> make_exploration_policy(std::shared_ptr<const Policy> roll_in,
                                                                 int switch_level, int forced_action,
                                                                 const LinearQTable& current);

struct MonteCarloValue {
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Sample mean and standard error of the episode return over `episodes` rollouts.
MonteCarloValue policy_value_mc(const EpisodicMdp& mdp, const Policy& policy, std::int64_t episodes, Rng& rng);

/// Inverse of Policy::to_json for the policy kinds defined here and TabularPolicy.
std::shared_ptr<const Policy> policy_from_json(const Json& j);

}  // namespace dmq
