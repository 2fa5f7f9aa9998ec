#include "dmq/learner.hpp"

#include "dmq/errors.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace dmq {

namespace {

struct BudgetExhausted {};

class Stopwatch {
 public:
  explicit Stopwatch(double& sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
  ~Stopwatch() {
    sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  Stopwatch(const Stopwatch&) = delete;
  Stopwatch& operator=(const Stopwatch&) = delete;

 private:
  double& sink_;
  std::chrono::steady_clock::time_point start_;
};

std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) return std::numeric_limits<std::uint64_t>::max();
  return a * b;
}

void require_positive(double x, const char* name) {
  if (!(x > 0.0) || !std::isfinite(x)) throw ParameterError(std::string("schedule: ") + name + " must be positive");
}

const char* mode_name(ParamMode m) { return m == ParamMode::Theory ? "theory" : "practical"; }

}  // namespace

std::vector<std::string> ParamSchedule::validate() const {
  if (dim < 1 || horizon < 1 || actions < 1) throw ParameterError("schedule: dim, horizon and actions must be >= 1");
  require_positive(eps_t, "eps_t");
  require_positive(eps_s, "eps_s");
  require_positive(lambda_ridge, "lambda_ridge");
  require_positive(lambda_r, "lambda_r");
  require_positive(policy_cap, "policy_cap");
  if (samples_per_policy < 1) throw ParameterError("schedule: samples_per_policy must be >= 1");
  if (mode == ParamMode::Theory) {
    require_positive(epsilon, "epsilon");
    require_positive(eps_n, "eps_n");
  }
  std::vector<std::string> warnings;
  if (eps_s > eps_t * dim) {
    warnings.push_back("eps_s exceeds eps_t * d; the policy sets may grow quickly");
  }
  if (policy_cap < 1.0) warnings.push_back("policy_cap < 1 rejects every oracle trigger");
  return warnings;
}

Json ParamSchedule::to_json() const {
  return Json{{"mode", mode_name(mode)},
              {"epsilon", epsilon},
              {"gamma", gamma},
              {"variation_constant", variation_constant},
              {"dim", dim},
              {"horizon", horizon},
              {"actions", actions},
              {"eps_t", eps_t},
              {"eps_s", eps_s},
              {"eps_n", eps_n},
              {"lambda_ridge", lambda_ridge},
              {"lambda_r", lambda_r},
              {"policy_cap", policy_cap},
              {"samples_per_policy", samples_per_policy}};
}

ParamSchedule theory_params(double epsilon, double gamma, double variation_constant, int dim, int horizon,
                            int actions) {
  if (!(epsilon > 0.0) || !(gamma > 0.0) || !(variation_constant > 0.0) || dim < 1 || horizon < 1 || actions < 1) {
    throw ParameterError("theory_params: all inputs must be positive");
  }
  ParamSchedule p;
  p.mode = ParamMode::Theory;
  p.epsilon = epsilon;
  p.gamma = gamma;
  p.variation_constant = variation_constant;
  p.dim = dim;
  p.horizon = horizon;
  p.actions = actions;
  const double d = dim;
  p.eps_t = gamma * gamma * epsilon / (5.0 * horizon);
  p.eps_s = 96.0 * variation_constant * epsilon * epsilon * d * std::log(d / epsilon);
  p.eps_n = epsilon * epsilon;
  p.lambda_ridge = epsilon * epsilon;
  p.lambda_r = std::pow(epsilon, 6);
  p.policy_cap = 12.0 * d * std::log(d / epsilon);
  // The polylog exponent is not pinned down by the analysis; cubic is our choice.
  const double n = std::ceil(d / (p.lambda_r * p.lambda_r) * std::pow(std::log(1.0 / epsilon), 3));
  p.samples_per_policy = (n >= 1.8e19 || !std::isfinite(n)) ? std::numeric_limits<std::uint64_t>::max()
                                                             : static_cast<std::uint64_t>(std::max(1.0, n));
  return p;
}

ParamSchedule practical_params(int dim, int horizon, int actions, const PracticalSettings& s) {
  ParamSchedule p;
  p.mode = ParamMode::Practical;
  p.dim = dim;
  p.horizon = horizon;
  p.actions = actions;
  p.epsilon = s.epsilon;
  p.samples_per_policy = s.samples_per_policy;
  p.lambda_ridge = s.lambda_ridge;
  p.lambda_r = s.lambda_r;
  p.eps_t = s.eps_t;
  p.eps_s = s.eps_s.value_or(s.eps_t * dim / 2.0);
  p.eps_n = s.epsilon * s.epsilon;
  p.policy_cap = s.policy_cap.value_or(12.0 * dim * std::log(dim / s.epsilon));
  p.validate();
  return p;
}

GlobalState::GlobalState(int horizon, int actions, int dim, double norm_bound)
    : q(horizon, actions, dim, norm_bound), policy_sets(horizon), state_sets(horizon) {
  const auto uniform = std::make_shared<const UniformPolicy>();
  for (auto& set : policy_sets) set.push_back(uniform);
}

RunReport run_report(const GlobalState& state) {
  RunReport r;
  r.trajectories = state.trajectory_counter;
  r.phases = state.phases;
  for (const auto& set : state.policy_sets) r.policy_set_sizes.push_back(static_cast<int>(set.size()));
  r.policy_set_history = state.policy_set_history;
  r.triggers = state.triggers;
  r.completions = state.completions;
  r.substreams_used = state.substreams_used;
  r.wall_seconds = state.phases.checking_seconds + state.phases.labeled_seconds + state.phases.refresh_seconds;
  return r;
}

Learner::Learner(const EpisodicMdp& mdp, ParamSchedule schedule, std::uint64_t seed, std::uint64_t budget,
                 LevelObserver observer)
    : mdp_(mdp),
      schedule_(std::move(schedule)),
      seed_(seed),
      budget_(budget),
      observer_(std::move(observer)),
      state_(mdp.horizon(), mdp.action_count(), mdp.feature_dim(), 1.0 / schedule_.lambda_ridge) {
  schedule_.validate();
  if (schedule_.dim != mdp.feature_dim() || schedule_.horizon != mdp.horizon() ||
      schedule_.actions != mdp.action_count()) {
    throw ParameterError("Learner: schedule dimensions do not match the MDP");
  }
  if (budget == 0) throw ParameterError("Learner: budget must be positive");
  const double cap = static_cast<double>(mdp.horizon()) * std::floor(schedule_.policy_cap) * mdp.action_count();
  depth_cap_ = static_cast<std::uint64_t>(std::max(1.0, cap));
}

Rng Learner::next_substream() { return make_substream(seed_, state_.substreams_used++); }

Trajectory Learner::sample(const Policy& policy, Rng& rng) {
  if (state_.trajectory_counter >= budget_) throw BudgetExhausted{};
  return sample_trajectory(mdp_, policy, rng, state_.trajectory_counter);
}

void Learner::add_policy(int level, std::shared_ptr<const Policy> policy) {
  auto& set = state_.policy_sets[level];
  set.push_back(std::move(policy));
  if (static_cast<double>(set.size()) > schedule_.policy_cap) {
    throw InvariantViolation("policy set at level " + std::to_string(level) + " reached " +
                             std::to_string(set.size()) + " > cap " + std::to_string(schedule_.policy_cap) +
                             "; the schedule violates the policy-set size guarantee");
  }
  state_.policy_set_history.push_back(
      PolicySetChange{state_.trajectory_counter, level, static_cast<int>(set.size())});
}

bool Learner::run() {
  try {
    for (int h = mdp_.horizon() - 1; h >= 0; --h) learn_level(h);
  } catch (const BudgetExhausted&) {
    return false;
  }
  return true;
}

void Learner::check_level(int level, int action) {
  const int H = mdp_.horizon();
  const std::uint64_t n = schedule_.samples_per_policy;
  const auto snapshot = state_.policy_sets[level];
  for (const auto& roll_in : snapshot) {
    const auto composite = make_exploration_policy(roll_in, level, action, state_.q);

    std::vector<std::vector<int>> probe(H);
    {
      Stopwatch watch(state_.phases.checking_seconds);
      Rng rng = next_substream();
      const std::uint64_t before = state_.trajectory_counter;
      try {
        for (std::uint64_t i = 0; i < n; ++i) {
          const Trajectory traj = sample(*composite, rng);
          for (int hp = level + 1; hp < H; ++hp) probe[hp].push_back(traj.states[hp]);
        }
      } catch (const BudgetExhausted&) {
        state_.phases.checking += state_.trajectory_counter - before;
        throw;
      }
      state_.phases.checking += state_.trajectory_counter - before;
    }

    for (int hp = H - 1; hp > level; --hp) {
      const int policy_count = static_cast<int>(state_.policy_sets[hp].size());
      DsecQuery query;
      query.reference = mdp_.feature_rows(hp, state_.state_sets[hp]);
      query.probe = mdp_.feature_rows(hp, probe[hp]);
      query.eps1 = schedule_.eps_s / policy_count;
      query.eps2 = schedule_.eps_t;
      query.lambda_r = schedule_.lambda_r;
      query.policy_count = policy_count;
      const DsecVerdict verdict = dsec_check(query);
      if (!verdict.triggered) continue;

      add_policy(hp, composite);
      state_.triggers.push_back(TriggerEvent{hp, level, action, verdict.empty_reference, verdict.value,
                                             schedule_.eps_t, policy_count + 1, state_.trajectory_counter});
      learn_level(hp);
    }
  }
}

void Learner::learn_level(int level) {
  if (static_cast<std::uint64_t>(++depth_) > depth_cap_) {
    throw InvariantViolation("learn_level recursion depth exceeded H * B * K");
  }
  const std::uint64_t n = schedule_.samples_per_policy;
  for (int a = 0; a < mdp_.action_count(); ++a) {
    check_level(level, a);

    const auto& base = state_.policy_sets[level];
    std::vector<std::shared_ptr<const ExplorationPolicy>> composites;
    composites.reserve(base.size());
    for (const auto& roll_in : base) composites.push_back(make_exploration_policy(roll_in, level, a, state_.q));

    std::vector<int> states;
    std::vector<double> labels;
    {
      Stopwatch watch(state_.phases.labeled_seconds);
      Rng rng = next_substream();
      std::uniform_int_distribution<std::size_t> pick(0, composites.size() - 1);
      const std::uint64_t total = saturating_mul(n, composites.size());
      const std::uint64_t before = state_.trajectory_counter;
      try {
        for (std::uint64_t i = 0; i < total; ++i) {
          const Trajectory traj = sample(*composites[pick(rng)], rng);
          states.push_back(traj.states[level]);
          labels.push_back(traj.return_from(level));
        }
      } catch (const BudgetExhausted&) {
        state_.phases.labeled += state_.trajectory_counter - before;
        throw;
      }
      state_.phases.labeled += state_.trajectory_counter - before;
    }
    const Matrix features = mdp_.feature_rows(level, states);
    const Vector y = Eigen::Map<const Vector>(labels.data(), static_cast<Eigen::Index>(labels.size()));
    state_.q.set_coefficients(level, a, ridge_solve(features, y, schedule_.lambda_ridge));
  }

  {
    Stopwatch watch(state_.phases.refresh_seconds);
    std::vector<int> refreshed;
    const std::uint64_t before = state_.trajectory_counter;
    try {
      for (const auto& policy : state_.policy_sets[level]) {
        Rng rng = next_substream();
        for (std::uint64_t i = 0; i < n; ++i) refreshed.push_back(sample(*policy, rng).states[level]);
      }
    } catch (const BudgetExhausted&) {
      state_.phases.refresh += state_.trajectory_counter - before;
      throw;
    }
    state_.phases.refresh += state_.trajectory_counter - before;
    state_.state_sets[level] = std::move(refreshed);
  }

  const LevelCompletion done{level, state_.trajectory_counter};
  state_.completions.push_back(done);
  if (observer_) observer_(done, state_.q);
  --depth_;
}

std::shared_ptr<const GreedyPolicy> Learner::greedy_policy() const {
  return std::make_shared<const GreedyPolicy>(state_.q);
}

DmqResult dmq_run(const EpisodicMdp& mdp, const ParamSchedule& schedule, std::uint64_t seed, std::uint64_t budget,
                  LevelObserver observer) {
  Learner learner(mdp, schedule, seed, budget, std::move(observer));
  const bool complete = learner.run();
  RunReport report = run_report(learner.state());
  report.complete = complete;
  return DmqResult{learner.greedy_policy(), learner.state(), std::move(report)};
}

Json trigger_to_json(const TriggerEvent& t) {
  return Json{{"level", t.level},
              {"source_level", t.source_level},
              {"action", t.action},
              {"empty_reference", t.empty_reference},
              {"v", t.value ? Json(*t.value) : Json(nullptr)},
              {"threshold", t.threshold},
              {"policy_count_after", t.policy_count_after},
              {"trajectories", t.trajectories}};
}

}  // namespace dmq
