#include "dmq/dsec.hpp"
#include "dmq/env.hpp"
#include "dmq/errors.hpp"
#include "dmq/learner.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace dmq;

namespace {

EpisodicMdp single_decision(std::vector<double> rewards) {
  MdpTables t;
  t.horizon = 1;
  t.action_count = static_cast<int>(rewards.size());
  t.state_counts = {1};
  t.transitions = {{std::vector<std::vector<double>>(rewards.size())}};
  t.rewards = {{{}}};
  for (double r : rewards) t.rewards[0][0].push_back(RewardLaw{{r}, {1.0}});
  t.features = {{Vector::Ones(1)}};
  return EpisodicMdp(std::move(t));
}

ParamSchedule practical_for(const EpisodicMdp& mdp, PracticalSettings s = {}) {
  return practical_params(mdp.feature_dim(), mdp.horizon(), mdp.action_count(), s);
}

}  // namespace

TEST(TheoryParams, WorkedExamples) {
  const ParamSchedule p = theory_params(0.1, 0.5, 1.0, 4, 5, 2);
  EXPECT_NEAR(p.eps_t, 1e-3, 1e-18);
  EXPECT_NEAR(p.lambda_ridge, 0.01, 1e-17);
  EXPECT_NEAR(p.lambda_r, 1e-6, 1e-21);
  EXPECT_NEAR(p.eps_n, 0.01, 1e-17);
  // 96 * 0.01 * 4 * ln 40 = 3.84 * 3.6888794541139363
  EXPECT_NEAR(p.eps_s, 14.165297103797515, 1e-12);
  // 48 * ln 40
  EXPECT_NEAR(p.policy_cap, 177.06621379746894, 1e-10);
}

TEST(TheoryParams, SampleCountIsCubicPolylogAndSaturates) {
  const ParamSchedule p = theory_params(0.1, 0.5, 1.0, 4, 5, 2);
  // 4 / 1e-12 * ln(10)^3 = 4e12 * 12.20807...
  const double expected = std::ceil(4.0 / (1e-6 * 1e-6) * std::pow(std::log(10.0), 3));
  EXPECT_EQ(p.samples_per_policy, static_cast<std::uint64_t>(expected));
  EXPECT_EQ(theory_params(0.01, 0.5, 1.0, 4, 5, 2).samples_per_policy, std::numeric_limits<std::uint64_t>::max());
}

TEST(TheoryParams, RejectsNonPositiveInputs) {
  EXPECT_THROW(theory_params(0.0, 0.5, 1.0, 4, 5, 2), ParameterError);
  EXPECT_THROW(theory_params(0.1, -0.5, 1.0, 4, 5, 2), ParameterError);
  EXPECT_THROW(theory_params(0.1, 0.5, 0.0, 4, 5, 2), ParameterError);
  EXPECT_THROW(theory_params(0.1, 0.5, 1.0, 0, 5, 2), ParameterError);
}

TEST(PracticalParams, DefaultsAndGuardrail) {
  const ParamSchedule p = practical_params(5, 3, 3);
  EXPECT_EQ(p.samples_per_policy, 200u);
  EXPECT_DOUBLE_EQ(p.lambda_ridge, 1e-3);
  EXPECT_DOUBLE_EQ(p.lambda_r, 1e-4);
  EXPECT_DOUBLE_EQ(p.eps_t, 1e-2);
  EXPECT_DOUBLE_EQ(p.eps_s, 0.025);
  EXPECT_DOUBLE_EQ(p.policy_cap, 60.0 * std::log(100.0));
  EXPECT_TRUE(p.validate().empty());

  PracticalSettings loose;
  loose.eps_s = 1.0;
  EXPECT_FALSE(practical_params(5, 3, 3, loose).validate().empty());
  PracticalSettings bad;
  bad.lambda_r = 0.0;
  EXPECT_THROW(practical_params(5, 3, 3, bad), ParameterError);
}

TEST(Learner, SingleLevelPicksBetterActionWithExactAccounting) {
  const EpisodicMdp mdp = single_decision({0.2, 0.7});
  const ParamSchedule s = practical_for(mdp);
  const DmqResult r = dmq_run(mdp, s, 1, 1'000'000);
  ASSERT_TRUE(r.report.complete);
  Rng rng(0);
  EXPECT_EQ(r.policy->act(mdp, 0, 0, rng), 1);
  const std::uint64_t n = s.samples_per_policy;
  // |Pi_1| stays 1: labeled = sum_a N |Pi_1^a| = 2N, checking = 2N (no oracle calls), refresh = N.
  EXPECT_EQ(r.report.phases.labeled, 2 * n);
  EXPECT_EQ(r.report.phases.checking, 2 * n);
  EXPECT_EQ(r.report.phases.refresh, n);
  EXPECT_EQ(r.report.trajectories, 5 * n);
  EXPECT_TRUE(r.report.triggers.empty());
  EXPECT_EQ(r.state.state_sets[0].size(), n);
}

TEST(Learner, CheckAtLastLevelOnlyCountsTrajectories) {
  const Instance lock = gen_combination_lock(3, 2, 1.0);
  Learner learner(lock.mdp, practical_for(lock.mdp), 3, 1'000'000);
  learner.check_level(2, 0);
  EXPECT_EQ(learner.state().trajectory_counter, 200u);
  EXPECT_TRUE(learner.state().triggers.empty());
  for (const auto& set : learner.state().policy_sets) EXPECT_EQ(set.size(), 1u);
  for (const auto& d : learner.state().state_sets) EXPECT_TRUE(d.empty());
}

TEST(Learner, FirstCheckAgainstEmptyReferenceTriggers) {
  const Instance lock = gen_combination_lock(3, 2, 1.0);
  Learner learner(lock.mdp, practical_for(lock.mdp), 4, 1'000'000);
  learner.check_level(1, 0);
  const auto& triggers = learner.state().triggers;
  ASSERT_FALSE(triggers.empty());
  EXPECT_EQ(triggers.front().level, 2);
  EXPECT_EQ(triggers.front().source_level, 1);
  EXPECT_TRUE(triggers.front().empty_reference);
  EXPECT_FALSE(triggers.front().value.has_value());
  EXPECT_EQ(learner.state().policy_sets[2].size(), 2u);
  // The recursive learn_level(2) refreshed D_2.
  EXPECT_EQ(learner.state().state_sets[2].size(), 200u * 2u);
}

TEST(Learner, UnseenGoodStateTriggersOnLock) {
  // Reference: every level-1 sample sits in the dead state. Probe: every sample in the
  // good state. One-hot d = 2, so v = eps1 / lambda' = (eps_t d / 2) / lambda_r = 100.
  const Instance lock = gen_combination_lock(3, 2, 1.0);
  const ParamSchedule s = practical_for(lock.mdp);
  const std::vector<int> dead(200, 1), good(200, 0);
  DsecQuery q;
  q.reference = lock.mdp.feature_rows(1, dead);
  q.probe = lock.mdp.feature_rows(1, good);
  q.eps1 = s.eps_s;
  q.eps2 = s.eps_t;
  q.lambda_r = s.lambda_r;
  const DsecVerdict v = dsec_check(q);
  EXPECT_TRUE(v.triggered);
  EXPECT_NEAR(*v.value, 100.0, 1e-8);
}

TEST(Learner, LastLevelRegressionIsAccurate) {
  Rng rng(17);
  TabularSpec spec;
  spec.states_per_level = 3;
  const Instance inst = gen_random_tabular(spec, rng);
  PracticalSettings ps;
  ps.samples_per_policy = 500;
  ps.lambda_ridge = 1e-3;
  Learner learner(inst.mdp, practical_for(inst.mdp, ps), 5, 10'000'000);
  learner.learn_level(inst.mdp.horizon() - 1);
  const int h = inst.mdp.horizon() - 1;
  const auto visits = state_distributions(inst.mdp, UniformPolicy{});
  for (int s = 0; s < inst.mdp.state_count(h); ++s) {
    if (visits[h][s] < 0.05) continue;
    for (int a = 0; a < inst.mdp.action_count(); ++a) {
      const double pred = learner.state().q.value(h, a, inst.mdp.feature(h, s));
      EXPECT_NEAR(pred, inst.truth.q[h][s][a], 0.05) << "state " << s << " action " << a;
    }
  }
  EXPECT_EQ(learner.state().state_sets[h].size(), 500u);
}

TEST(Learner, LockIsSolvedInMostSeeds) {
  const Instance lock = gen_combination_lock(3, 2, 1.0);
  int optimal = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DmqResult r = dmq_run(lock.mdp, practical_for(lock.mdp), seed, 1'000'000);
    if (r.report.complete && policy_value_exact(lock.mdp, *r.policy) == 1.0) ++optimal;
  }
  EXPECT_GE(optimal, 18);
}

TEST(Learner, TriggerLogMatchesPolicySetGrowth) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Instance lock = gen_combination_lock(5, 2, 1.0);
    const DmqResult r = dmq_run(lock.mdp, practical_for(lock.mdp), seed, 1'000'000);
    std::size_t grown = 0;
    for (int size : r.report.policy_set_sizes) grown += static_cast<std::size_t>(size - 1);
    EXPECT_EQ(r.report.triggers.size(), grown);
    EXPECT_EQ(r.report.policy_set_history.size(), grown);

    std::vector<int> last(5, 1);
    for (const auto& change : r.report.policy_set_history) {
      EXPECT_EQ(change.size, last[change.level] + 1);
      last[change.level] = change.size;
    }
    for (const auto& t : r.report.triggers) {
      if (!t.empty_reference) EXPECT_GE(*t.value, t.threshold);
      EXPECT_GT(t.level, t.source_level);
    }
  }
}

TEST(Learner, AccountingAddsUp) {
  Rng rng(2);
  const Instance inst = gen_random_tabular(TabularSpec{}, rng);
  std::uint64_t observed = 0;
  int completions = 0;
  const DmqResult r = dmq_run(inst.mdp, practical_for(inst.mdp), 9, 1'000'000,
                              [&](const LevelCompletion& c, const LinearQTable&) {
                                EXPECT_GE(c.trajectories, observed);
                                observed = c.trajectories;
                                ++completions;
                              });
  const auto& p = r.report.phases;
  EXPECT_EQ(p.checking + p.labeled + p.refresh, r.report.trajectories);
  EXPECT_EQ(observed, r.report.trajectories);
  EXPECT_EQ(static_cast<std::size_t>(completions), r.report.completions.size());
  for (int h = 0; h < inst.mdp.horizon(); ++h)
    EXPECT_EQ(r.state.state_sets[h].size(), 200u * r.state.policy_sets[h].size());
  for (int h = 0; h < 3; ++h)
    for (int a = 0; a < 3; ++a) EXPECT_LE(r.state.q.coefficients(h, a).norm(), 1.0 / 1e-3);
}

TEST(Learner, BudgetExhaustionIsReportedNotThrown) {
  const Instance lock = gen_combination_lock(3, 2, 1.0);
  const DmqResult r = dmq_run(lock.mdp, practical_for(lock.mdp), 1, 50);
  EXPECT_FALSE(r.report.complete);
  EXPECT_EQ(r.report.trajectories, 50u);
  EXPECT_EQ(r.report.phases.checking + r.report.phases.labeled + r.report.phases.refresh, 50u);
  ASSERT_NE(r.policy, nullptr);
}

TEST(Learner, SafetyCapViolationIsHardError) {
  const Instance lock = gen_combination_lock(5, 2, 1.0);
  PracticalSettings s;
  s.policy_cap = 1.0;
  EXPECT_THROW(dmq_run(lock.mdp, practical_for(lock.mdp, s), 1, 1'000'000), InvariantViolation);
}

TEST(Learner, DeterministicInSeed) {
  Rng rng(4);
  const Instance inst = gen_random_tabular(TabularSpec{}, rng);
  const DmqResult a = dmq_run(inst.mdp, practical_for(inst.mdp), 42, 1'000'000);
  const DmqResult b = dmq_run(inst.mdp, practical_for(inst.mdp), 42, 1'000'000);
  EXPECT_TRUE(a.state.q == b.state.q);
  EXPECT_EQ(a.report.trajectories, b.report.trajectories);
  EXPECT_EQ(a.state.state_sets, b.state.state_sets);
  EXPECT_EQ(a.report.triggers.size(), b.report.triggers.size());
  const DmqResult c = dmq_run(inst.mdp, practical_for(inst.mdp), 43, 1'000'000);
  EXPECT_NE(a.state.state_sets, c.state.state_sets);
}

TEST(Learner, RejectsMismatchedSchedule) {
  const Instance lock = gen_combination_lock(3, 2, 1.0);
  EXPECT_THROW(Learner(lock.mdp, practical_params(3, 3, 2), 1, 100), ParameterError);
  EXPECT_THROW(Learner(lock.mdp, practical_for(lock.mdp), 1, 0), ParameterError);
}
