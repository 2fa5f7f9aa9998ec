#include "dmq/env.hpp"

#include "dmq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

namespace dmq {

namespace {

std::string at(int level, int state) {
  return "(level " + std::to_string(level) + ", state " + std::to_string(state) + ")";
}

int sample_index(const std::vector<double>& probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = static_cast<int>(i);
    if (u < acc) return last_positive;
  }
  return last_positive;
}

void validate_distribution(const std::vector<double>& p, std::size_t expected, const std::string& what) {
  if (p.size() != expected) {
    throw InputError(what + ": expected " + std::to_string(expected) + " entries, got " +
                     std::to_string(p.size()));
  }
  double sum = 0.0;
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0) throw InputError(what + ": negative or non-finite probability");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw InputError(what + ": probabilities sum to " + std::to_string(sum));
}

void scale_rewards(MdpTables& t, double factor) {
  for (auto& level : t.rewards)
    for (auto& state : level)
      for (auto& law : state)
        for (double& v : law.values) v *= factor;
}

std::vector<std::vector<Vector>> one_hot_features(const std::vector<int>& state_counts, int dim) {
  std::vector<std::vector<Vector>> out(state_counts.size());
  for (std::size_t h = 0; h < state_counts.size(); ++h) {
    for (int s = 0; s < state_counts[h]; ++s) out[h].push_back(Vector::Unit(dim, s));
  }
  return out;
}

double expected_next(const std::vector<double>& row, const std::vector<double>& next_values) {
  double acc = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) acc += row[i] * next_values[i];
  return acc;
}

}  // namespace

double RewardLaw::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) m += values[i] * probs[i];
  return m;
}

double RewardLaw::max() const {
  double m = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (probs[i] > 0.0) m = std::max(m, values[i]);
  return m;
}

double RewardLaw::sample(Rng& rng) const {
  if (values.size() == 1) return values[0];
  return values[sample_index(probs, rng)];
}

double max_realized_return(const MdpTables& t) {
  std::vector<double> next;
  for (int h = t.horizon - 1; h >= 0; --h) {
    std::vector<double> cur(t.state_counts[h], 0.0);
    for (int s = 0; s < t.state_counts[h]; ++s) {
      for (int a = 0; a < t.action_count; ++a) {
        double tail = 0.0;
        if (h + 1 < t.horizon) {
          const auto& row = t.transitions[h][s][a];
          for (std::size_t j = 0; j < row.size(); ++j)
            if (row[j] > 0.0) tail = std::max(tail, next[j]);
        }
        cur[s] = std::max(cur[s], t.rewards[h][s][a].max() + tail);
      }
    }
    next = std::move(cur);
  }
  return next.empty() ? 0.0 : next[0];
}

EpisodicMdp::EpisodicMdp(MdpTables tables) : t_(std::move(tables)) {
  const int H = t_.horizon;
  const int K = t_.action_count;
  if (H < 1) throw InputError("EpisodicMdp: horizon must be >= 1");
  if (K < 1) throw InputError("EpisodicMdp: action count must be >= 1");
  if (static_cast<int>(t_.state_counts.size()) != H) throw InputError("EpisodicMdp: state_counts size != horizon");
  if (t_.state_counts[0] != 1) throw InputError("EpisodicMdp: level 0 must hold exactly the start state");
  for (int n : t_.state_counts)
    if (n < 1) throw InputError("EpisodicMdp: every level needs at least one state");
  if (static_cast<int>(t_.transitions.size()) != H || static_cast<int>(t_.rewards.size()) != H ||
      static_cast<int>(t_.features.size()) != H) {
    throw InputError("EpisodicMdp: per-level tables must have horizon entries");
  }
  dim_ = static_cast<int>(t_.features[0].empty() ? 0 : t_.features[0][0].size());
  if (dim_ < 1) throw InputError("EpisodicMdp: feature dimension must be >= 1");

  for (int h = 0; h < H; ++h) {
    const int n = t_.state_counts[h];
    if (static_cast<int>(t_.transitions[h].size()) != n || static_cast<int>(t_.rewards[h].size()) != n ||
        static_cast<int>(t_.features[h].size()) != n) {
      throw InputError("EpisodicMdp: level " + std::to_string(h) + " tables disagree with state count");
    }
    for (int s = 0; s < n; ++s) {
      const Vector& phi = t_.features[h][s];
      if (phi.size() != dim_) throw InputError("EpisodicMdp: feature dimension mismatch at " + at(h, s));
      if (!phi.allFinite()) throw InputError("EpisodicMdp: non-finite feature at " + at(h, s));
      if (phi.norm() > 1.0 + 1e-12) throw InputError("EpisodicMdp: feature norm exceeds 1 at " + at(h, s));
      if (static_cast<int>(t_.transitions[h][s].size()) != K || static_cast<int>(t_.rewards[h][s].size()) != K) {
        throw InputError("EpisodicMdp: expected one entry per action at " + at(h, s));
      }
      for (int a = 0; a < K; ++a) {
        const RewardLaw& law = t_.rewards[h][s][a];
        if (law.values.empty()) throw InputError("EpisodicMdp: empty reward support at " + at(h, s));
        validate_distribution(law.probs, law.values.size(), "EpisodicMdp reward law at " + at(h, s));
        for (double v : law.values)
          if (!std::isfinite(v) || v < 0.0) throw InputError("EpisodicMdp: negative reward at " + at(h, s));
        if (h + 1 < H) {
          validate_distribution(t_.transitions[h][s][a], static_cast<std::size_t>(t_.state_counts[h + 1]),
                                "EpisodicMdp transition row at " + at(h, s));
        } else if (!t_.transitions[h][s][a].empty()) {
          throw InputError("EpisodicMdp: last level must not have transitions");
        }
      }
    }
  }
  const double top = max_realized_return(t_);
  if (top > 1.0 + 1e-12) {
    throw InputError("EpisodicMdp: a realized return can reach " + std::to_string(top) + " > 1");
  }
}

Matrix EpisodicMdp::feature_rows(int level, std::span<const int> states) const {
  Matrix out(static_cast<Eigen::Index>(states.size()), dim_);
  for (std::size_t i = 0; i < states.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = feature(level, states[i]).transpose();
  return out;
}

double Trajectory::return_from(int level) const {
  double acc = 0.0;
  for (std::size_t h = static_cast<std::size_t>(level); h < rewards.size(); ++h) acc += rewards[h];
  return acc;
}

int TabularPolicy::act(const EpisodicMdp&, int level, int state, Rng&) const { return action(level, state); }

void TabularPolicy::action_distribution(const EpisodicMdp&, int level, int state, std::span<double> probs) const {
  std::fill(probs.begin(), probs.end(), 0.0);
  probs[static_cast<std::size_t>(action(level, state))] = 1.0;
}

Json TabularPolicy::to_json() const { return Json{{"kind", "tabular"}, {"actions", actions_}}; }

Trajectory sample_trajectory(const EpisodicMdp& mdp, const Policy& policy, Rng& rng) {
  const int H = mdp.horizon();
  const int K = mdp.action_count();
  Trajectory traj;
  traj.states.reserve(H);
  traj.actions.reserve(H);
  traj.rewards.reserve(H);
  int s = 0;
  for (int h = 0; h < H; ++h) {
    const int a = policy.act(mdp, h, s, rng);
    if (a < 0 || a >= K) {
      throw ContractViolation("policy returned action " + std::to_string(a) + " outside [0, " +
                              std::to_string(K) + ") at " + at(h, s));
    }
    traj.states.push_back(s);
    traj.actions.push_back(a);
    traj.rewards.push_back(mdp.reward(h, s, a).sample(rng));
    if (h + 1 < H) s = sample_index(mdp.transition(h, s, a), rng);
  }
  return traj;
}

Trajectory sample_trajectory(const EpisodicMdp& mdp, const Policy& policy, Rng& rng,
                             std::uint64_t& trajectory_counter) {
  Trajectory traj = sample_trajectory(mdp, policy, rng);
  ++trajectory_counter;
  return traj;
}

GroundTruth value_iteration_exact(const EpisodicMdp& mdp) {
  const int H = mdp.horizon();
  const int K = mdp.action_count();
  GroundTruth gt;
  gt.q.resize(H);
  gt.v.resize(H);
  std::vector<std::vector<int>> greedy(H);
  for (int h = H - 1; h >= 0; --h) {
    const int n = mdp.state_count(h);
    gt.q[h].assign(n, std::vector<double>(K, 0.0));
    gt.v[h].assign(n, 0.0);
    greedy[h].assign(n, 0);
    for (int s = 0; s < n; ++s) {
      for (int a = 0; a < K; ++a) {
        double q = mdp.reward(h, s, a).mean();
        if (h + 1 < H) q += expected_next(mdp.transition(h, s, a), gt.v[h + 1]);
        gt.q[h][s][a] = q;
      }
      int best = 0;
      for (int a = 1; a < K; ++a)
        if (gt.q[h][s][a] > gt.q[h][s][best]) best = a;
      greedy[h][s] = best;
      gt.v[h][s] = gt.q[h][s][best];
      for (int a = 0; a < K; ++a) {
        const double gap = gt.v[h][s] - gt.q[h][s][a];
        if (gap > kGapTolerance) gt.min_gap = std::min(gt.min_gap, gap);
      }
    }
  }
  gt.optimal_policy = TabularPolicy(std::move(greedy));
  return gt;
}

std::vector<std::vector<double>> state_distributions(const EpisodicMdp& mdp, const Policy& policy) {
  const int H = mdp.horizon();
  const int K = mdp.action_count();
  std::vector<std::vector<double>> dist(H);
  dist[0] = {1.0};
  std::vector<double> probs(K);
  for (int h = 0; h + 1 < H; ++h) {
    dist[h + 1].assign(mdp.state_count(h + 1), 0.0);
    for (int s = 0; s < mdp.state_count(h); ++s) {
      if (dist[h][s] == 0.0) continue;
      policy.action_distribution(mdp, h, s, probs);
      for (int a = 0; a < K; ++a) {
        if (probs[a] == 0.0) continue;
        const auto& row = mdp.transition(h, s, a);
        for (std::size_t j = 0; j < row.size(); ++j) dist[h + 1][j] += dist[h][s] * probs[a] * row[j];
      }
    }
  }
  return dist;
}

std::vector<std::vector<double>> policy_values_exact(const EpisodicMdp& mdp, const Policy& policy) {
  const int H = mdp.horizon();
  const int K = mdp.action_count();
  std::vector<std::vector<double>> v(H);
  std::vector<double> probs(K);
  for (int h = H - 1; h >= 0; --h) {
    v[h].assign(mdp.state_count(h), 0.0);
    for (int s = 0; s < mdp.state_count(h); ++s) {
      policy.action_distribution(mdp, h, s, probs);
      double acc = 0.0;
      for (int a = 0; a < K; ++a) {
        if (probs[a] == 0.0) continue;
        double q = mdp.reward(h, s, a).mean();
        if (h + 1 < H) q += expected_next(mdp.transition(h, s, a), v[h + 1]);
        acc += probs[a] * q;
      }
      v[h][s] = acc;
    }
  }
  return v;
}

double policy_value_exact(const EpisodicMdp& mdp, const Policy& policy) {
  return policy_values_exact(mdp, policy)[0][0];
}

Instance gen_random_tabular(const TabularSpec& spec, Rng& rng) {
  if (spec.horizon < 1 || spec.action_count < 1 || spec.states_per_level < 1) {
    throw ParameterError("gen_random_tabular: horizon, action count and states per level must be >= 1");
  }
  if (!(spec.reward_sparsity >= 0.0 && spec.reward_sparsity < 1.0)) {
    throw ParameterError("gen_random_tabular: reward_sparsity must lie in [0, 1)");
  }
  const int H = spec.horizon;
  const int K = spec.action_count;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);

  for (int attempt = 0; attempt < 10; ++attempt) {
    MdpTables t;
    t.horizon = H;
    t.action_count = K;
    t.state_counts.assign(H, spec.states_per_level);
    t.state_counts[0] = 1;
    t.transitions.resize(H);
    t.rewards.resize(H);
    bool any_reward = false;
    for (int h = 0; h < H; ++h) {
      const int n = t.state_counts[h];
      t.transitions[h].assign(n, std::vector<std::vector<double>>(K));
      t.rewards[h].assign(n, std::vector<RewardLaw>(K));
      for (int s = 0; s < n; ++s) {
        for (int a = 0; a < K; ++a) {
          if (h + 1 < H) {
            std::vector<double> row(t.state_counts[h + 1]);
            for (double& x : row) x = expo(rng);
            const double total = std::accumulate(row.begin(), row.end(), 0.0);
            for (double& x : row) x /= total;
            t.transitions[h][s][a] = std::move(row);
          }
          RewardLaw& law = t.rewards[h][s][a];
          if (unif(rng) < spec.reward_sparsity) {
            law = RewardLaw{{0.0}, {1.0}};
          } else {
            const double magnitude = unif(rng);
            const double p = 0.2 + 0.8 * unif(rng);
            law = RewardLaw{{0.0, magnitude}, {1.0 - p, p}};
            any_reward = any_reward || magnitude > 0.0;
          }
        }
      }
    }
    if (!any_reward) continue;

    t.features = one_hot_features(t.state_counts, spec.states_per_level);
    scale_rewards(t, 1.0 / (max_realized_return(t) + 1e-9));

    EpisodicMdp first(t);
    GroundTruth truth = value_iteration_exact(first);
    double max_norm = 0.0;
    for (const auto& level : exact_coefficients(first, truth))
      for (const Vector& theta : level) max_norm = std::max(max_norm, theta.norm());
    if (max_norm <= 1.0) return Instance{std::move(first), std::move(truth)};

    scale_rewards(t, 1.0 / (max_norm + 1e-9));
    EpisodicMdp scaled(std::move(t));
    GroundTruth scaled_truth = value_iteration_exact(scaled);
    return Instance{std::move(scaled), std::move(scaled_truth)};
  }
  throw ParameterError("gen_random_tabular: every attempt produced an all-zero reward table");
}

Instance gen_combination_lock(int horizon, int action_count, double reward_at_end, std::vector<int> key) {
  if (horizon < 1) throw ParameterError("gen_combination_lock: horizon must be >= 1");
  if (action_count < 2) throw ParameterError("gen_combination_lock: need at least two actions");
  if (!(reward_at_end > 0.0 && reward_at_end <= 1.0)) {
    throw ParameterError("gen_combination_lock: reward_at_end must lie in (0, 1]");
  }
  const int H = horizon;
  const int K = action_count;
  if (key.empty()) {
    for (int h = 0; h < H; ++h) key.push_back((h + 1) % K);
  }
  if (static_cast<int>(key.size()) != H) throw ParameterError("gen_combination_lock: key length must equal horizon");
  for (int k : key)
    if (k < 0 || k >= K) throw ParameterError("gen_combination_lock: key action out of range");

  MdpTables t;
  t.horizon = H;
  t.action_count = K;
  t.state_counts.assign(H, 2);
  t.state_counts[0] = 1;
  t.transitions.resize(H);
  t.rewards.resize(H);
  for (int h = 0; h < H; ++h) {
    const int n = t.state_counts[h];
    t.transitions[h].assign(n, std::vector<std::vector<double>>(K));
    t.rewards[h].assign(n, std::vector<RewardLaw>(K, RewardLaw{{0.0}, {1.0}}));
    for (int s = 0; s < n; ++s) {
      for (int a = 0; a < K; ++a) {
        const bool stays_good = (s == 0 && a == key[h]);
        if (h + 1 < H) t.transitions[h][s][a] = stays_good ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.0, 1.0};
        if (h + 1 == H && stays_good) t.rewards[h][s][a] = RewardLaw{{reward_at_end}, {1.0}};
      }
    }
  }
  t.features = one_hot_features(t.state_counts, 2);
  EpisodicMdp mdp(std::move(t));
  GroundTruth truth = value_iteration_exact(mdp);
  return Instance{std::move(mdp), std::move(truth)};
}

Instance with_qstar_embedding(const Instance& instance, int dim) {
  const EpisodicMdp& mdp = instance.mdp;
  const int K = mdp.action_count();
  if (dim < K) throw ParameterError("with_qstar_embedding: dim must be >= action count");
  double c = 0.0;
  for (const auto& level : instance.truth.q)
    for (const auto& row : level) c = std::max(c, Eigen::Map<const Vector>(row.data(), K).norm());
  if (c == 0.0) c = 1.0;
  MdpTables t = mdp.tables();
  for (int h = 0; h < mdp.horizon(); ++h) {
    for (int s = 0; s < mdp.state_count(h); ++s) {
      Vector phi = Vector::Zero(dim);
      for (int a = 0; a < K; ++a) phi(a) = instance.truth.q[h][s][a] / c;
      t.features[h][s] = std::move(phi);
    }
  }
  return Instance{EpisodicMdp(std::move(t)), instance.truth};
}

std::vector<std::vector<Vector>> exact_coefficients(const EpisodicMdp& mdp, const GroundTruth& truth) {
  const int K = mdp.action_count();
  std::vector<std::vector<Vector>> out(mdp.horizon());
  for (int h = 0; h < mdp.horizon(); ++h) {
    const int n = mdp.state_count(h);
    std::vector<int> states(n);
    std::iota(states.begin(), states.end(), 0);
    const Matrix phi = mdp.feature_rows(h, states);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(phi);
    for (int a = 0; a < K; ++a) {
      Vector q(n);
      for (int s = 0; s < n; ++s) q(s) = truth.q[h][s][a];
      out[h].push_back(cod.solve(q));
    }
  }
  return out;
}

double verify_realizability(const EpisodicMdp& mdp, const GroundTruth& truth) {
  const auto theta = exact_coefficients(mdp, truth);
  double worst = 0.0;
  for (int h = 0; h < mdp.horizon(); ++h) {
    for (int a = 0; a < mdp.action_count(); ++a) {
      for (int s = 0; s < mdp.state_count(h); ++s) {
        worst = std::max(worst, std::abs(mdp.feature(h, s).dot(theta[h][a]) - truth.q[h][s][a]));
      }
    }
  }
  return worst;
}

double estimate_variation_constant(const EpisodicMdp& mdp, const GroundTruth& truth,
                                   std::span<const Policy* const> policies) {
  double c = 1.0;
  for (const Policy* policy : policies) {
    const auto dist = state_distributions(mdp, *policy);
    const auto values = policy_values_exact(mdp, *policy);
    for (int h = 0; h < mdp.horizon(); ++h) {
      double first = 0.0;
      double second = 0.0;
      for (int s = 0; s < mdp.state_count(h); ++s) {
        const double gap = std::abs(values[h][s] - truth.v[h][s]);
        first += dist[h][s] * gap;
        second += dist[h][s] * gap * gap;
      }
      if (first <= 1e-15) continue;
      c = std::max(c, second / (first * first));
    }
  }
  return c;
}

TabularPolicy random_deterministic_policy(const EpisodicMdp& mdp, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, mdp.action_count() - 1);
  std::vector<std::vector<int>> table(mdp.horizon());
  for (int h = 0; h < mdp.horizon(); ++h) {
    table[h].resize(mdp.state_count(h));
    for (int& a : table[h]) a = pick(rng);
  }
  return TabularPolicy(std::move(table));
}

Json instance_to_json(const EpisodicMdp& mdp) {
  const MdpTables& t = mdp.tables();
  Json levels = Json::array();
  for (int h = 0; h < t.horizon; ++h) {
    Json states = Json::array();
    for (int s = 0; s < t.state_counts[h]; ++s) {
      Json actions = Json::array();
      for (int a = 0; a < t.action_count; ++a) {
        const RewardLaw& law = t.rewards[h][s][a];
        actions.push_back(Json{{"reward", {{"values", law.values}, {"probs", law.probs}}},
                               {"next", t.transitions[h][s][a]}});
      }
      const Vector& phi = t.features[h][s];
      states.push_back(Json{{"feature", std::vector<double>(phi.data(), phi.data() + phi.size())},
                            {"actions", std::move(actions)}});
    }
    levels.push_back(Json{{"states", std::move(states)}});
  }
  return Json{{"format", "dmq-instance"},   {"version", 1},
              {"horizon", t.horizon},       {"actions", t.action_count},
              {"state_counts", t.state_counts}, {"feature_dim", mdp.feature_dim()},
              {"levels", std::move(levels)}};
}

EpisodicMdp instance_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "dmq-instance") throw InputError("instance: unexpected format tag");
    if (j.at("version").get<int>() != 1) throw InputError("instance: unsupported version");
    MdpTables t;
    t.horizon = j.at("horizon").get<int>();
    t.action_count = j.at("actions").get<int>();
    t.state_counts = j.at("state_counts").get<std::vector<int>>();
    const auto& levels = j.at("levels");
    if (static_cast<int>(levels.size()) != t.horizon) throw InputError("instance: level count != horizon");
    t.transitions.resize(t.horizon);
    t.rewards.resize(t.horizon);
    t.features.resize(t.horizon);
    for (int h = 0; h < t.horizon; ++h) {
      for (const auto& st : levels[h].at("states")) {
        const auto phi = st.at("feature").get<std::vector<double>>();
        t.features[h].push_back(Eigen::Map<const Vector>(phi.data(), static_cast<Eigen::Index>(phi.size())));
        std::vector<std::vector<double>> rows;
        std::vector<RewardLaw> laws;
        for (const auto& act : st.at("actions")) {
          rows.push_back(act.at("next").get<std::vector<double>>());
          laws.push_back(RewardLaw{act.at("reward").at("values").get<std::vector<double>>(),
                                   act.at("reward").at("probs").get<std::vector<double>>()});
        }
        t.transitions[h].push_back(std::move(rows));
        t.rewards[h].push_back(std::move(laws));
      }
    }
    return EpisodicMdp(std::move(t));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("instance: malformed JSON: ") + e.what());
  }
}

void save_instance(const EpisodicMdp& mdp, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << instance_to_json(mdp).dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

EpisodicMdp load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("instance " + path.string() + ": " + e.what());
  }
  return instance_from_json(j);
}

}  // namespace dmq
