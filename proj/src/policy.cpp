#include "dmq/policy.hpp"

#include "dmq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dmq {

namespace {

Json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const Json& j) {
  const auto raw = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(raw.data(), static_cast<Eigen::Index>(raw.size()));
}

int argmax_lowest(const Vector& values) {
  int best = 0;
  for (Eigen::Index a = 1; a < values.size(); ++a)
    if (values(a) > values(best)) best = static_cast<int>(a);
  return best;
}

void one_hot(std::span<double> probs, int action) {
  std::fill(probs.begin(), probs.end(), 0.0);
  probs[static_cast<std::size_t>(action)] = 1.0;
}

}  // namespace

LinearQTable::LinearQTable(int horizon, int action_count, int dim, double norm_bound)
    : horizon_(horizon), actions_(action_count), dim_(dim), norm_bound_(norm_bound) {
  if (horizon < 1 || action_count < 1 || dim < 1) throw ParameterError("LinearQTable: sizes must be >= 1");
  if (!(norm_bound > 0.0)) throw ParameterError("LinearQTable: norm bound must be positive");
  theta_.assign(horizon, std::vector<Vector>(action_count, Vector::Zero(dim)));
}

void LinearQTable::set_coefficients(int level, int action, Vector theta) {
  if (theta.size() != dim_) throw InputError("LinearQTable: coefficient dimension mismatch");
  if (!theta.allFinite()) throw InputError("LinearQTable: non-finite coefficients");
  const double norm = theta.norm();
  if (norm > norm_bound_ * (1.0 + 1e-12)) {
    throw InvariantViolation("LinearQTable: coefficient norm " + std::to_string(norm) + " exceeds bound " +
                             std::to_string(norm_bound_) + " at level " + std::to_string(level) +
                             ", action " + std::to_string(action));
  }
  theta_.at(level).at(action) = std::move(theta);
}

Json LinearQTable::to_json() const {
  Json coeffs = Json::array();
  for (const auto& level : theta_) {
    Json row = Json::array();
    for (const Vector& t : level) row.push_back(vector_json(t));
    coeffs.push_back(std::move(row));
  }
  Json bound = std::isfinite(norm_bound_) ? Json(norm_bound_) : Json(nullptr);
  return Json{{"horizon", horizon_}, {"actions", actions_}, {"dim", dim_}, {"norm_bound", bound},
              {"coefficients", std::move(coeffs)}};
}

LinearQTable LinearQTable::from_json(const Json& j) {
  const double bound = j.at("norm_bound").is_null() ? std::numeric_limits<double>::infinity()
                                                     : j.at("norm_bound").get<double>();
  LinearQTable q(j.at("horizon").get<int>(), j.at("actions").get<int>(), j.at("dim").get<int>(), bound);
  const auto& coeffs = j.at("coefficients");
  for (int h = 0; h < q.horizon_; ++h)
    for (int a = 0; a < q.actions_; ++a) q.set_coefficients(h, a, vector_from_json(coeffs.at(h).at(a)));
  return q;
}

bool operator==(const LinearQTable& a, const LinearQTable& b) {
  if (a.horizon_ != b.horizon_ || a.actions_ != b.actions_ || a.dim_ != b.dim_) return false;
  if (a.norm_bound_ != b.norm_bound_) return false;
  for (int h = 0; h < a.horizon_; ++h)
    for (int k = 0; k < a.actions_; ++k)
      if (a.theta_[h][k] != b.theta_[h][k]) return false;
  return true;
}

int greedy_action(const LinearQTable& q, int level, const Vector& phi) {
  int best = 0;
  double best_value = q.value(level, 0, phi);
  for (int a = 1; a < q.action_count(); ++a) {
    const double v = q.value(level, a, phi);
    if (v > best_value) {
      best = a;
      best_value = v;
    }
  }
  return best;
}

int UniformPolicy::act(const EpisodicMdp& mdp, int, int, Rng& rng) const {
  std::uniform_int_distribution<int> pick(0, mdp.action_count() - 1);
  return pick(rng);
}

void UniformPolicy::action_distribution(const EpisodicMdp& mdp, int, int, std::span<double> probs) const {
  std::fill(probs.begin(), probs.end(), 1.0 / mdp.action_count());
}

Json UniformPolicy::to_json() const { return Json{{"kind", "uniform"}}; }

int GreedyPolicy::act(const EpisodicMdp& mdp, int level, int state, Rng&) const {
  return greedy_action(q_, level, mdp.feature(level, state));
}

void GreedyPolicy::action_distribution(const EpisodicMdp& mdp, int level, int state, std::span<double> probs) const {
  one_hot(probs, greedy_action(q_, level, mdp.feature(level, state)));
}

Json GreedyPolicy::to_json() const { return Json{{"kind", "greedy"}, {"q", q_.to_json()}}; }

ExplorationPolicy::ExplorationPolicy(std::shared_ptr<const Policy> roll_in, int switch_level, int forced_action,
                                     const LinearQTable& current)
    : roll_in_(std::move(roll_in)), switch_level_(switch_level), forced_action_(forced_action) {
  if (switch_level < 0 || switch_level >= current.horizon()) throw ParameterError("ExplorationPolicy: switch level out of range");
  if (forced_action < 0 || forced_action >= current.action_count()) {
    throw ParameterError("ExplorationPolicy: forced action out of range");
  }
  if (switch_level > 0 && !roll_in_) throw ParameterError("ExplorationPolicy: roll-in policy required below the switch level");
  for (int h = switch_level + 1; h < current.horizon(); ++h) {
    Matrix rows(current.action_count(), current.dim());
    for (int a = 0; a < current.action_count(); ++a) rows.row(a) = current.coefficients(h, a).transpose();
    tail_.push_back(std::move(rows));
  }
}

int ExplorationPolicy::tail_action(int level, const Vector& phi) const {
  return argmax_lowest(tail_.at(static_cast<std::size_t>(level - switch_level_ - 1)) * phi);
}

int ExplorationPolicy::act(const EpisodicMdp& mdp, int level, int state, Rng& rng) const {
  if (level < switch_level_) return roll_in_->act(mdp, level, state, rng);
  if (level == switch_level_) return forced_action_;
  return tail_action(level, mdp.feature(level, state));
}

void ExplorationPolicy::action_distribution(const EpisodicMdp& mdp, int level, int state,
                                            std::span<double> probs) const {
  if (level < switch_level_) {
    roll_in_->action_distribution(mdp, level, state, probs);
  } else if (level == switch_level_) {
    one_hot(probs, forced_action_);
  } else {
    one_hot(probs, tail_action(level, mdp.feature(level, state)));
  }
}

Json ExplorationPolicy::to_json() const {
  Json tail = Json::array();
  for (const Matrix& rows : tail_) {
    Json level = Json::array();
    for (Eigen::Index a = 0; a < rows.rows(); ++a) level.push_back(vector_json(rows.row(a).transpose()));
    tail.push_back(std::move(level));
  }
  return Json{{"kind", "exploration"},
              {"switch_level", switch_level_},
              {"forced_action", forced_action_},
              {"roll_in", roll_in_ ? roll_in_->to_json() : Json(nullptr)},
              {"tail", std::move(tail)}};
}

std::shared_ptr<const ExplorationPolicy> ExplorationPolicy::from_json(const Json& j) {
  std::shared_ptr<ExplorationPolicy> p(new ExplorationPolicy());
  p->switch_level_ = j.at("switch_level").get<int>();
  p->forced_action_ = j.at("forced_action").get<int>();
  if (!j.at("roll_in").is_null()) p->roll_in_ = policy_from_json(j.at("roll_in"));
  for (const auto& level : j.at("tail")) {
    std::vector<Vector> rows;
    for (const auto& t : level) rows.push_back(vector_from_json(t));
    if (rows.empty()) throw InputError("exploration policy: empty tail level");
    Matrix m(static_cast<Eigen::Index>(rows.size()), rows.front().size());
    for (std::size_t a = 0; a < rows.size(); ++a) m.row(static_cast<Eigen::Index>(a)) = rows[a].transpose();
    p->tail_.push_back(std::move(m));
  }
  return p;
}

std::shared_ptr<const ExplorationPolicy> make_exploration_policy(std::shared_ptr<const Policy> roll_in,
                                                                 int switch_level, int forced_action,
                                                                 const LinearQTable& current) {
  return std::make_shared<const ExplorationPolicy>(std::move(roll_in), switch_level, forced_action, current);
}

MonteCarloValue policy_value_mc(const EpisodicMdp& mdp, const Policy& policy, std::int64_t episodes, Rng& rng) {
  if (episodes < 1) throw ParameterError("policy_value_mc: episodes must be >= 1");
  // Welford accumulation keeps the variance exact-zero for constant returns.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::int64_t i = 0; i < episodes; ++i) {
    const double y = sample_trajectory(mdp, policy, rng).return_from(0);
    const double delta = y - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (y - mean);
  }
  MonteCarloValue out{mean, 0.0};
  if (episodes > 1) {
    const double n = static_cast<double>(episodes);
    out.standard_error = std::sqrt(std::max(0.0, m2 / (n - 1.0)) / n);
  }
  return out;
}

std::shared_ptr<const Policy> policy_from_json(const Json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "uniform") return std::make_shared<const UniformPolicy>();
    if (kind == "greedy") return std::make_shared<const GreedyPolicy>(LinearQTable::from_json(j.at("q")));
    if (kind == "tabular") return std::make_shared<const TabularPolicy>(j.at("actions").get<std::vector<std::vector<int>>>());
    if (kind == "exploration") return ExplorationPolicy::from_json(j);
    throw InputError("policy: unknown kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("policy: malformed JSON: ") + e.what());
  }
}

}  // namespace dmq
