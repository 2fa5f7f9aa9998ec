#include "dmq/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace dmq {

namespace {

constexpr std::uint64_t kInstanceTag = 0x494e5354414e4345ULL;
constexpr std::uint64_t kEvalTag = 0x4556414c55415445ULL;
constexpr std::uint64_t kVariationTag = 0x5641524941544eULL;
constexpr std::uint64_t kKeyTag = 0x4c4f434b4b4559ULL;

Rng tagged_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t counter) {
  return make_substream(splitmix64(seed) ^ tag, counter);
}

/// Reads a JSON object key by key and rejects whatever was not consumed.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InputError(where_ + ": expected a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  std::optional<T> get(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InputError(where_ + "." + key + ": wrong type");
    }
  }

  template <class T>
  void read(const std::string& key, T& out) {
    if (auto v = get<T>(key)) out = *v;
  }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw InputError(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void require_positive(double x, const std::string& name) {
  if (!(x > 0.0) || !std::isfinite(x)) throw InputError("config: " + name + " must be positive");
}

InstanceConfig parse_instance(const Json& j) {
  StrictObject obj(j, "config.instance");
  InstanceConfig c;
  obj.read("generator", c.generator);
  if (c.generator == "tabular") {
    obj.read("horizon", c.horizon);
    obj.read("actions", c.actions);
    obj.read("states_per_level", c.states_per_level);
    obj.read("reward_sparsity", c.reward_sparsity);
    obj.read("min_gap", c.min_gap);
    obj.read("max_attempts", c.max_attempts);
    obj.read("features", c.features);
    obj.read("feature_dim", c.feature_dim);
    if (c.states_per_level < 1 || c.max_attempts < 1) throw InputError("config.instance: counts must be >= 1");
    if (c.reward_sparsity < 0.0 || c.reward_sparsity >= 1.0) throw InputError("config.instance: reward_sparsity in [0, 1)");
    if (c.min_gap < 0.0) throw InputError("config.instance: min_gap must be >= 0");
    if (c.features != "one_hot" && c.features != "qstar") throw InputError("config.instance: features must be one_hot or qstar");
    if (c.feature_dim < 0) throw InputError("config.instance: feature_dim must be >= 0");
  } else if (c.generator == "lock") {
    obj.read("horizon", c.horizon);
    obj.read("actions", c.actions);
    obj.read("reward_at_end", c.reward_at_end);
    obj.read("key", c.key);
    if (c.key != "pattern" && c.key != "seeded") throw InputError("config.instance: key must be pattern or seeded");
    if (!(c.reward_at_end > 0.0 && c.reward_at_end <= 1.0)) throw InputError("config.instance: reward_at_end in (0, 1]");
  } else if (c.generator == "file") {
    std::string path;
    obj.read("path", path);
    if (path.empty()) throw InputError("config.instance: file generator needs a path");
    c.path = path;
  } else {
    throw InputError("config.instance: unknown generator '" + c.generator + "'");
  }
  if (c.generator != "file" && (c.horizon < 1 || c.actions < 1)) {
    throw InputError("config.instance: horizon and actions must be >= 1");
  }
  obj.finish();
  return c;
}

ParamConfig parse_params(const Json& j) {
  StrictObject obj(j, "config.params");
  ParamConfig p;
  std::string mode = "practical";
  obj.read("mode", mode);
  if (mode == "theory") {
    p.mode = ParamMode::Theory;
  } else if (mode != "practical") {
    throw InputError("config.params: mode must be theory or practical");
  }
  PracticalSettings& s = p.practical;
  obj.read("samples_per_policy", s.samples_per_policy);
  obj.read("lambda_ridge", s.lambda_ridge);
  obj.read("lambda_r", s.lambda_r);
  obj.read("eps_t", s.eps_t);
  obj.read("epsilon", s.epsilon);
  if (auto v = obj.get<double>("eps_s")) s.eps_s = *v;
  if (auto v = obj.get<double>("policy_cap")) s.policy_cap = *v;
  if (auto v = obj.get<double>("gamma")) p.gamma = *v;
  if (auto v = obj.get<double>("variation_constant")) p.variation_constant = *v;
  obj.finish();

  if (s.samples_per_policy < 1) throw InputError("config.params: samples_per_policy must be >= 1");
  require_positive(s.lambda_ridge, "lambda_ridge");
  require_positive(s.lambda_r, "lambda_r");
  require_positive(s.eps_t, "eps_t");
  require_positive(s.epsilon, "epsilon");
  if (s.eps_s) require_positive(*s.eps_s, "eps_s");
  if (s.policy_cap) require_positive(*s.policy_cap, "policy_cap");
  if (p.gamma) require_positive(*p.gamma, "gamma");
  if (p.variation_constant) require_positive(*p.variation_constant, "variation_constant");
  return p;
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Json curve_to_json(const CurvePoint& c) {
  return Json{{"trajectories", c.trajectories}, {"level", c.level}, {"value", c.value}, {"best_value", c.best_value}};
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  StrictObject obj(j, "config");
  ExperimentConfig c;
  if (!obj.has("instance")) throw InputError("config: missing 'instance'");
  c.instance = parse_instance(obj.raw("instance"));
  if (obj.has("params")) c.params = parse_params(obj.raw("params"));
  obj.read("seeds", c.seeds);
  obj.read("budget", c.budget);
  std::string out;
  obj.read("output_dir", out);
  if (!out.empty()) c.output_dir = out;
  obj.read("eval_episodes", c.eval_episodes);
  obj.read("success_threshold", c.success_threshold);
  obj.finish();

  if (c.seeds.empty()) throw InputError("config: at least one seed is required");
  if (c.budget == 0) throw InputError("config: budget must be positive");
  if (c.eval_episodes < 1) throw InputError("config: eval_episodes must be >= 1");
  require_positive(c.success_threshold, "success_threshold");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

Json record_to_json(const RunRecord& r, bool include_timing) {
  Json curve = Json::array();
  for (const auto& c : r.learning_curve) curve.push_back(curve_to_json(c));
  Json j{{"seed", r.seed},
         {"complete", r.complete},
         {"generator", r.generator},
         {"instance_attempts", r.instance_attempts},
         {"min_gap", r.min_gap ? Json(*r.min_gap) : Json(nullptr)},
         {"realizability_residual", r.realizability_residual},
         {"value_mc_mean", r.value_mc_mean},
         {"value_mc_stderr", r.value_mc_stderr},
         {"value_exact", r.value_exact},
         {"v_star", r.v_star},
         {"suboptimality", r.suboptimality},
         {"suboptimality_exact", r.suboptimality_exact},
         {"success", r.success},
         {"trajectories", r.trajectories},
         {"checking_trajectories", r.checking_trajectories},
         {"labeled_trajectories", r.labeled_trajectories},
         {"refresh_trajectories", r.refresh_trajectories},
         {"policy_set_sizes", r.policy_set_sizes},
         {"policy_cap", r.policy_cap},
         {"triggers", r.triggers},
         {"learning_curve", std::move(curve)},
         {"rng", {{"scheme", "splitmix64(seed, counter)"}, {"substreams_used", r.substreams_used}}},
         {"schedule", r.schedule}};
  if (include_timing) j["wall_clock_seconds"] = r.wall_clock_seconds;
  return j;
}

RunRecord record_from_json(const Json& j) {
  try {
    RunRecord r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.complete = j.at("complete").get<bool>();
    r.generator = j.at("generator").get<std::string>();
    r.instance_attempts = j.at("instance_attempts").get<int>();
    if (!j.at("min_gap").is_null()) r.min_gap = j.at("min_gap").get<double>();
    r.realizability_residual = j.at("realizability_residual").get<double>();
    r.value_mc_mean = j.at("value_mc_mean").get<double>();
    r.value_mc_stderr = j.at("value_mc_stderr").get<double>();
    r.value_exact = j.at("value_exact").get<double>();
    r.v_star = j.at("v_star").get<double>();
    r.suboptimality = j.at("suboptimality").get<double>();
    r.suboptimality_exact = j.at("suboptimality_exact").get<double>();
    r.success = j.at("success").get<bool>();
    r.trajectories = j.at("trajectories").get<std::uint64_t>();
    r.checking_trajectories = j.at("checking_trajectories").get<std::uint64_t>();
    r.labeled_trajectories = j.at("labeled_trajectories").get<std::uint64_t>();
    r.refresh_trajectories = j.at("refresh_trajectories").get<std::uint64_t>();
    r.policy_set_sizes = j.at("policy_set_sizes").get<std::vector<int>>();
    r.policy_cap = j.at("policy_cap").get<double>();
    for (const auto& t : j.at("triggers")) r.triggers.push_back(t);
    for (const auto& c : j.at("learning_curve")) {
      r.learning_curve.push_back(CurvePoint{c.at("trajectories").get<std::uint64_t>(), c.at("level").get<int>(),
                                            c.at("value").get<double>(), c.at("best_value").get<double>()});
    }
    r.substreams_used = j.at("rng").at("substreams_used").get<std::uint64_t>();
    r.schedule = j.at("schedule");
    if (j.contains("wall_clock_seconds")) r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("run record: ") + e.what());
  }
}

PreparedInstance prepare_instance(const InstanceConfig& c, std::uint64_t seed) {
  if (c.generator == "file") {
    EpisodicMdp mdp = load_instance(c.path);
    GroundTruth truth = value_iteration_exact(mdp);
    return PreparedInstance{Instance{std::move(mdp), std::move(truth)}, 1};
  }
  if (c.generator == "lock") {
    std::vector<int> key;
    if (c.key == "seeded") {
      Rng rng = tagged_stream(seed, kKeyTag, 0);
      std::uniform_int_distribution<int> pick(0, c.actions - 1);
      for (int h = 0; h < c.horizon; ++h) key.push_back(pick(rng));
    }
    return PreparedInstance{gen_combination_lock(c.horizon, c.actions, c.reward_at_end, key), 1};
  }
  const TabularSpec spec{c.horizon, c.actions, c.states_per_level, c.reward_sparsity};
  for (int attempt = 0; attempt < c.max_attempts; ++attempt) {
    Rng rng = tagged_stream(seed, kInstanceTag, static_cast<std::uint64_t>(attempt));
    Instance inst = gen_random_tabular(spec, rng);
    if (inst.truth.min_gap < c.min_gap) continue;
    if (c.features == "qstar") inst = with_qstar_embedding(inst, c.feature_dim > 0 ? c.feature_dim : c.actions);
    return PreparedInstance{std::move(inst), attempt + 1};
  }
  throw InputError("no generated instance reached min_gap " + std::to_string(c.min_gap) + " within " +
                   std::to_string(c.max_attempts) + " attempts");
}

RunRecord run_single(const ExperimentConfig& config, const PreparedInstance& prepared, std::uint64_t seed) {
  const auto started = std::chrono::steady_clock::now();
  const EpisodicMdp& mdp = prepared.instance.mdp;
  const GroundTruth& truth = prepared.instance.truth;

  RunRecord r;
  r.seed = seed;
  r.generator = config.instance.generator;
  r.instance_attempts = prepared.attempts;
  if (std::isfinite(truth.min_gap)) r.min_gap = truth.min_gap;
  r.realizability_residual = verify_realizability(mdp, truth);
  if (r.realizability_residual > kRealizabilityTolerance) {
    throw RealizabilityError("instance is not realizable: residual " + std::to_string(r.realizability_residual) +
                                 " > " + std::to_string(kRealizabilityTolerance),
                             r.realizability_residual);
  }

  ParamSchedule schedule;
  if (config.params.mode == ParamMode::Practical) {
    schedule = practical_params(mdp.feature_dim(), mdp.horizon(), mdp.action_count(), config.params.practical);
  } else {
    double gamma = 0.0;
    if (config.params.gamma) {
      gamma = *config.params.gamma;
    } else if (std::isfinite(truth.min_gap)) {
      gamma = truth.min_gap;
    } else {
      throw InputError("theory mode: instance has no positive gap; set params.gamma");
    }
    double c = 1.0;
    if (config.params.variation_constant) {
      c = *config.params.variation_constant;
    } else {
      Rng rng = tagged_stream(seed, kVariationTag, 0);
      std::vector<TabularPolicy> policies;
      for (int i = 0; i < 20; ++i) policies.push_back(random_deterministic_policy(mdp, rng));
      std::vector<const Policy*> ptrs{&truth.optimal_policy};
      for (const auto& p : policies) ptrs.push_back(&p);
      c = estimate_variation_constant(mdp, truth, ptrs);
    }
    schedule = theory_params(config.params.practical.epsilon, gamma, c, mdp.feature_dim(), mdp.horizon(),
                             mdp.action_count());
  }

  double best = -std::numeric_limits<double>::infinity();
  auto observer = [&](const LevelCompletion& done, const LinearQTable& q) {
    const double value = policy_value_exact(mdp, GreedyPolicy(q));
    best = std::max(best, value);
    r.learning_curve.push_back(CurvePoint{done.trajectories, done.level, value, best});
  };
  const DmqResult result = dmq_run(mdp, schedule, seed, config.budget, observer);

  r.complete = result.report.complete;
  r.v_star = truth.start_value();
  r.value_exact = policy_value_exact(mdp, *result.policy);
  Rng eval_rng = tagged_stream(seed, kEvalTag, 0);
  const MonteCarloValue mc = policy_value_mc(mdp, *result.policy, config.eval_episodes, eval_rng);
  r.value_mc_mean = mc.mean;
  r.value_mc_stderr = mc.standard_error;
  r.suboptimality = r.v_star - r.value_mc_mean;
  r.suboptimality_exact = r.v_star - r.value_exact;
  r.success = r.complete && r.value_exact >= r.v_star - config.success_threshold;
  r.trajectories = result.report.trajectories;
  r.checking_trajectories = result.report.phases.checking;
  r.labeled_trajectories = result.report.phases.labeled;
  r.refresh_trajectories = result.report.phases.refresh;
  r.policy_set_sizes = result.report.policy_set_sizes;
  r.policy_cap = schedule.policy_cap;
  for (const auto& t : result.report.triggers) r.triggers.push_back(trigger_to_json(t));
  r.substreams_used = result.report.substreams_used;
  r.schedule = schedule.to_json();
  r.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& config) {
  std::vector<RunRecord> records;
  records.reserve(config.seeds.size());
  for (std::uint64_t seed : config.seeds) {
    const PreparedInstance prepared = prepare_instance(config.instance, seed);
    records.push_back(run_single(config, prepared, seed));
  }
  return records;
}

Json summarize(const std::vector<RunRecord>& records, double success_threshold) {
  std::size_t completed = 0;
  std::size_t successes = 0;
  double subopt = 0.0;
  double trajectories = 0.0;
  for (const auto& r : records) {
    trajectories += static_cast<double>(r.trajectories);
    if (!r.complete) continue;
    ++completed;
    subopt += r.suboptimality_exact;
    if (r.success) ++successes;
  }
  const auto over_completed = [&](double x) {
    return completed == 0 ? Json(nullptr) : Json(x / static_cast<double>(completed));
  };
  return Json{{"runs", records.size()},
              {"completed", completed},
              {"incomplete", records.size() - completed},
              {"success_threshold", success_threshold},
              {"successes", successes},
              {"success_rate", over_completed(static_cast<double>(successes))},
              {"mean_suboptimality", over_completed(subopt)},
              {"mean_trajectories", records.empty() ? Json(nullptr) : Json(trajectories / static_cast<double>(records.size()))}};
}

void emit_metrics(const std::vector<RunRecord>& records, const std::filesystem::path& dir, double success_threshold) {
  if (records.empty()) throw InputError("emit_metrics: no records");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  {
    const auto probe = dir / ".write_probe";
    std::ofstream out(probe);
    if (!out) throw IoError("directory is not writable: " + dir.string());
    out.close();
    std::filesystem::remove(probe, ec);
  }

  std::ofstream jsonl(dir / "records.jsonl");
  for (const auto& r : records) jsonl << record_to_json(r).dump() << '\n';

  std::ofstream csv(dir / "learning_curve.csv");
  csv << "seed,trajectories,level,value,best_value\n";
  for (const auto& r : records) {
    for (const auto& c : r.learning_curve) {
      csv << r.seed << ',' << c.trajectories << ',' << c.level << ',' << format_double(c.value) << ','
          << format_double(c.best_value) << '\n';
    }
  }

  std::ofstream summary(dir / "summary.json");
  summary << summarize(records, success_threshold).dump(2) << '\n';
  if (!jsonl || !csv || !summary) throw IoError("write failed under " + dir.string());
}

}  // namespace dmq
