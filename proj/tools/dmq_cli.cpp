// Command-line front end: experiments, exact solving, the shift oracle, the
// potential-process replay and instance generation.

#include "dmq/dsec.hpp"
#include "dmq/env.hpp"
#include "dmq/harness.hpp"
#include "dmq/learner.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace dmq;

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, sep)) out.push_back(tok);
  return out;
}

bool parse_number(const std::string& raw, double& out) {
  const auto first = raw.find_first_not_of(" \t\r");
  if (first == std::string::npos) return false;
  const std::string tok = raw.substr(first);
  char* end = nullptr;
  out = std::strtod(tok.c_str(), &end);
  while (end && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
  return end && *end == '\0' && end != tok.c_str();
}

// One feature vector per row; a non-numeric first row is treated as a header.
Matrix read_feature_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    bool numeric = true;
    for (const auto& tok : split(line, ',')) {
      double x = 0.0;
      if (!parse_number(tok, x)) {
        numeric = false;
        break;
      }
      row.push_back(x);
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw InputError(path + ": non-numeric row '" + line + "'");
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size()) throw InputError(path + ": ragged rows");
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

int cmd_run(const std::string& config_path, const std::string& seeds, const std::string& out_dir) {
  ExperimentConfig config = ExperimentConfig::load(config_path);
  if (!seeds.empty()) {
    config.seeds.clear();
    for (const auto& tok : split(seeds, ',')) config.seeds.push_back(std::stoull(tok));
  }
  if (!out_dir.empty()) config.output_dir = out_dir;
  const auto records = run_experiment(config);
  emit_metrics(records, config.output_dir, config.success_threshold);
  const Json summary = summarize(records, config.success_threshold);
  std::cout << summary.dump(2) << '\n';
  for (const auto& r : records)
    if (!r.complete) return kExitBudget;
  return kExitOk;
}

int cmd_solve(const std::string& path) {
  const EpisodicMdp mdp = load_instance(path);
  const GroundTruth truth = value_iteration_exact(mdp);
  std::cout << "v_star: " << fmt(truth.start_value()) << '\n';
  std::cout << "gamma: " << (std::isfinite(truth.min_gap) ? fmt(truth.min_gap) : std::string("none")) << '\n';
  std::cout << "realizability_residual: " << fmt(verify_realizability(mdp, truth)) << '\n';
  return kExitOk;
}

int cmd_dsec(const std::string& d1, const std::string& d2, double eps1, double eps2, double lambda_r, int pi_count) {
  DsecQuery q;
  q.reference = read_feature_csv(d1);
  q.probe = read_feature_csv(d2);
  q.eps1 = eps1;
  q.eps2 = eps2;
  q.lambda_r = lambda_r;
  q.policy_count = pi_count;
  const DsecVerdict v = dsec_check(q);
  std::cout << "triggered: " << (v.triggered ? "true" : "false") << '\n';
  if (v.empty_reference) {
    std::cout << "v: empty-reference\n";
    return kExitOk;
  }
  std::cout << "v: " << fmt(*v.value) << '\n' << "direction:";
  for (Eigen::Index i = 0; i < v.direction->size(); ++i) std::cout << (i ? "," : " ") << fmt((*v.direction)(i));
  std::cout << '\n';
  return kExitOk;
}

int cmd_potential(int dim, int steps, double eps_s, double eps_t, double lambda_r, std::uint64_t seed) {
  Rng rng(seed);
  const auto stream = random_psd_stream(dim, steps, rng);
  const PotentialResult result = potential_process(stream, eps_s, eps_t, lambda_r);
  const double bound = potential_bound(dim, lambda_r);
  bool ok = static_cast<double>(result.admitted.size()) <= bound;
  int doubling_failures = 0;
  for (const auto& step : result.log)
    if (step.det_after < 2.0 * step.det_before) ++doubling_failures;
  ok = ok && doubling_failures == 0;
  std::cout << "admitted: " << result.admitted.size() << '\n'
            << "bound: " << fmt(bound) << '\n'
            << "doubling_failures: " << doubling_failures << '\n'
            << "check: " << (ok ? "pass" : "FAIL") << '\n';
  return ok ? kExitOk : kExitInvariant;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Difference-maximization Q-learning toolkit"};
  app.require_subcommand(1);

  std::string config_path, seeds, out_dir;
  auto* run = app.add_subcommand("run", "Run experiments from a JSON config");
  run->add_option("--config", config_path, "Experiment config")->required();
  run->add_option("--seeds", seeds, "Comma-separated seed override");
  run->add_option("--out", out_dir, "Output directory override");

  std::string instance_path;
  auto* solve = app.add_subcommand("solve", "Exact DP on a serialized instance");
  solve->add_option("--instance", instance_path)->required();

  std::string d1, d2;
  double eps1 = 0, eps2 = 0, lambda_r = 0;
  int pi_count = 1;
  auto* dsec = app.add_subcommand("dsec", "Distribution-shift check on two CSV feature sets");
  dsec->add_option("--d1", d1, "Reference states (may be empty)")->required();
  dsec->add_option("--d2", d2, "Probe states")->required();
  dsec->add_option("--eps1", eps1)->required();
  dsec->add_option("--eps2", eps2)->required();
  dsec->add_option("--lambda-r", lambda_r)->required();
  dsec->add_option("--pi-count", pi_count)->required();

  int dim = 2, steps = 500;
  double eps_s = 0, eps_t = 0, pot_lambda = 0;
  std::uint64_t pot_seed = 0;
  auto* potential = app.add_subcommand("potential", "Replay the matrix admission process and check its bounds");
  potential->add_option("--dim", dim)->required();
  potential->add_option("--steps", steps)->required();
  potential->add_option("--eps-s", eps_s)->required();
  potential->add_option("--eps-t", eps_t)->required();
  potential->add_option("--lambda-r", pot_lambda)->required();
  potential->add_option("--seed", pot_seed);

  std::string kind = "tabular", gen_out, key_text;
  int horizon = 3, actions = 3, states = 5;
  double sparsity = 0.3, reward = 1.0, min_gap = 0.0;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("gen", "Generate and serialize an instance");
  gen->add_option("--kind", kind)->check(CLI::IsMember({"tabular", "lock"}));
  gen->add_option("--horizon", horizon);
  gen->add_option("--actions", actions);
  gen->add_option("--states", states, "States per level (tabular)");
  gen->add_option("--sparsity", sparsity, "Fraction of zero-reward pairs (tabular)");
  gen->add_option("--min-gap", min_gap, "Regenerate until the minimum gap reaches this (tabular)");
  gen->add_option("--reward", reward, "Reward at the end of the lock");
  gen->add_option("--key", key_text, "Comma-separated lock key");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out", gen_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, seeds, out_dir);
    if (*solve) return cmd_solve(instance_path);
    if (*dsec) return cmd_dsec(d1, d2, eps1, eps2, lambda_r, pi_count);
    if (*potential) return cmd_potential(dim, steps, eps_s, eps_t, pot_lambda, pot_seed);
    if (*gen) {
      InstanceConfig c;
      c.generator = kind;
      c.horizon = horizon;
      c.actions = actions;
      c.states_per_level = states;
      c.reward_sparsity = sparsity;
      c.min_gap = min_gap;
      c.reward_at_end = reward;
      Instance inst = [&] {
        if (kind == "lock" && !key_text.empty()) {
          std::vector<int> key;
          for (const auto& tok : split(key_text, ',')) key.push_back(std::stoi(tok));
          return gen_combination_lock(horizon, actions, reward, key);
        }
        return prepare_instance(c, gen_seed).instance;
      }();
      save_instance(inst.mdp, gen_out);
      std::cout << "wrote " << gen_out << " (v_star " << fmt(inst.truth.start_value()) << ")\n";
      return kExitOk;
    }
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}
