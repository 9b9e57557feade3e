#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ibrl/agents.hpp"
#include "ibrl/environments.hpp"

namespace ibrl {

struct AgentSpec {
  std::string type;  // ibrl | ibrl-exact | ibrl-discrete | bpvi | exploit | oracle | meta
  std::string display_name;
  int bpvi_samples = 16;
  bool bpvi_cache = false;
  std::string exploit_estimate = "prior-mean";  // or "posterior-mean"
  double vi_tol = 1e-6;
  std::string label() const { return display_name.empty() ? type : display_name; }
};

struct ExperimentConfig {
  std::string environment;
  std::string plan_mode = "pb";  // pb | exact | discrete (for the ibrl agent default)
  int plan_horizon = -1;         // -1: environment default
  int plan_particles = -1;
  int plan_beliefs = -1;
  int plan_depth = -1;
  std::int64_t explosion_cap = 1'000'000;
  double sup_change_tol = 1e-6;
  std::vector<AgentSpec> agents;
  int opponents = -1;  // M
  int episodes = -1;   // N
  int horizon = -1;    // h
  bool seed_set = false;
  std::uint64_t master_seed = 0;
  std::string output_dir = "out";

  void validate() const;  // throws UsageError
};

/// Reads the JSON experiment config (sections: environment, planner, agents,
/// protocol, seed, output).
ExperimentConfig load_experiment_config(const std::string& path);

struct StepRecord {
  int s, u, v;
  double reward;
  int s2;
};

struct EpisodeTrace {
  std::uint64_t seed = 0;
  BehaviorParams true_lambda;
  std::vector<StepRecord> steps;
  double total_reward = 0.0;
  double discounted_return = 0.0;
  int collisions = 0;
  int crossings = 0;
  std::string error;  // empty unless the agent failed mid-episode
};

/// Simulates one episode: the opponent draws from likelihood(true_lambda),
/// the agent observes every (s, v) pair. Bit-deterministic given the seeds.
EpisodeTrace run_episode(Agent& agent, const Environment& env, const BehaviorParams& true_lambda,
                         int horizon, std::uint64_t env_seed, std::uint64_t agent_seed);

struct EvalRow {
  int agent = 0;
  int opponent = 0;
  int episode = 0;
  int steps = 0;
  double total_reward = 0.0;
  double discounted_return = 0.0;
  int collisions = 0;
  int crossings = 0;
  std::string error;
};

struct AgentSummary {
  std::string name;
  double mean_total = 0.0;
  double stderr_total = 0.0;
  double mean_discounted = 0.0;
  double stderr_discounted = 0.0;
  double collision_rate = 0.0;  // per episode
  double crossing_rate = 0.0;
  int failed_episodes = 0;
  std::vector<double> per_opponent_mean;  // of total reward, for paired tests
};

struct PlanningLogEntry {
  std::string mode;
  int sweep = 0;
  double seconds = 0.0;
  double cumulative_seconds = 0.0;
  double sup_change = 0.0;
};

struct EvalResults {
  std::vector<std::string> agent_names;
  int opponents = 0, episodes = 0, horizon = 0;
  std::vector<EvalRow> rows;  // [agent][opponent][episode] order
  std::vector<AgentSummary> summaries;
  std::vector<PlanningLogEntry> planning_log;  // wall times; kept out of results.csv

  std::string results_csv() const;
  std::string aggregate_csv() const;
  std::string planning_csv() const;
  std::string summary_text() const;
};

/// Runs the full protocol: M opponents drawn from the prior, N episodes of h
/// steps per agent, shared per-episode environment seeds so comparisons pair.
EvalResults evaluate(const ExperimentConfig& config);

/// Writes results.csv, aggregate.csv, summary.txt and planning_times.csv.
void write_eval_outputs(const EvalResults& results, const ExperimentConfig& config);

// Small statistics helpers for the comparison report.
double regularized_incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double dof);
/// One-sided paired p-value for H1: mean(a - b) > 0.
double paired_one_sided_p(std::span<const double> a, std::span<const double> b);
/// Pairwise significance table (first agent against each other agent).
std::string comparison_report(const EvalResults& results);
std::string comparison_csv(const EvalResults& results);

}  // namespace ibrl
