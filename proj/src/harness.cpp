#include "ibrl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ibrl/bundle.hpp"
#include "ibrl/discrete_planner.hpp"
#include "ibrl/parallel.hpp"

namespace ibrl {

namespace {

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

PolicyBundle::Variant parse_mode(const std::string& mode) {
  if (mode == "pb" || mode == "point-based") return PolicyBundle::Variant::kPointBased;
  if (mode == "exact") return PolicyBundle::Variant::kExact;
  if (mode == "discrete") return PolicyBundle::Variant::kDiscrete;
  throw UsageError("unknown planner mode: " + mode);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (environment.empty()) throw UsageError("config: environment name required");
  if (agents.empty()) throw UsageError("config: at least one agent required");
  if (!seed_set) throw UsageError("config: master seed required (--seed)");
  if (opponents == 0 || episodes == 0 || horizon == 0)
    throw UsageError("config: protocol counts must be >= 1");
  for (const auto& a : agents) {
    if (a.type != "ibrl" && a.type != "ibrl-exact" && a.type != "ibrl-discrete" &&
        a.type != "bpvi" && a.type != "exploit" && a.type != "oracle" && a.type != "meta")
      throw UsageError("config: unknown agent type '" + a.type + "'");
    if (a.type == "bpvi" && a.bpvi_samples < 1)
      throw UsageError("config: bpvi samples must be >= 1");
    if (a.type == "exploit" && a.exploit_estimate != "prior-mean" &&
        a.exploit_estimate != "posterior-mean")
      throw UsageError("config: exploit estimate must be prior-mean or posterior-mean");
    if (!(a.vi_tol > 0.0)) throw UsageError("config: vi_tol must be positive");
  }
  (void)parse_mode(plan_mode);
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg.environment = j.at("environment").at("name").get<std::string>();
    if (j.contains("planner")) {
      const auto& p = j["planner"];
      cfg.plan_mode = p.value("mode", cfg.plan_mode);
      cfg.plan_horizon = p.value("horizon", cfg.plan_horizon);
      cfg.plan_particles = p.value("particles", cfg.plan_particles);
      cfg.plan_beliefs = p.value("beliefs", cfg.plan_beliefs);
      cfg.plan_depth = p.value("depth", cfg.plan_depth);
      cfg.explosion_cap = p.value("explosion_cap", cfg.explosion_cap);
      cfg.sup_change_tol = p.value("sup_change_tol", cfg.sup_change_tol);
    }
    for (const auto& a : j.at("agents")) {
      AgentSpec spec;
      spec.type = a.at("type").get<std::string>();
      spec.display_name = a.value("name", std::string());
      spec.bpvi_samples = a.value("samples", spec.bpvi_samples);
      spec.bpvi_cache = a.value("cache", spec.bpvi_cache);
      spec.exploit_estimate = a.value("estimate", spec.exploit_estimate);
      spec.vi_tol = a.value("vi_tol", spec.vi_tol);
      cfg.agents.push_back(std::move(spec));
    }
    if (j.contains("protocol")) {
      const auto& p = j["protocol"];
      cfg.opponents = p.value("opponents", cfg.opponents);
      cfg.episodes = p.value("episodes", cfg.episodes);
      cfg.horizon = p.value("horizon", cfg.horizon);
    }
    if (j.contains("seed")) {
      cfg.master_seed = j["seed"].get<std::uint64_t>();
      cfg.seed_set = true;
    }
    if (j.contains("output")) cfg.output_dir = j["output"].value("dir", cfg.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config field error: ") + e.what());
  }
  return cfg;
}

EpisodeTrace run_episode(Agent& agent, const Environment& env, const BehaviorParams& true_lambda,
                         int horizon, std::uint64_t env_seed, std::uint64_t agent_seed) {
  if (horizon < 0) throw UsageError("run_episode: horizon must be >= 0");
  env.model->validate_params(true_lambda);
  const StochasticGame& game = env.game;
  EpisodeTrace trace;
  trace.seed = env_seed;
  trace.true_lambda = true_lambda;
  Rng env_rng(env_seed);
  agent.begin_episode(agent_seed);

  int s = game.initial_state;
  std::vector<double> lik(static_cast<std::size_t>(game.num_opponent_actions));
  double discount_pow = 1.0;
  for (int t = 0; t < horizon; ++t) {
    int u;
    try {
      u = agent.act(s);
    } catch (const std::exception& e) {
      trace.error = e.what();
      break;
    }
    game.check_agent_action(u);
    for (int v = 0; v < game.num_opponent_actions; ++v)
      lik[static_cast<std::size_t>(v)] = env.model->likelihood(true_lambda, s, v);
    const int v = env_rng.categorical(lik);
    const int s2 = env_rng.categorical(next_state_dist(game, s, u, v));
    double reward = game.reward(s, u, v);
    if (env.classify_step) {
      switch (env.classify_step(s, u, v, s2)) {
        case StepEvent::kCrossing:
          ++trace.crossings;
          break;
        case StepEvent::kCollision:
          ++trace.collisions;
          break;
        case StepEvent::kNone:
          break;
      }
    }
    if (env.realized_reward) reward = env.realized_reward(s, u, v, s2);
    agent.observe(s, u, v, reward, s2);
    trace.steps.push_back({s, u, v, reward, s2});
    trace.total_reward += reward;
    trace.discounted_return += discount_pow * reward;
    discount_pow *= game.discount;
    s = s2;
  }
  return trace;
}

namespace {

struct SharedArtifacts {
  std::shared_ptr<const ParticleSet> particles;
  std::shared_ptr<const BehaviorModel> model;
  std::map<std::string, std::shared_ptr<const PolicyBundle>> bundles;  // by mode
  std::shared_ptr<const MaximinSolution> maximin;
  std::shared_ptr<QTableCache> bpvi_cache;
};

std::unique_ptr<Agent> make_agent(const AgentSpec& spec, const Environment& env,
                                  const SharedArtifacts& shared, const std::string& plan_mode) {
  if (spec.type == "ibrl" || spec.type == "ibrl-exact" || spec.type == "ibrl-discrete") {
    const std::string mode = spec.type == "ibrl" ? plan_mode
                             : spec.type == "ibrl-exact" ? "exact"
                                                         : "discrete";
    return std::make_unique<IbrlAgent>(shared.bundles.at(mode), shared.model, spec.label());
  }
  if (spec.type == "bpvi")
    return std::make_unique<BpviAgent>(shared.model, env.game, shared.particles, spec.bpvi_samples,
                                       spec.vi_tol, spec.bpvi_cache ? shared.bpvi_cache : nullptr);
  if (spec.type == "exploit")
    return std::make_unique<ExploitAgent>(shared.model, env.game, shared.particles,
                                          spec.exploit_estimate == "prior-mean"
                                              ? ExploitAgent::Estimate::kPriorMean
                                              : ExploitAgent::Estimate::kPosteriorMean,
                                          spec.vi_tol);
  if (spec.type == "oracle")
    return std::make_unique<OracleAgent>(shared.model, env.game, spec.vi_tol);
  if (spec.type == "meta")
    return std::make_unique<MetaStrategyAgent>(env.game, shared.maximin, spec.vi_tol);
  throw UsageError("unknown agent type: " + spec.type);
}

}  // namespace

EvalResults evaluate(const ExperimentConfig& config) {
  config.validate();
  Environment env = build_environment(config.environment);
  const int M = config.opponents > 0 ? config.opponents : env.protocol_defaults.opponents;
  const int N = config.episodes > 0 ? config.episodes : env.protocol_defaults.episodes;
  const int h = config.horizon > 0 ? config.horizon : env.protocol_defaults.horizon;
  const int A = static_cast<int>(config.agents.size());

  SharedArtifacts shared;
  shared.model = env.model;
  const int n_particles =
      config.plan_particles > 0 ? config.plan_particles : env.planner_defaults.particles;
  shared.particles = std::make_shared<const ParticleSet>(
      sample_particles(*env.model, n_particles, derive_seed(config.master_seed, 0x706172ULL)));

  EvalResults results;
  results.opponents = M;
  results.episodes = N;
  results.horizon = h;

  // Plan once per distinct bundle variant in use; share across agents so a
  // duplicated agent spec yields identical rows.
  std::vector<std::string> modes_needed;
  bool any_meta = false, any_bpvi_cache = false;
  for (const auto& spec : config.agents) {
    if (spec.type == "ibrl") modes_needed.push_back(config.plan_mode);
    if (spec.type == "ibrl-exact") modes_needed.push_back("exact");
    if (spec.type == "ibrl-discrete") modes_needed.push_back("discrete");
    if (spec.type == "meta") any_meta = true;
    if (spec.type == "bpvi" && spec.bpvi_cache) any_bpvi_cache = true;
  }
  std::sort(modes_needed.begin(), modes_needed.end());
  modes_needed.erase(std::unique(modes_needed.begin(), modes_needed.end()), modes_needed.end());
  for (const auto& mode : modes_needed) {
    PlanConfig pc;
    pc.mode = parse_mode(mode);
    pc.horizon = config.plan_horizon > 0 ? config.plan_horizon : env.planner_defaults.horizon;
    pc.beliefs_per_state =
        config.plan_beliefs > 0 ? config.plan_beliefs : env.planner_defaults.beliefs_per_state;
    pc.sample_depth = config.plan_depth > 0 ? config.plan_depth : env.planner_defaults.sample_depth;
    pc.seed = derive_seed(config.master_seed, 0x706c616eULL, static_cast<std::uint64_t>(pc.mode));
    pc.explosion_cap = config.explosion_cap;
    pc.sup_change_tol = config.sup_change_tol;
    pc.env_name = config.environment;
    std::vector<double> sweep_seconds;
    pc.sweep_seconds = &sweep_seconds;
    auto bundle = std::make_shared<const PolicyBundle>(plan(env.game, *env.model, *shared.particles, pc));
    double cumulative = 0.0;
    for (std::size_t k = 0; k < sweep_seconds.size(); ++k) {
      cumulative += sweep_seconds[k];
      results.planning_log.push_back({mode, static_cast<int>(k) + 1, sweep_seconds[k], cumulative,
                                      bundle->sup_changes[k]});
    }
    shared.bundles[mode] = std::move(bundle);
  }
  if (any_meta)
    shared.maximin = std::make_shared<const MaximinSolution>(solve_maximin(env.game));
  if (any_bpvi_cache)
    shared.bpvi_cache = std::make_shared<QTableCache>(env.game, shared.model, shared.particles,
                                                      config.agents.front().vi_tol);

  // Opponents are drawn independently of the agent list.
  std::vector<BehaviorParams> opponents(static_cast<std::size_t>(M));
  for (int i = 0; i < M; ++i) {
    Rng rng(derive_seed(config.master_seed, 0x6f70706fULL, static_cast<std::uint64_t>(i)));
    opponents[static_cast<std::size_t>(i)] = env.model->sample_prior(rng);
  }

  for (const auto& spec : config.agents) results.agent_names.push_back(spec.label());
  results.rows.resize(static_cast<std::size_t>(A) * M * N);
  par::for_index(static_cast<std::int64_t>(A) * M * N, [&](std::int64_t flat) {
    const int a = static_cast<int>(flat / (static_cast<std::int64_t>(M) * N));
    const int rem = static_cast<int>(flat % (static_cast<std::int64_t>(M) * N));
    const int i = rem / N;
    const int e = rem % N;
    auto agent = make_agent(config.agents[static_cast<std::size_t>(a)], env, shared, config.plan_mode);
    agent->on_new_opponent(opponents[static_cast<std::size_t>(i)]);
    // The environment stream is agent-independent so comparisons pair.
    const std::uint64_t env_seed = derive_seed(config.master_seed, 0x65706973ULL,
                                               static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(e));
    const std::uint64_t agent_seed =
        derive_seed(config.master_seed, 0xa6e70000ULL + static_cast<std::uint64_t>(a),
                    static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(e));
    EpisodeTrace trace = run_episode(*agent, env, opponents[static_cast<std::size_t>(i)], h,
                                     env_seed, agent_seed);
    EvalRow row;
    row.agent = a;
    row.opponent = i;
    row.episode = e;
    row.steps = static_cast<int>(trace.steps.size());
    row.total_reward = trace.total_reward;
    row.discounted_return = trace.discounted_return;
    row.collisions = trace.collisions;
    row.crossings = trace.crossings;
    row.error = trace.error;
    results.rows[static_cast<std::size_t>(flat)] = std::move(row);
  });

  // Aggregates, recomputed serially in row order.
  for (int a = 0; a < A; ++a) {
    AgentSummary sum;
    sum.name = results.agent_names[static_cast<std::size_t>(a)];
    sum.per_opponent_mean.assign(static_cast<std::size_t>(M), 0.0);
    std::vector<double> totals, discounted;
    int collisions = 0, crossings = 0;
    for (int i = 0; i < M; ++i) {
      double opp_total = 0.0;
      for (int e = 0; e < N; ++e) {
        const EvalRow& row =
            results.rows[(static_cast<std::size_t>(a) * M + static_cast<std::size_t>(i)) * N +
                         static_cast<std::size_t>(e)];
        totals.push_back(row.total_reward);
        discounted.push_back(row.discounted_return);
        opp_total += row.total_reward;
        collisions += row.collisions;
        crossings += row.crossings;
        if (!row.error.empty()) ++sum.failed_episodes;
      }
      sum.per_opponent_mean[static_cast<std::size_t>(i)] = opp_total / N;
    }
    auto mean_of = [](const std::vector<double>& x) {
      double acc = 0.0;
      for (double v : x) acc += v;
      return acc / static_cast<double>(x.size());
    };
    auto stderr_of = [&](const std::vector<double>& x, double mean) {
      if (x.size() < 2) return 0.0;
      double ss = 0.0;
      for (double v : x) ss += (v - mean) * (v - mean);
      return std::sqrt(ss / (static_cast<double>(x.size()) - 1.0) / static_cast<double>(x.size()));
    };
    sum.mean_total = mean_of(totals);
    sum.stderr_total = stderr_of(totals, sum.mean_total);
    sum.mean_discounted = mean_of(discounted);
    sum.stderr_discounted = stderr_of(discounted, sum.mean_discounted);
    sum.collision_rate = static_cast<double>(collisions) / (static_cast<double>(M) * N);
    sum.crossing_rate = static_cast<double>(crossings) / (static_cast<double>(M) * N);
    results.summaries.push_back(std::move(sum));
  }
  return results;
}

std::string EvalResults::results_csv() const {
  std::ostringstream os;
  os << "agent,opponent,episode,steps,total_reward,discounted_return,collisions,crossings,error\n";
  for (const auto& r : rows) {
    os << agent_names[static_cast<std::size_t>(r.agent)] << ',' << r.opponent << ',' << r.episode
       << ',' << r.steps << ',' << fmt_double(r.total_reward) << ','
       << fmt_double(r.discounted_return) << ',' << r.collisions << ',' << r.crossings << ','
       << r.error << '\n';
  }
  return os.str();
}

std::string EvalResults::aggregate_csv() const {
  std::ostringstream os;
  os << "agent,mean_total,stderr_total,mean_discounted,stderr_discounted,collision_rate,"
        "crossing_rate,failed_episodes\n";
  for (const auto& s : summaries) {
    os << s.name << ',' << fmt_double(s.mean_total) << ',' << fmt_double(s.stderr_total) << ','
       << fmt_double(s.mean_discounted) << ',' << fmt_double(s.stderr_discounted) << ','
       << fmt_double(s.collision_rate) << ',' << fmt_double(s.crossing_rate) << ','
       << s.failed_episodes << '\n';
  }
  return os.str();
}

std::string EvalResults::planning_csv() const {
  std::ostringstream os;
  os << "mode,sweep,seconds,cumulative_seconds,sup_change\n";
  for (const auto& e : planning_log)
    os << e.mode << ',' << e.sweep << ',' << fmt_double(e.seconds) << ','
       << fmt_double(e.cumulative_seconds) << ',' << fmt_double(e.sup_change) << '\n';
  return os.str();
}

std::string EvalResults::summary_text() const {
  std::ostringstream os;
  os << "protocol: " << opponents << " opponents x " << episodes << " episodes x " << horizon
     << " steps\n";
  for (const auto& s : summaries) {
    os << "  " << s.name << ": mean total " << s.mean_total << " +- " << s.stderr_total
       << " (discounted " << s.mean_discounted << " +- " << s.stderr_discounted << ")";
    if (s.collision_rate > 0.0 || s.crossing_rate > 0.0)
      os << ", collisions/ep " << s.collision_rate << ", crossings/ep " << s.crossing_rate;
    if (s.failed_episodes > 0) os << ", failed episodes " << s.failed_episodes;
    os << "\n";
  }
  return os.str();
}

void write_eval_outputs(const EvalResults& results, const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  fs::create_directories(config.output_dir);
  auto write_file = [&](const std::string& name, const std::string& content) {
    std::ofstream out(fs::path(config.output_dir) / name, std::ios::binary);
    if (!out) throw IoError("cannot write " + name + " in " + config.output_dir);
    out << content;
  };
  write_file("results.csv", results.results_csv());
  write_file("aggregate.csv", results.aggregate_csv());
  write_file("summary.txt", results.summary_text());
  write_file("planning_times.csv", results.planning_csv());
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  // Continued fraction (modified Lentz), with the symmetry switch.
  const double ln_beta = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  const double front = std::exp(ln_beta + a * std::log(x) + b * std::log(1.0 - x));
  auto contfrac = [](double aa, double bb, double xx) {
    const double tiny = 1e-300;
    double c = 1.0, d = 1.0 - (aa + bb) * xx / (aa + 1.0);
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double result = d;
    for (int m = 1; m <= 300; ++m) {
      const double dm = static_cast<double>(m);
      double num = dm * (bb - dm) * xx / ((aa + 2.0 * dm - 1.0) * (aa + 2.0 * dm));
      d = 1.0 + num * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + num / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      result *= d * c;
      num = -(aa + dm) * (aa + bb + dm) * xx / ((aa + 2.0 * dm) * (aa + 2.0 * dm + 1.0));
      d = 1.0 + num * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + num / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      const double delta = d * c;
      result *= delta;
      if (std::abs(delta - 1.0) < 1e-14) break;
    }
    return result;
  };
  if (x < (a + 1.0) / (a + b + 2.0)) return front * contfrac(a, b, x) / a;
  return 1.0 - regularized_incomplete_beta(b, a, 1.0 - x);
}

double student_t_cdf(double t, double dof) {
  if (dof <= 0.0) throw UsageError("student_t_cdf: dof must be positive");
  const double x = dof / (dof + t * t);
  const double tail = 0.5 * regularized_incomplete_beta(dof / 2.0, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

double paired_one_sided_p(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw UsageError("paired test: need matched samples");
  const auto n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += (a[i] - b[i]);
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) return mean > 0.0 ? 0.0 : mean < 0.0 ? 1.0 : 0.5;
  const double t = mean / (sd / std::sqrt(n));
  return 1.0 - student_t_cdf(t, n - 1.0);
}

std::string comparison_report(const EvalResults& results) {
  std::ostringstream os;
  if (results.summaries.size() < 2) return "need at least two agents to compare\n";
  const auto& base = results.summaries.front();
  os << "paired one-sided tests (H1: mean(" << base.name << ") > mean(other), per-opponent means)\n";
  for (std::size_t i = 1; i < results.summaries.size(); ++i) {
    const auto& other = results.summaries[i];
    const double p = paired_one_sided_p(base.per_opponent_mean, other.per_opponent_mean);
    os << "  " << base.name << " vs " << other.name << ": mean diff "
       << base.mean_total - other.mean_total << ", p = " << p << "\n";
  }
  return os.str();
}

std::string comparison_csv(const EvalResults& results) {
  std::ostringstream os;
  os << "agent_a,agent_b,mean_diff,p_one_sided\n";
  if (results.summaries.size() < 2) return os.str();
  const auto& base = results.summaries.front();
  for (std::size_t i = 1; i < results.summaries.size(); ++i) {
    const auto& other = results.summaries[i];
    const double p = paired_one_sided_p(base.per_opponent_mean, other.per_opponent_mean);
    os << base.name << ',' << other.name << ',' << fmt_double(base.mean_total - other.mean_total)
       << ',' << fmt_double(p) << '\n';
  }
  return os.str();
}

}  // namespace ibrl
