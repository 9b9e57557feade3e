// Compares the OpenMP kernels against the serial reference path on the
// planner's hot loops and checks that both produce identical results.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "ibrl/baselines.hpp"
#include "ibrl/environments.hpp"
#include "ibrl/parallel.hpp"
#include "ibrl/planner.hpp"

using namespace ibrl;

namespace {

double time_once(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) best = std::min(best, time_once(fn));
  return best;
}

void report(const std::string& name, double serial_s, double parallel_s, bool identical) {
  std::printf("%-34s serial %9.4f s   omp %9.4f s   speedup %5.2fx   %s\n", name.c_str(), serial_s,
              parallel_s, serial_s / parallel_s, identical ? "results identical" : "RESULTS DIFFER");
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", par::max_threads());

  {  // Self-normalized inner products over a large particle set.
    const int n = 1 << 20;
    std::vector<double> g(n), phi(n);
    Rng rng(42);
    for (int j = 0; j < n; ++j) {
      g[static_cast<std::size_t>(j)] = rng.uniform(-1.0, 1.0);
      phi[static_cast<std::size_t>(j)] = rng.uniform();
    }
    double serial_val = 0.0, parallel_val = 0.0;
    par::set_enabled(false);
    const double ts = best_of(3, [&] {
      for (int r = 0; r < 50; ++r) serial_val = par::dot(g, phi) / par::sum(phi);
    });
    par::set_enabled(true);
    const double tp = best_of(3, [&] {
      for (int r = 0; r < 50; ++r) parallel_val = par::dot(g, phi) / par::sum(phi);
    });
    report("mc inner product (n=2^20, 50x)", ts, tp, serial_val == parallel_val);
  }

  {  // Point-based planning sweeps on the chain world.
    Environment env = build_chain_world();
    const ParticleSet ps = sample_particles(*env.model, 400, 7);
    PlanConfig pc;
    pc.horizon = 30;
    pc.beliefs_per_state = 16;
    pc.sample_depth = 10;
    pc.seed = 7;
    pc.sup_change_tol = 0.0;  // run every sweep
    par::set_enabled(false);
    PolicyBundle serial_bundle;
    const double ts = best_of(2, [&] { serial_bundle = plan(env.game, *env.model, ps, pc); });
    par::set_enabled(true);
    PolicyBundle parallel_bundle;
    const double tp = best_of(2, [&] { parallel_bundle = plan(env.game, *env.model, ps, pc); });
    bool identical = serial_bundle.sup_changes == parallel_bundle.sup_changes;
    for (std::size_t s = 0; identical && s < serial_bundle.policy.size(); ++s)
      identical = serial_bundle.policy[s].z_table == parallel_bundle.policy[s].z_table &&
                  serial_bundle.policy[s].evals == parallel_bundle.policy[s].evals;
    report("pb plan chain (k=30, n=400)", ts, tp, identical);
  }

  {  // Known-lambda value iteration on the reduced intersection.
    Environment env = build_intersection(true);
    const BehaviorParams lambda = env.model->prior_mean();
    par::set_enabled(false);
    QTable serial_q;
    const double ts = best_of(2, [&] { serial_q = value_iteration(env.game, *env.model, lambda, 1e-8); });
    par::set_enabled(true);
    QTable parallel_q;
    const double tp = best_of(2, [&] { parallel_q = value_iteration(env.game, *env.model, lambda, 1e-8); });
    report("value iteration (400 states)", ts, tp, serial_q.q == parallel_q.q);
  }

  {  // Online action selection at a large particle count.
    Environment env = build_chain_world();
    const ParticleSet ps = sample_particles(*env.model, 100000, 9);
    PlanConfig pc;
    pc.horizon = 10;
    pc.beliefs_per_state = 8;
    pc.sample_depth = 8;
    pc.seed = 9;
    const PolicyBundle bundle = plan(env.game, *env.model, ps, pc);
    SufficientStats psi(env.game.num_states, env.game.num_opponent_actions);
    Rng rng(3);
    for (int i = 0; i < 40; ++i)
      psi.add(rng.uniform_int(env.game.num_states), rng.uniform_int(env.game.num_opponent_actions));
    int serial_action = -1, parallel_action = -1;
    par::set_enabled(false);
    const double ts = best_of(3, [&] {
      for (int r = 0; r < 20; ++r) serial_action = select_action(bundle, *env.model, psi, 0).action;
    });
    par::set_enabled(true);
    const double tp = best_of(3, [&] {
      for (int r = 0; r < 20; ++r) parallel_action = select_action(bundle, *env.model, psi, 0).action;
    });
    report("select_action (n=1e5, 20x)", ts, tp, serial_action == parallel_action);
  }

  return 0;
}
