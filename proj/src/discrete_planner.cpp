#include "ibrl/discrete_planner.hpp"

#include <cmath>
#include <limits>

#include "ibrl/parallel.hpp"

namespace ibrl {

void DiscreteBelief::validate(double tol) const {
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw UsageError("DiscreteBelief: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > tol) throw UsageError("DiscreteBelief: weights do not sum to 1");
}

DiscreteAlphaVector discrete_backup(int s, int u, std::span<const std::int32_t> choice,
                                    const std::vector<std::vector<DiscreteAlphaVector>>& prev,
                                    const StochasticGame& game, const LikelihoodTable& ltab) {
  game.check_state(s);
  game.check_agent_action(u);
  const int S = game.num_states;
  const int V = game.num_opponent_actions;
  const int n = ltab.n;
  if (static_cast<int>(choice.size()) != S * V)
    throw UsageError("discrete_backup: choice vector must cover every (s', v) pair");

  DiscreteAlphaVector out;
  out.action = u;
  out.values.assign(static_cast<std::size_t>(n), 0.0);
  for (int j = 0; j < n; ++j) {
    double acc = 0.0;
    for (int v = 0; v < V; ++v) {
      double future = 0.0;
      for (int s2 = 0; s2 < S; ++s2) {
        const double p = game.transition(s, u, v, s2);
        if (p <= 0.0) continue;
        const DiscreteAlphaVector& child =
            prev[static_cast<std::size_t>(s2)][static_cast<std::size_t>(choice[static_cast<std::size_t>(s2 * V + v)])];
        future += p * child.values[static_cast<std::size_t>(j)];
      }
      acc += ltab.row(s, v)[static_cast<std::size_t>(j)] *
             (game.reward(s, u, v) + game.discount * future);
    }
    out.values[static_cast<std::size_t>(j)] = acc;
  }
  return out;
}

DiscreteBelief discrete_belief_update(const DiscreteBelief& belief, const BehaviorModel& model,
                                      const ParticleSet& particles, int state, int v) {
  if (static_cast<int>(belief.weights.size()) != particles.n())
    throw UsageError("discrete_belief_update: belief length mismatch");
  DiscreteBelief out;
  out.weights.resize(belief.weights.size());
  double norm = 0.0;
  for (int j = 0; j < particles.n(); ++j) {
    const double w = belief.weights[static_cast<std::size_t>(j)] *
                     model.likelihood(particles.particles[static_cast<std::size_t>(j)], state, v);
    out.weights[static_cast<std::size_t>(j)] = w;
    norm += w;
  }
  if (!(norm > 0.0))
    throw DegenerateBeliefError("discrete_belief_update: zero normalizer");
  for (double& w : out.weights) w /= norm;
  return out;
}

PolicyBundle plan_discrete(const StochasticGame& game, const BehaviorModel& model,
                           const ParticleSet& particles, const PlanConfig& config) {
  PlanConfig cfg = config;
  cfg.mode = PolicyBundle::Variant::kDiscrete;
  return plan(game, model, particles, cfg);
}

int select_action_discrete(const PolicyBundle& bundle, const DiscreteBelief& belief, int state) {
  if (bundle.variant != PolicyBundle::Variant::kDiscrete)
    throw UsageError("select_action_discrete: bundle is not the discrete variant");
  belief.validate(1e-9);
  const StatePolicy& sp = bundle.policy[static_cast<std::size_t>(state)];
  const int n = bundle.particles.n();
  const int A = sp.num_alphas();
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < A; ++a) {
    const double score = par::dot(belief.weights, {sp.z_table.data() + static_cast<std::size_t>(a) * n,
                                                   static_cast<std::size_t>(n)});
    if (score > best_score) {
      best_score = score;
      best = a;
    }
  }
  return sp.actions[static_cast<std::size_t>(best)];
}

}  // namespace ibrl
