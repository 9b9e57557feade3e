#pragma once

#include <span>
#include <vector>

#include "ibrl/planner.hpp"

namespace ibrl {

/// Distribution over the sampled particles (the indicator-basis belief).
struct DiscreteBelief {
  std::vector<double> weights;
  void validate(double tol = 1e-12) const;
};

/// alpha-vector of the discrete belief-state MDP: one value per particle.
struct DiscreteAlphaVector {
  std::vector<double> values;
  std::int32_t action = 0;
};

/// Indicator-basis backup for one (state, action, choice vector):
/// phi_s^{ut}(j) = sum_v p_s^v(lambda_j) (r_s(u,v) + phi sum_{s'} p_s^{uv}(s')
/// phi_{s'}^{t_{s'v}}(j)), evaluated componentwise per particle. The choice
/// vector assigns one previous vector to every (s', v) pair, s' major.
DiscreteAlphaVector discrete_backup(int s, int u, std::span<const std::int32_t> choice,
                                    const std::vector<std::vector<DiscreteAlphaVector>>& prev,
                                    const StochasticGame& game, const LikelihoodTable& ltab);

/// Bayes update of a discrete belief after observing opponent action v in
/// state s: weights reweighted by the per-particle likelihood, renormalized.
DiscreteBelief discrete_belief_update(const DiscreteBelief& belief, const BehaviorModel& model,
                                      const ParticleSet& particles, int state, int v);

/// Point-based value iteration on the discrete belief-state MDP. Beliefs are
/// derived from the same sampled count histories as the Phi-basis planner,
/// keeping the two planners comparable; the bundle is variant-tagged.
PolicyBundle plan_discrete(const StochasticGame& game, const BehaviorModel& model,
                           const ParticleSet& particles, const PlanConfig& config);

/// Action choice for a discrete bundle at an explicit particle distribution.
int select_action_discrete(const PolicyBundle& bundle, const DiscreteBelief& belief, int state);

}  // namespace ibrl
