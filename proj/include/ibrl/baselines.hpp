#pragma once

#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "ibrl/behavior.hpp"
#include "ibrl/game.hpp"

namespace ibrl {

/// Q-values of the known-lambda MDP obtained by collapsing the opponent out
/// of the stochastic game.
struct QTable {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> q;  // [s][u]
  double residual = 0.0;  // sup-change of the final sweep
  int sweeps = 0;

  double value(int s) const {
    double best = q[static_cast<std::size_t>(s) * num_actions];
    for (int u = 1; u < num_actions; ++u)
      best = std::max(best, q[static_cast<std::size_t>(s) * num_actions + u]);
    return best;
  }
  int greedy(int s) const {
    int arg = 0;
    double best = q[static_cast<std::size_t>(s) * num_actions];
    for (int u = 1; u < num_actions; ++u) {
      const double val = q[static_cast<std::size_t>(s) * num_actions + u];
      if (val > best) {
        best = val;
        arg = u;
      }
    }
    return arg;
  }
};

/// Jacobi value iteration on the MDP induced by a fixed opponent parameter,
/// run until the sup-residual is at most tol. Each sweep's residual contracts
/// by the discount factor, so convergence is guaranteed.
QTable value_iteration(const StochasticGame& game, const BehaviorModel& model,
                       const BehaviorParams& lambda, double tol, int max_sweeps = 1000000);

/// Per-state maximin (security) values of the zero-sum game where the
/// opponent minimizes our reward, with the mixed maximin strategies. Stage
/// matrix games are solved by fictitious play.
struct MaximinSolution {
  std::vector<double> values;               // per state
  std::vector<std::vector<double>> strategy;  // per state, mixed over agent actions
};

MaximinSolution solve_maximin(const StochasticGame& game, double tol = 1e-4,
                              int fictitious_play_rounds = 100000);

/// Maximin value and mixed strategy of one matrix game (row player maximizes).
std::pair<double, std::vector<double>> fictitious_play_maximin(
    const std::vector<double>& payoff, int rows, int cols, int rounds);

/// Myopic value-of-perfect-information bonus per agent action, computed from
/// the per-sample Q distribution (Dearden-style): the expected gain from
/// learning that an action's value crosses the best/second-best boundary.
std::vector<double> myopic_vpi(const std::vector<QTable>& samples, int state);

/// Shared cache of known-lambda MDP solutions keyed by particle index, so
/// posterior resampling does not repeat identical solves. Thread-safe;
/// results are independent of who computes them first.
class QTableCache {
 public:
  QTableCache(const StochasticGame& game, std::shared_ptr<const BehaviorModel> model,
              std::shared_ptr<const ParticleSet> particles, double tol);
  const QTable& at_particle(int j);

 private:
  const StochasticGame& game_;
  std::shared_ptr<const BehaviorModel> model_;
  std::shared_ptr<const ParticleSet> particles_;
  double tol_;
  std::mutex mutex_;
  std::unordered_map<int, std::shared_ptr<QTable>> cache_;
};

/// BPVI action choice at the current state: average the Q-tables of posterior
/// samples and add the myopic VPI bonus; argmax with lowest index on ties.
int bpvi_select(const BehaviorModel& model, const SufficientStats& psi,
                const ParticleSet& particles, const StochasticGame& game, int state,
                int m_samples, Rng& rng, double vi_tol, QTableCache* cache = nullptr);

}  // namespace ibrl
