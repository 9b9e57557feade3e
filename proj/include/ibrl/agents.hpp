#pragma once

#include <memory>
#include <string>

#include "ibrl/baselines.hpp"
#include "ibrl/environments.hpp"
#include "ibrl/planner.hpp"

namespace ibrl {

/// Online decision maker. Episode-scoped state is reset in begin_episode;
/// anything shared across episodes (bundles, caches) lives behind const
/// shared_ptr and is safe for concurrent episodes.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  /// Oracle-style agents get the true opponent parameters; others ignore it.
  virtual void on_new_opponent(const BehaviorParams& /*true_lambda*/) {}
  virtual void begin_episode(std::uint64_t agent_seed) = 0;
  virtual int act(int state) = 0;
  virtual void observe(int s, int u, int v, double reward, int s2) = 0;
};

/// Plays a planned PolicyBundle (point-based, exact, or discrete variant),
/// maintaining counts and the incremental log-likelihood exponent.
class IbrlAgent : public Agent {
 public:
  IbrlAgent(std::shared_ptr<const PolicyBundle> bundle, std::shared_ptr<const BehaviorModel> model,
            std::string name = "ibrl");
  std::string name() const override { return name_; }
  void begin_episode(std::uint64_t agent_seed) override;
  int act(int state) override;
  void observe(int s, int u, int v, double reward, int s2) override;
  int degenerate_steps() const { return degenerate_steps_; }
  const SufficientStats& counts() const { return psi_; }

 private:
  std::shared_ptr<const PolicyBundle> bundle_;
  std::shared_ptr<const BehaviorModel> model_;
  std::string name_;
  SufficientStats psi_;
  std::vector<double> log_phi_;
  int degenerate_steps_ = 0;
  bool warned_ = false;
};

class BpviAgent : public Agent {
 public:
  BpviAgent(std::shared_ptr<const BehaviorModel> model, const StochasticGame& game,
            std::shared_ptr<const ParticleSet> particles, int m_samples, double vi_tol,
            std::shared_ptr<QTableCache> cache = nullptr);
  std::string name() const override { return "bpvi"; }
  void begin_episode(std::uint64_t agent_seed) override;
  int act(int state) override;
  void observe(int s, int u, int v, double reward, int s2) override;

 private:
  std::shared_ptr<const BehaviorModel> model_;
  const StochasticGame& game_;
  std::shared_ptr<const ParticleSet> particles_;
  int m_samples_;
  double vi_tol_;
  std::shared_ptr<QTableCache> cache_;
  SufficientStats psi_;
  std::unique_ptr<Rng> rng_;
};

/// Greedy with respect to a point estimate of the opponent parameters,
/// re-estimated once per episode.
class ExploitAgent : public Agent {
 public:
  enum class Estimate { kPriorMean, kPosteriorMean };
  ExploitAgent(std::shared_ptr<const BehaviorModel> model, const StochasticGame& game,
               std::shared_ptr<const ParticleSet> particles, Estimate estimate, double vi_tol);
  std::string name() const override {
    return estimate_ == Estimate::kPriorMean ? "exploit" : "exploit-posterior";
  }
  void begin_episode(std::uint64_t agent_seed) override;
  int act(int state) override;
  void observe(int s, int u, int v, double reward, int s2) override;

 private:
  std::shared_ptr<const BehaviorModel> model_;
  const StochasticGame& game_;
  std::shared_ptr<const ParticleSet> particles_;
  Estimate estimate_;
  double vi_tol_;
  std::shared_ptr<const QTable> prior_mean_solution_;  // computed once
  QTable episode_solution_;
  SufficientStats psi_;
  bool have_episode_solution_ = false;
};

/// Knows the true opponent parameters; solves the induced MDP and acts
/// greedily (the Upper Bound comparison).
class OracleAgent : public Agent {
 public:
  OracleAgent(std::shared_ptr<const BehaviorModel> model, const StochasticGame& game, double vi_tol);
  std::string name() const override { return "oracle"; }
  void on_new_opponent(const BehaviorParams& true_lambda) override;
  void begin_episode(std::uint64_t agent_seed) override;
  int act(int state) override;
  void observe(int s, int u, int v, double reward, int s2) override;

 private:
  std::shared_ptr<const BehaviorModel> model_;
  const StochasticGame& game_;
  double vi_tol_;
  QTable solution_;
  bool solved_ = false;
};

/// Best response to the Laplace-smoothed empirical opponent policy, falling
/// back to the per-state maximin mixed strategy while the running average
/// reward is below the current state's security value.
class MetaStrategyAgent : public Agent {
 public:
  MetaStrategyAgent(const StochasticGame& game, std::shared_ptr<const MaximinSolution> maximin,
                    double vi_tol);
  std::string name() const override { return "meta"; }
  void begin_episode(std::uint64_t agent_seed) override;
  int act(int state) override;
  void observe(int s, int u, int v, double reward, int s2) override;

 private:
  const StochasticGame& game_;
  std::shared_ptr<const MaximinSolution> maximin_;
  double vi_tol_;
  std::shared_ptr<FdmModel> empirical_model_;
  SufficientStats counts_;
  double accumulated_reward_ = 0.0;
  std::int64_t steps_ = 0;
  QTable best_response_;
  bool best_response_stale_ = true;
  std::unique_ptr<Rng> rng_;
};

}  // namespace ibrl
