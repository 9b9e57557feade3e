#include "ibrl/agents.hpp"

#include <cmath>
#include <iostream>
#include <limits>

namespace ibrl {

IbrlAgent::IbrlAgent(std::shared_ptr<const PolicyBundle> bundle,
                     std::shared_ptr<const BehaviorModel> model, std::string name)
    : bundle_(std::move(bundle)), model_(std::move(model)), name_(std::move(name)) {
  if (bundle_->model_name != model_->name())
    throw UsageError("IbrlAgent: bundle was planned for model '" + bundle_->model_name + "'");
}

void IbrlAgent::begin_episode(std::uint64_t /*agent_seed*/) {
  psi_ = SufficientStats(model_->num_states(), model_->num_opponent_actions());
  log_phi_.assign(static_cast<std::size_t>(bundle_->particles.n()), 0.0);
  degenerate_steps_ = 0;
}

int IbrlAgent::act(int state) {
  const ActionSelection sel = select_action_logphi(*bundle_, log_phi_, state);
  if (sel.degenerate) {
    ++degenerate_steps_;
    if (!warned_) {
      std::cerr << "[ibrl] warning: degenerate belief, falling back to prior weights\n";
      warned_ = true;
    }
  }
  return sel.action;
}

void IbrlAgent::observe(int s, int /*u*/, int v, double /*reward*/, int /*s2*/) {
  psi_.add(s, v);
  for (int j = 0; j < bundle_->particles.n(); ++j) {
    const double p = model_->likelihood(bundle_->particles.particles[static_cast<std::size_t>(j)], s, v);
    log_phi_[static_cast<std::size_t>(j)] +=
        p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
  }
}

BpviAgent::BpviAgent(std::shared_ptr<const BehaviorModel> model, const StochasticGame& game,
                     std::shared_ptr<const ParticleSet> particles, int m_samples, double vi_tol,
                     std::shared_ptr<QTableCache> cache)
    : model_(std::move(model)), game_(game), particles_(std::move(particles)),
      m_samples_(m_samples), vi_tol_(vi_tol), cache_(std::move(cache)) {}

void BpviAgent::begin_episode(std::uint64_t agent_seed) {
  psi_ = SufficientStats(model_->num_states(), model_->num_opponent_actions());
  rng_ = std::make_unique<Rng>(agent_seed);
}

int BpviAgent::act(int state) {
  return bpvi_select(*model_, psi_, *particles_, game_, state, m_samples_, *rng_, vi_tol_,
                     cache_.get());
}

void BpviAgent::observe(int s, int /*u*/, int v, double /*reward*/, int /*s2*/) { psi_.add(s, v); }

ExploitAgent::ExploitAgent(std::shared_ptr<const BehaviorModel> model, const StochasticGame& game,
                           std::shared_ptr<const ParticleSet> particles, Estimate estimate,
                           double vi_tol)
    : model_(std::move(model)), game_(game), particles_(std::move(particles)),
      estimate_(estimate), vi_tol_(vi_tol) {}

void ExploitAgent::begin_episode(std::uint64_t /*agent_seed*/) {
  BehaviorParams estimate;
  if (estimate_ == Estimate::kPriorMean) {
    if (prior_mean_solution_ == nullptr) {
      estimate = model_->prior_mean();
      if (model_->clamp_params(estimate))
        std::cerr << "[exploit] warning: prior mean clamped into range\n";
      prior_mean_solution_ =
          std::make_shared<const QTable>(value_iteration(game_, *model_, estimate, vi_tol_));
    }
    have_episode_solution_ = false;
    psi_ = SufficientStats(model_->num_states(), model_->num_opponent_actions());
    return;
  }
  // Posterior mean: particle-weighted mean of the parameter vectors under the
  // counts accumulated so far (uniform weights on a fresh agent).
  if (psi_.num_states() == 0)
    psi_ = SufficientStats(model_->num_states(), model_->num_opponent_actions());
  const std::vector<double> w = posterior_weights(*model_, psi_, *particles_);
  estimate.values.assign(static_cast<std::size_t>(particles_->particles[0].values.size()), 0.0);
  for (int j = 0; j < particles_->n(); ++j) {
    const auto& pj = particles_->particles[static_cast<std::size_t>(j)].values;
    for (std::size_t d = 0; d < pj.size(); ++d)
      estimate.values[d] += w[static_cast<std::size_t>(j)] * pj[d];
  }
  if (model_->clamp_params(estimate))
    std::cerr << "[exploit] warning: posterior mean clamped into range\n";
  episode_solution_ = value_iteration(game_, *model_, estimate, vi_tol_);
  have_episode_solution_ = true;
}

int ExploitAgent::act(int state) {
  return have_episode_solution_ ? episode_solution_.greedy(state)
                                : prior_mean_solution_->greedy(state);
}

void ExploitAgent::observe(int s, int /*u*/, int v, double /*reward*/, int /*s2*/) {
  if (psi_.num_states() > 0) psi_.add(s, v);
}

OracleAgent::OracleAgent(std::shared_ptr<const BehaviorModel> model, const StochasticGame& game,
                         double vi_tol)
    : model_(std::move(model)), game_(game), vi_tol_(vi_tol) {}

void OracleAgent::on_new_opponent(const BehaviorParams& true_lambda) {
  solution_ = value_iteration(game_, *model_, true_lambda, vi_tol_);
  solved_ = true;
}

void OracleAgent::begin_episode(std::uint64_t /*agent_seed*/) {
  if (!solved_) throw UsageError("OracleAgent: true opponent parameters not provided");
}

int OracleAgent::act(int state) { return solution_.greedy(state); }

void OracleAgent::observe(int, int, int, double, int) {}

MetaStrategyAgent::MetaStrategyAgent(const StochasticGame& game,
                                     std::shared_ptr<const MaximinSolution> maximin, double vi_tol)
    : game_(game), maximin_(std::move(maximin)), vi_tol_(vi_tol) {
  empirical_model_ = std::make_shared<FdmModel>(game_.num_states, game_.num_opponent_actions, 1.0,
                                                "meta-empirical");
}

void MetaStrategyAgent::begin_episode(std::uint64_t agent_seed) {
  counts_ = SufficientStats(game_.num_states, game_.num_opponent_actions);
  accumulated_reward_ = 0.0;
  steps_ = 0;
  best_response_stale_ = true;
  rng_ = std::make_unique<Rng>(agent_seed);
}

int MetaStrategyAgent::act(int state) {
  // Security fallback: while the running average is below the state's
  // maximin value, play the maximin mixed strategy.
  if (steps_ > 0 &&
      accumulated_reward_ / static_cast<double>(steps_) < maximin_->values[static_cast<std::size_t>(state)]) {
    return rng_->categorical(maximin_->strategy[static_cast<std::size_t>(state)]);
  }
  if (best_response_stale_) {
    // Laplace-smoothed empirical opponent policy as an FDM parameter vector.
    BehaviorParams theta;
    theta.values.resize(static_cast<std::size_t>(game_.num_states) * game_.num_opponent_actions);
    for (int s = 0; s < game_.num_states; ++s) {
      double total = 0.0;
      for (int v = 0; v < game_.num_opponent_actions; ++v)
        total += counts_.count(s, v) + 1.0;
      for (int v = 0; v < game_.num_opponent_actions; ++v)
        theta.values[static_cast<std::size_t>(s) * game_.num_opponent_actions + v] =
            (counts_.count(s, v) + 1.0) / total;
    }
    best_response_ = value_iteration(game_, *empirical_model_, theta, vi_tol_);
    best_response_stale_ = false;
  }
  return best_response_.greedy(state);
}

void MetaStrategyAgent::observe(int s, int /*u*/, int v, double reward, int /*s2*/) {
  counts_.add(s, v);
  accumulated_reward_ += reward;
  ++steps_;
  best_response_stale_ = true;
}

}  // namespace ibrl
