#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ibrl/errors.hpp"
#include "ibrl/rng.hpp"

namespace ibrl {

/// Opaque parameter vector; each model defines the layout and valid ranges.
struct BehaviorParams {
  std::vector<double> values;
  bool operator==(const BehaviorParams&) const = default;
};

/// Parametric opponent behavior: a likelihood over opponent actions per
/// information state, plus a prior expressed as a sampler. Implementations
/// must be stateless after construction (likelihood is called concurrently).
class BehaviorModel {
 public:
  virtual ~BehaviorModel() = default;
  virtual std::string name() const = 0;
  virtual int param_dim() const = 0;
  virtual int num_states() const = 0;  // information states
  virtual int num_opponent_actions() const = 0;
  /// Pr(v | state, lambda). Throws DomainError for out-of-range lambda.
  virtual double likelihood(const BehaviorParams& lambda, int state, int v) const = 0;
  virtual BehaviorParams sample_prior(Rng& rng) const = 0;
  virtual void validate_params(const BehaviorParams& lambda) const = 0;
  /// Analytic mean of the prior (the Exploit baseline's point estimate).
  virtual BehaviorParams prior_mean() const = 0;
  /// Clamp a parameter vector into the valid range; returns true if changed.
  virtual bool clamp_params(BehaviorParams& lambda) const = 0;
};

/// Per-(information state, opponent action) observation counts; together
/// with the prior these fully determine the posterior.
class SufficientStats {
 public:
  SufficientStats() = default;
  SufficientStats(int num_states, int num_opponent_actions)
      : S_(num_states), V_(num_opponent_actions),
        counts_(static_cast<std::size_t>(num_states) * num_opponent_actions, 0) {}

  int num_states() const { return S_; }
  int num_opponent_actions() const { return V_; }
  std::uint32_t count(int s, int v) const { return counts_[index(s, v)]; }
  std::uint64_t total() const { return total_; }

  void add(int s, int v, std::uint32_t k = 1) {
    counts_[index(s, v)] += k;
    total_ += k;
  }

  const std::vector<std::uint32_t>& raw() const { return counts_; }

  /// Nonzero cells as (state, action, count), in (s, v) order.
  std::vector<std::tuple<int, int, std::uint32_t>> nonzero() const;

  SufficientStats operator+(const SufficientStats& other) const;
  bool operator==(const SufficientStats&) const = default;

 private:
  std::size_t index(int s, int v) const {
    if (s < 0 || s >= S_ || v < 0 || v >= V_) throw UsageError("SufficientStats: index out of range");
    return static_cast<std::size_t>(s) * V_ + static_cast<std::size_t>(v);
  }
  int S_ = 0, V_ = 0;
  std::vector<std::uint32_t> counts_;
  std::uint64_t total_ = 0;
};

/// Returns a copy with psi[s][v] incremented.
SufficientStats update_counts(const SufficientStats& psi, int s, int v);

/// Parameter vectors drawn i.i.d. from the model prior.
struct ParticleSet {
  std::vector<BehaviorParams> particles;
  std::uint64_t seed = 0;
  int n() const { return static_cast<int>(particles.size()); }
};

ParticleSet sample_particles(const BehaviorModel& model, int n, std::uint64_t seed);

/// log Phi(lambda) = sum_{s,v} psi_s^v * log p_s^v(lambda); -inf when any
/// observed pair has zero likelihood.
double log_phi(const BehaviorModel& model, const SufficientStats& psi, const BehaviorParams& lambda);

/// Phi(lambda) = prod p^psi, computed in log space and exponentiated.
double phi_eval(const BehaviorModel& model, const SufficientStats& psi, const BehaviorParams& lambda);

/// log Phi over a particle set (parallel over particles).
std::vector<double> log_phi_batch(const BehaviorModel& model, const SufficientStats& psi,
                                  const ParticleSet& particles);

/// Self-normalized importance weights w_j = Phi(lambda_j) / sum_k Phi(lambda_k),
/// computed with max-log subtraction. Throws DegenerateBeliefError when every
/// particle has zero posterior mass.
std::vector<double> posterior_weights(const BehaviorModel& model, const SufficientStats& psi,
                                      const ParticleSet& particles);

/// Dense cache of likelihood(lambda_j, s, v) for every particle.
struct LikelihoodTable {
  int S = 0, V = 0, n = 0;
  std::vector<double> values;  // [s][v][j]
  std::span<const double> row(int s, int v) const {
    const std::size_t off = (static_cast<std::size_t>(s) * V + static_cast<std::size_t>(v)) * n;
    return {values.data() + off, static_cast<std::size_t>(n)};
  }
};

LikelihoodTable build_likelihood_table(const BehaviorModel& model, const ParticleSet& particles);

/// Independent multinomial opponent-action distributions per information
/// state with per-state Dirichlet priors (the FDM structure). Also serves as
/// the memory-1 opponent when built over expanded information states.
class FdmModel : public BehaviorModel {
 public:
  FdmModel(int num_states, int num_opponent_actions, std::vector<double> dirichlet_alpha,
           std::string name = "fdm");
  /// Symmetric Dir(alpha) rows.
  FdmModel(int num_states, int num_opponent_actions, double symmetric_alpha,
           std::string name = "fdm");

  std::string name() const override { return name_; }
  int param_dim() const override { return S_ * V_; }
  int num_states() const override { return S_; }
  int num_opponent_actions() const override { return V_; }
  double likelihood(const BehaviorParams& lambda, int state, int v) const override;
  BehaviorParams sample_prior(Rng& rng) const override;
  void validate_params(const BehaviorParams& lambda) const override;
  BehaviorParams prior_mean() const override;
  bool clamp_params(BehaviorParams& lambda) const override;

  double dirichlet_alpha(int s, int v) const { return alpha_[static_cast<std::size_t>(s) * V_ + v]; }

 private:
  int S_, V_;
  std::vector<double> alpha_;
  std::string name_;
};

}  // namespace ibrl
