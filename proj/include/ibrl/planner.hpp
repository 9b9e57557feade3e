#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ibrl/behavior.hpp"
#include "ibrl/game.hpp"

namespace ibrl {

/// One sampled reachable belief b_s^i = eta * Phi_s^i * b, carried as its
/// defining counts plus the Phi evaluations over the particle set. Phi is
/// stored max-normalized (log_scale holds the subtracted max log) since every
/// downstream use is a self-normalized ratio.
struct SampledBelief {
  SufficientStats counts;
  std::vector<double> phi;      // exp(log Phi - log_scale), max element 1
  double log_scale = 0.0;
  double phi_sum = 0.0;         // sum of scaled phi, > 0
  double eta = 0.0;             // n / phi_sum
  std::vector<double> weights;  // phi / phi_sum; the mc_inner weights
};

SampledBelief make_sampled_belief(const BehaviorModel& model, const ParticleSet& particles,
                                  SufficientStats counts);

/// Per-state belief sets; element 0 of every state is the prior (psi = 0).
struct SampledBeliefSet {
  std::vector<std::vector<SampledBelief>> per_state;
};

/// Rollout-based reachable-belief sampling: uniform random agent actions,
/// opponent actions from the prior predictive (a fresh lambda per rollout),
/// the running counts recorded at every visited state. Duplicate count
/// vectors are dropped and each state keeps at most per_state_count beliefs
/// (the prior included).
SampledBeliefSet sample_reachable_beliefs(const StochasticGame& game, const BehaviorModel& model,
                                          const ParticleSet& particles, int per_state_count,
                                          int depth, Rng& rng);

/// Self-normalized Monte Carlo inner product <g, b> (Eq. of the projection
/// machinery): sum_j g_j phi_j / sum_j phi_j, deterministic for a fixed
/// particle set.
double mc_inner(std::span<const double> g_evals, const SampledBelief& belief);

/// A value-function piece alpha(lambda), carried as its evaluations at the
/// particles. coeffs holds the projection onto the belief basis {Phi_s^i}
/// once computed. term_count tracks the implicit symbolic size m for the
/// parameter-explosion diagnostics.
struct AlphaFunction {
  std::vector<double> evals;
  std::int32_t action = 0;
  std::int32_t prov_action = 0;
  std::vector<std::int32_t> prov_choices;  // chosen previous-alpha index per (s', v)
  std::uint64_t term_count = 0;
  std::vector<double> coeffs;
  double projection_residual = std::numeric_limits<double>::quiet_NaN();
};

using AlphaSet = std::vector<AlphaFunction>;

/// Exhaustive backup: Gamma_s^{k+1} = {alpha_s^{ut}} over every agent action
/// u and every choice vector t assigning one previous alpha to each pair
/// (s', v). Throws ExplosionError when the enumeration would exceed cap.
AlphaSet exact_backup(int s, const std::vector<AlphaSet>& prev, const StochasticGame& game,
                      const LikelihoodTable& ltab, std::int64_t cap = 1'000'000);

/// Removes duplicates and members that never rise above the envelope of the
/// rest anywhere on the particle simplex (exact LP test). Preserves the value
/// max_alpha <alpha, b> for every belief representable as nonnegative
/// particle weights, hence for everything mc_inner can produce.
void prune_alpha_set(AlphaSet& set);

/// The same enumeration as exact_backup but built incrementally, pruning the
/// cross-sum after every (s', v) stage. Values agree with the literal
/// enumeration at every belief; choice provenance is not tracked.
AlphaSet exact_backup_pruned(int s, const std::vector<AlphaSet>& prev, const StochasticGame& game,
                             const LikelihoodTable& ltab, std::int64_t cap = 1'000'000);

struct WeightedBackupResult {
  AlphaSet alphas;              // deduplicated, <= one per belief
  std::vector<double> values;   // Bellman-backup value at each input belief
};

/// Point-based backup core over arbitrary per-belief weight vectors. Used by
/// pb_backup (Phi-basis weights) and the discrete planner (particle weights).
/// When current is non-null, a belief keeps its previous best alpha whenever
/// the fresh backup does not improve on it.
WeightedBackupResult backup_at_weight_vectors(std::span<const std::vector<double>> weights, int s,
                                              const std::vector<AlphaSet>& prev,
                                              const StochasticGame& game,
                                              const LikelihoodTable& ltab,
                                              const AlphaSet* current, double dedupe_tol);

/// PB-BACKUP: only the alpha-functions optimal at the sampled beliefs are
/// constructed; at most |B_s| survive, each tagged with its maximizing u.
WeightedBackupResult pb_backup(const std::vector<SampledBelief>& beliefs, int s,
                               const std::vector<AlphaSet>& prev, const StochasticGame& game,
                               const LikelihoodTable& ltab, const AlphaSet* current = nullptr,
                               double dedupe_tol = 1e-12);

/// Gram system for projecting alpha-functions onto the belief basis.
struct BeliefBasis {
  int size = 0;
  std::vector<double> inner;  // [i][k] = <Phi_s^i, b_s^k>
  std::vector<double> gram;   // [j][i] = sum_k inner[i][k] * inner[j][k]
};

BeliefBasis build_belief_basis(const std::vector<SampledBelief>& beliefs);

/// Least-squares projection coefficients minimizing J(alpha) over the
/// sampled beliefs; falls back to a ridge-regularized solve when the Gram
/// matrix is singular. Stores coeffs and the residual J on alpha.
std::vector<double> project_alpha(AlphaFunction& alpha, const std::vector<SampledBelief>& beliefs,
                                  const BeliefBasis& basis);

/// Serialized planner output: everything select_action needs online.
struct StatePolicy {
  std::vector<std::int32_t> actions;  // action tag per alpha
  std::vector<double> coeffs;         // [alpha][i], empty for the discrete variant
  std::vector<double> z_table;        // [alpha][j]: sum_i c_i Phi_s^i(lambda_j), precomputed
  std::vector<double> evals;          // [alpha][j]: raw per-particle evaluations
  std::int32_t prior_action = 0;      // planning-time winner at the prior belief
  int num_alphas() const { return static_cast<int>(actions.size()); }
};

struct PolicyBundle {
  enum class Variant : std::uint32_t { kPointBased = 0, kExact = 1, kDiscrete = 2 };
  Variant variant = Variant::kPointBased;
  std::string env_name;
  std::string model_name;
  std::uint64_t game_hash = 0;
  std::int32_t horizon = 0;      // requested k
  std::int32_t sweeps_done = 0;  // may stop early on sup-change < tolerance
  std::uint64_t seed = 0;
  double discount = 0.0;
  double reward_shift = 0.0;  // planning used reward + shift (argmax-invariant)
  double sup_change_tol = 0.0;
  double dedupe_tol = 0.0;
  ParticleSet particles;
  std::int32_t param_dim = 0;
  SampledBeliefSet beliefs;
  std::vector<StatePolicy> policy;
  std::vector<double> sup_changes;  // per sweep, over all sampled beliefs
};

struct PlanConfig {
  PolicyBundle::Variant mode = PolicyBundle::Variant::kPointBased;
  int horizon = 60;
  int beliefs_per_state = 16;
  int sample_depth = 10;
  std::uint64_t seed = 1;
  std::int64_t explosion_cap = 1'000'000;
  double sup_change_tol = 1e-6;
  double dedupe_tol = 1e-12;
  bool keep_better = true;     // per-belief replace-if-better across sweeps
  bool prune_exact = true;     // value-preserving pruning between exact sweeps
  bool shift_rewards = true;   // plan on rewards shifted to be nonnegative
  std::string env_name;
  std::vector<double>* sweep_seconds = nullptr;  // optional timing sink
};

/// Samples reachable beliefs once, then runs `horizon` backup sweeps over all
/// states, projecting after every point-based sweep. Stops early when the
/// per-sweep sup-change over the sampled beliefs falls below the tolerance.
PolicyBundle plan(const StochasticGame& game, const BehaviorModel& model,
                  const ParticleSet& particles, const PlanConfig& config);

struct ActionSelection {
  int action = 0;
  bool degenerate = false;           // posterior had zero mass; fell back to the prior
  std::vector<double> scores;        // per alpha, the online expected payoff
};

/// Online policy: evaluates every alpha at the current belief via the
/// precomputed per-particle tables and returns the argmax action tag (lowest
/// index on ties). O(|Gamma_s| * n) per call.
ActionSelection select_action(const PolicyBundle& bundle, const BehaviorModel& model,
                              const SufficientStats& psi, int state);

/// Same, but with the caller maintaining log Phi incrementally across steps.
ActionSelection select_action_logphi(const PolicyBundle& bundle, std::span<const double> log_phi,
                                     int state);

}  // namespace ibrl
