#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ibrl/baselines.hpp"
#include "ibrl/bundle.hpp"
#include "ibrl/environments.hpp"
#include "ibrl/planner.hpp"
#include "oracles.hpp"

using namespace ibrl;

namespace {

ParticleSet fdm_particles(const FdmModel& model, int n, std::uint64_t seed) {
  return sample_particles(model, n, seed);
}

/// Probe beliefs: every count vector with total <= max_total over the model's
/// (state, action) cells, lexicographic order.
std::vector<SufficientStats> count_grid(int S, int V, int max_total) {
  std::vector<SufficientStats> out;
  const int cells = S * V;
  std::vector<int> counts(static_cast<std::size_t>(cells), 0);
  std::function<void(int, int)> rec = [&](int cell, int remaining) {
    if (cell == cells) {
      SufficientStats psi(S, V);
      for (int c = 0; c < cells; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0)
          psi.add(c / V, c % V, static_cast<std::uint32_t>(counts[static_cast<std::size_t>(c)]));
      out.push_back(std::move(psi));
      return;
    }
    for (int k = 0; k <= remaining; ++k) {
      counts[static_cast<std::size_t>(cell)] = k;
      rec(cell + 1, remaining - k);
    }
    counts[static_cast<std::size_t>(cell)] = 0;
  };
  rec(0, max_total);
  return out;
}

double value_of_set(const AlphaSet& set, const SampledBelief& belief) {
  double best = -1e300;
  for (const auto& a : set) best = std::max(best, mc_inner(a.evals, belief));
  return best;
}

}  // namespace

TEST_SUITE_BEGIN("planner");

TEST_CASE("mc_inner: constants, prior mean, Dirichlet moment oracle") {
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = fdm_particles(model, 5000, 31);
  SufficientStats psi(2, 2);
  psi.add(0, 1, 2);
  const SampledBelief belief = make_sampled_belief(model, particles, psi);
  const std::vector<double> constant(static_cast<std::size_t>(particles.n()), 3.25);
  CHECK(mc_inner(constant, belief) == doctest::Approx(3.25).epsilon(1e-13));

  const SampledBelief prior = make_sampled_belief(model, particles, SufficientStats(2, 2));
  std::vector<double> g(static_cast<std::size_t>(particles.n()));
  double mean = 0.0;
  for (int j = 0; j < particles.n(); ++j) {
    g[static_cast<std::size_t>(j)] = particles.particles[static_cast<std::size_t>(j)].values[0];
    mean += g[static_cast<std::size_t>(j)];
  }
  mean /= particles.n();
  CHECK(mc_inner(g, prior) == doctest::Approx(mean).epsilon(1e-12));

  // Posterior moment against the closed form, n = 1e5, 3 standard errors.
  const ParticleSet big = fdm_particles(model, 100000, 32);
  const SampledBelief posterior = make_sampled_belief(model, big, psi);
  std::vector<double> theta01(static_cast<std::size_t>(big.n()));
  for (int j = 0; j < big.n(); ++j)
    theta01[static_cast<std::size_t>(j)] = big.particles[static_cast<std::size_t>(j)].values[1];
  const double estimate = mc_inner(theta01, posterior);
  double variance = 0.0;
  for (int j = 0; j < big.n(); ++j) {
    const double d = theta01[static_cast<std::size_t>(j)] - estimate;
    variance += posterior.weights[static_cast<std::size_t>(j)] * posterior.weights[static_cast<std::size_t>(j)] * d * d;
  }
  const double expected = oracles::dirichlet_posterior_mean(model, psi, 0, 1);
  CHECK(std::abs(estimate - expected) <= 3.0 * std::sqrt(variance));
}

TEST_CASE("mc_inner rejects mismatched dimensions") {
  FdmModel model(1, 2, 0.5);
  const ParticleSet particles = fdm_particles(model, 8, 1);
  const SampledBelief b = make_sampled_belief(model, particles, SufficientStats(1, 2));
  std::vector<double> g(4, 1.0);
  CHECK_THROWS_AS(mc_inner(g, b), UsageError);
}

TEST_CASE("exact backup base case produces one alpha per action") {
  const StochasticGame game = oracles::make_toy_game(41);
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = fdm_particles(model, 6, 42);
  const LikelihoodTable ltab = build_likelihood_table(model, particles);
  std::vector<AlphaSet> prev(2);
  for (auto& set : prev) {
    AlphaFunction zero;
    zero.evals.assign(6, 0.0);
    set.push_back(zero);
  }
  const AlphaSet out = exact_backup(0, prev, game, ltab);
  REQUIRE(out.size() == 2);
  for (int u = 0; u < 2; ++u) {
    CHECK(out[static_cast<std::size_t>(u)].action == u);
    for (int j = 0; j < 6; ++j) {
      double expected = 0.0;
      for (int v = 0; v < 2; ++v)
        expected += ltab.row(0, v)[static_cast<std::size_t>(j)] * game.reward(0, u, v);
      CHECK(out[static_cast<std::size_t>(u)].evals[static_cast<std::size_t>(j)] ==
            doctest::Approx(expected).epsilon(1e-13));
    }
  }
}

TEST_CASE("exact backup enumerates |U| * prod |Gamma_s'|^|V| candidates") {
  const StochasticGame game = oracles::make_toy_game(43);
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = fdm_particles(model, 4, 44);
  const LikelihoodTable ltab = build_likelihood_table(model, particles);
  std::vector<AlphaSet> prev(2);
  for (auto& set : prev)
    for (int i = 0; i < 2; ++i) {
      AlphaFunction a;
      a.evals = {0.1 * i, 0.2, 0.3, 0.1};
      set.push_back(a);
    }
  const AlphaSet out = exact_backup(0, prev, game, ltab);
  CHECK(out.size() == 32);  // 2 * (2*2)^2
}

TEST_CASE("exact backup refuses to enumerate past the cap") {
  const StochasticGame game = oracles::make_toy_game(45);
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = fdm_particles(model, 4, 46);
  const LikelihoodTable ltab = build_likelihood_table(model, particles);
  std::vector<AlphaSet> prev(2);
  for (auto& set : prev)
    for (int i = 0; i < 40; ++i) {
      AlphaFunction a;
      a.evals = {0.01 * i, 0.0, 0.0, 0.0};
      set.push_back(a);
    }
  CHECK_THROWS_AS(exact_backup(0, prev, game, ltab, 100000), ExplosionError);
}

TEST_CASE("geometric series on the single-everything game") {
  StochasticGame game;
  game.num_states = 1;
  game.num_agent_actions = 1;
  game.num_opponent_actions = 1;
  game.discount = 0.8;
  game.allocate_tables();
  game.reward_ref(0, 0, 0) = 1.0;
  game.transition_ref(0, 0, 0, 0) = 1.0;
  game.validate();
  FdmModel model(1, 1, 1.0);
  const ParticleSet particles = fdm_particles(model, 3, 47);
  const LikelihoodTable ltab = build_likelihood_table(model, particles);
  std::vector<AlphaSet> gamma(1);
  AlphaFunction zero;
  zero.evals.assign(3, 0.0);
  gamma[0].push_back(zero);
  double expected = 0.0;
  double pow_phi = 1.0;
  for (int k = 1; k <= 12; ++k) {
    gamma[0] = exact_backup(0, gamma, game, ltab);
    expected += pow_phi;
    pow_phi *= game.discount;
    const SampledBelief prior = make_sampled_belief(model, particles, SufficientStats(1, 1));
    CHECK(value_of_set(gamma[0], prior) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("exact planner values match the belief-tree expectimax oracle") {
  for (std::uint64_t seed : {51u, 52u}) {
    const StochasticGame game = oracles::make_toy_game(seed);
    FdmModel model(2, 2, 0.5);
    const ParticleSet particles = fdm_particles(model, 4, seed + 100);
    const LikelihoodTable ltab = build_likelihood_table(model, particles);
    oracles::BeliefTreeValue oracle(game, model, particles);

    std::vector<AlphaSet> literal(2), pruned(2);
    for (auto* sets : {&literal, &pruned})
      for (auto& set : *sets) {
        AlphaFunction zero;
        zero.evals.assign(4, 0.0);
        set.push_back(zero);
      }
    const auto probes = count_grid(2, 2, 2);
    for (int k = 1; k <= 4; ++k) {
      std::vector<AlphaSet> next_lit(2), next_pr(2);
      for (int s = 0; s < 2; ++s) {
        // The literal enumeration explodes doubly-exponentially; past k=3 the
        // incrementally pruned path carries the check on its own.
        if (k <= 3) {
          next_lit[static_cast<std::size_t>(s)] = exact_backup(s, literal, game, ltab);
          prune_alpha_set(next_lit[static_cast<std::size_t>(s)]);
        }
        next_pr[static_cast<std::size_t>(s)] = exact_backup_pruned(s, pruned, game, ltab);
      }
      if (k <= 3) literal = std::move(next_lit);
      pruned = std::move(next_pr);
      for (const auto& psi : probes) {
        const SampledBelief b = make_sampled_belief(model, particles, psi);
        for (int s = 0; s < 2; ++s) {
          const double oracle_value = oracle.value(s, psi, k);
          if (k <= 3)
            CHECK(value_of_set(literal[static_cast<std::size_t>(s)], b) ==
                  doctest::Approx(oracle_value).epsilon(1e-9));
          CHECK(value_of_set(pruned[static_cast<std::size_t>(s)], b) ==
                doctest::Approx(oracle_value).epsilon(1e-9));
        }
      }
    }
  }
}

TEST_CASE("pruned exact sweeps preserve the literal enumeration's values") {
  const StochasticGame game = oracles::make_toy_game(61);
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = fdm_particles(model, 4, 62);
  const LikelihoodTable ltab = build_likelihood_table(model, particles);
  std::vector<AlphaSet> literal(2), pruned(2);
  for (auto* sets : {&literal, &pruned})
    for (auto& set : *sets) {
      AlphaFunction zero;
      zero.evals.assign(4, 0.0);
      set.push_back(zero);
    }
  const auto probes = count_grid(2, 2, 2);
  // The literal path is kept unpruned, so two sweeps is as deep as the
  // enumeration allows; deeper equivalence is covered through the
  // belief-tree oracle test.
  for (int k = 1; k <= 2; ++k) {
    std::vector<AlphaSet> next_lit(2), next_pr(2);
    for (int s = 0; s < 2; ++s) {
      next_lit[static_cast<std::size_t>(s)] = exact_backup(s, literal, game, ltab);
      next_pr[static_cast<std::size_t>(s)] = exact_backup(s, pruned, game, ltab);
      prune_alpha_set(next_pr[static_cast<std::size_t>(s)]);
      CHECK(next_pr[static_cast<std::size_t>(s)].size() <= next_lit[static_cast<std::size_t>(s)].size());
    }
    literal = std::move(next_lit);
    pruned = std::move(next_pr);
    for (const auto& psi : probes) {
      const SampledBelief b = make_sampled_belief(model, particles, psi);
      for (int s = 0; s < 2; ++s)
        CHECK(value_of_set(literal[static_cast<std::size_t>(s)], b) ==
              doctest::Approx(value_of_set(pruned[static_cast<std::size_t>(s)], b)).epsilon(1e-12));
    }
  }
}

TEST_CASE("pb backup with only the prior reproduces the myopic exact optimum") {
  const StochasticGame game = oracles::make_toy_game(71);
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = fdm_particles(model, 8, 72);
  const LikelihoodTable ltab = build_likelihood_table(model, particles);
  std::vector<AlphaSet> prev(2);
  for (auto& set : prev) {
    AlphaFunction zero;
    zero.evals.assign(8, 0.0);
    set.push_back(zero);
  }
  std::vector<SampledBelief> beliefs{make_sampled_belief(model, particles, SufficientStats(2, 2))};
  const auto res = pb_backup(beliefs, 0, prev, game, ltab);
  REQUIRE(res.alphas.size() == 1);
  const AlphaSet exact = exact_backup(0, prev, game, ltab);
  CHECK(res.values[0] == doctest::Approx(value_of_set(exact, beliefs[0])).epsilon(1e-12));
}

TEST_CASE("pb backup is a fixed point at its own beliefs") {
  const StochasticGame game = oracles::make_toy_game(73);
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = fdm_particles(model, 16, 74);
  const LikelihoodTable ltab = build_likelihood_table(model, particles);
  std::vector<AlphaSet> prev(2);
  Rng rng(75);
  for (auto& set : prev)
    for (int i = 0; i < 3; ++i) {
      AlphaFunction a;
      for (int j = 0; j < 16; ++j) a.evals.push_back(rng.uniform(0.0, 2.0));
      set.push_back(a);
    }
  std::vector<SampledBelief> beliefs;
  for (const auto& psi : count_grid(2, 2, 1)) beliefs.push_back(make_sampled_belief(model, particles, psi));
  const auto res = pb_backup(beliefs, 0, prev, game, ltab);
  // Re-evaluating the surviving set at each sampled belief reproduces the max.
  for (std::size_t i = 0; i < beliefs.size(); ++i)
    CHECK(value_of_set(res.alphas, beliefs[i]) == doctest::Approx(res.values[i]).epsilon(1e-12));
}

TEST_CASE("point-based values never exceed exact values at the sampled beliefs") {
  const StochasticGame game = oracles::make_toy_game(81);
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = fdm_particles(model, 4, 82);
  const LikelihoodTable ltab = build_likelihood_table(model, particles);
  std::vector<SampledBelief> beliefs;
  for (const auto& psi : count_grid(2, 2, 1)) beliefs.push_back(make_sampled_belief(model, particles, psi));

  std::vector<AlphaSet> exact(2), pb(2);
  for (auto* sets : {&exact, &pb})
    for (auto& set : *sets) {
      AlphaFunction zero;
      zero.evals.assign(4, 0.0);
      set.push_back(zero);
    }
  for (int k = 1; k <= 3; ++k) {
    std::vector<AlphaSet> next_exact(2), next_pb(2);
    for (int s = 0; s < 2; ++s) {
      next_exact[static_cast<std::size_t>(s)] = exact_backup(s, exact, game, ltab);
      prune_alpha_set(next_exact[static_cast<std::size_t>(s)]);
      next_pb[static_cast<std::size_t>(s)] = pb_backup(beliefs, s, pb, game, ltab).alphas;
    }
    exact = std::move(next_exact);
    pb = std::move(next_pb);
    for (int s = 0; s < 2; ++s)
      for (const auto& b : beliefs)
        CHECK(value_of_set(pb[static_cast<std::size_t>(s)], b) <=
              value_of_set(exact[static_cast<std::size_t>(s)], b) + 1e-9);
  }
}

TEST_CASE("projection recovers in-span alphas and solves the scalar case") {
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = fdm_particles(model, 64, 91);
  // Basis functions 1, t0, t0^2, t1, t1^2 over the two states' first-action
  // probabilities are linearly independent, so the Gram system is nonsingular.
  // (Counts across the two actions of one state would be dependent through
  // the simplex constraint.)
  std::vector<SampledBelief> beliefs;
  beliefs.push_back(make_sampled_belief(model, particles, SufficientStats(2, 2)));
  for (int s = 0; s < 2; ++s)
    for (int reps = 1; reps <= 2; ++reps) {
      SufficientStats psi(2, 2);
      psi.add(s, 0, static_cast<std::uint32_t>(reps));
      beliefs.push_back(make_sampled_belief(model, particles, psi));
    }
  const BeliefBasis basis = build_belief_basis(beliefs);

  Rng rng(92);
  std::vector<double> c(beliefs.size());
  for (double& x : c) x = rng.uniform(-2.0, 2.0);
  AlphaFunction alpha;
  alpha.evals.assign(static_cast<std::size_t>(particles.n()), 0.0);
  for (std::size_t i = 0; i < beliefs.size(); ++i)
    for (int j = 0; j < particles.n(); ++j)
      alpha.evals[static_cast<std::size_t>(j)] += c[i] * beliefs[i].phi[static_cast<std::size_t>(j)];
  const std::vector<double> solved = project_alpha(alpha, beliefs, basis);
  CHECK(alpha.projection_residual <= 1e-9);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(solved[i] == doctest::Approx(c[i]).epsilon(1e-5));

  // |B| = 1: the coefficient is exactly <alpha, prior>.
  std::vector<SampledBelief> prior_only{make_sampled_belief(model, particles, SufficientStats(2, 2))};
  const BeliefBasis scalar_basis = build_belief_basis(prior_only);
  AlphaFunction a2;
  for (int j = 0; j < particles.n(); ++j) a2.evals.push_back(rng.uniform(0.0, 1.0));
  const std::vector<double> c2 = project_alpha(a2, prior_only, scalar_basis);
  const double inner = mc_inner(a2.evals, prior_only[0]);
  const double phi_inner = mc_inner(prior_only[0].phi, prior_only[0]);
  CHECK(c2[0] == doctest::Approx(inner / phi_inner).epsilon(1e-9));
}

TEST_CASE("solved projection beats 1000 random coefficient probes") {
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = fdm_particles(model, 32, 93);
  std::vector<SampledBelief> beliefs;
  for (const auto& psi : count_grid(2, 2, 1)) {
    beliefs.push_back(make_sampled_belief(model, particles, psi));
    if (beliefs.size() == 4) break;
  }
  const BeliefBasis basis = build_belief_basis(beliefs);
  Rng rng(94);
  auto j_of = [&](const AlphaFunction& alpha, const std::vector<double>& coeff) {
    double total = 0.0;
    for (std::size_t k = 0; k < beliefs.size(); ++k) {
      double fitted = 0.0;
      for (std::size_t i = 0; i < beliefs.size(); ++i)
        fitted += coeff[i] * basis.inner[i * beliefs.size() + k];
      const double diff = mc_inner(alpha.evals, beliefs[k]) - fitted;
      total += diff * diff;
    }
    return 0.5 * total;
  };
  for (int trial = 0; trial < 20; ++trial) {
    AlphaFunction alpha;
    for (int j = 0; j < particles.n(); ++j) alpha.evals.push_back(rng.uniform(-1.0, 3.0));
    const std::vector<double> solved = project_alpha(alpha, beliefs, basis);
    const double best_j = j_of(alpha, solved);
    for (int probe = 0; probe < 1000; ++probe) {
      std::vector<double> candidate(beliefs.size());
      for (double& x : candidate) x = rng.uniform(-3.0, 3.0);
      CHECK(best_j <= j_of(alpha, candidate) + 1e-12);
    }
    CHECK(std::abs(alpha.projection_residual - best_j) <= 1e-9);
  }
}

TEST_CASE("gram matrix is symmetric positive semidefinite") {
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = fdm_particles(model, 64, 95);
  std::vector<SampledBelief> beliefs;
  for (const auto& psi : count_grid(2, 2, 1)) beliefs.push_back(make_sampled_belief(model, particles, psi));
  const BeliefBasis basis = build_belief_basis(beliefs);
  const int B = basis.size;
  Rng rng(96);
  for (int j = 0; j < B; ++j)
    for (int i = 0; i < B; ++i)
      CHECK(basis.gram[static_cast<std::size_t>(j) * B + i] ==
            doctest::Approx(basis.gram[static_cast<std::size_t>(i) * B + j]).epsilon(1e-9));
  for (int probe = 0; probe < 200; ++probe) {
    std::vector<double> x(static_cast<std::size_t>(B));
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    double quad = 0.0;
    for (int j = 0; j < B; ++j)
      for (int i = 0; i < B; ++i)
        quad += x[static_cast<std::size_t>(j)] * basis.gram[static_cast<std::size_t>(j) * B + i] *
                x[static_cast<std::size_t>(i)];
    CHECK(quad >= -1e-9);
  }
}

TEST_CASE("plan with zero horizon values everything at zero") {
  Environment env = build_chain_world();
  const ParticleSet particles = sample_particles(*env.model, 32, 7);
  PlanConfig pc;
  pc.horizon = 0;
  pc.beliefs_per_state = 4;
  pc.seed = 7;
  const PolicyBundle bundle = plan(env.game, *env.model, particles, pc);
  CHECK(bundle.sweeps_done == 0);
  SufficientStats psi(env.game.num_states, env.game.num_opponent_actions);
  const ActionSelection sel = select_action(bundle, *env.model, psi, 0);
  for (double s : sel.scores) CHECK(s == 0.0);
}

TEST_CASE("exact-mode sup-change ratios contract at rate phi") {
  const StochasticGame game = oracles::make_dominant_toy();
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = fdm_particles(model, 4, 98);
  PlanConfig pc;
  pc.mode = PolicyBundle::Variant::kExact;
  pc.horizon = 8;
  pc.beliefs_per_state = 10;
  pc.sample_depth = 6;
  pc.seed = 99;
  pc.sup_change_tol = 0.0;
  const PolicyBundle bundle = plan(game, model, particles, pc);
  REQUIRE(bundle.sweeps_done == 8);
  CHECK(bundle.sup_changes[0] > 1.0);  // values genuinely depend on lambda
  for (std::size_t k = 1; k < bundle.sup_changes.size(); ++k)
    CHECK(bundle.sup_changes[k] <= game.discount * bundle.sup_changes[k - 1] + 1e-9);
}

TEST_CASE("per-belief values are monotone when rewards are nonnegative") {
  Environment env = build_chain_world();  // rewards in {0, 2, 10}
  const ParticleSet particles = sample_particles(*env.model, 64, 11);
  const LikelihoodTable ltab = build_likelihood_table(*env.model, particles);
  Rng rng(12);
  const SampledBeliefSet beliefs =
      sample_reachable_beliefs(env.game, *env.model, particles, 8, 10, rng);
  const int S = env.game.num_states;
  std::vector<AlphaSet> gamma(static_cast<std::size_t>(S));
  for (auto& set : gamma) {
    AlphaFunction zero;
    zero.evals.assign(64, 0.0);
    set.push_back(zero);
  }
  std::vector<std::vector<double>> values(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s)
    values[static_cast<std::size_t>(s)].assign(beliefs.per_state[static_cast<std::size_t>(s)].size(), 0.0);
  for (int k = 1; k <= 25; ++k) {
    std::vector<AlphaSet> next(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) {
      auto res = pb_backup(beliefs.per_state[static_cast<std::size_t>(s)], s, gamma, env.game, ltab,
                           &gamma[static_cast<std::size_t>(s)]);
      for (std::size_t i = 0; i < res.values.size(); ++i) {
        CHECK(res.values[i] >= values[static_cast<std::size_t>(s)][i] - 1e-9);
        values[static_cast<std::size_t>(s)][i] = res.values[i];
      }
      next[static_cast<std::size_t>(s)] = std::move(res.alphas);
    }
    gamma = std::move(next);
  }
}

TEST_CASE("chain-world value at the prior sits inside the per-particle oracle bracket") {
  Environment env = build_chain_world();
  const ParticleSet particles = sample_particles(*env.model, 200, 13);
  PlanConfig pc;
  pc.horizon = 60;
  pc.beliefs_per_state = 16;
  pc.sample_depth = 10;
  pc.seed = 13;
  const PolicyBundle bundle = plan(env.game, *env.model, particles, pc);
  // Oracle: value iteration at each particle's parameters brackets the Bayes
  // value at the prior.
  double lo = 1e300, hi = -1e300;
  for (int j = 0; j < particles.n(); ++j) {
    const QTable q = value_iteration(env.game, *env.model,
                                     particles.particles[static_cast<std::size_t>(j)], 1e-9);
    lo = std::min(lo, q.value(env.game.initial_state));
    hi = std::max(hi, q.value(env.game.initial_state));
  }
  const auto& sp = bundle.policy[static_cast<std::size_t>(env.game.initial_state)];
  const auto& prior = bundle.beliefs.per_state[static_cast<std::size_t>(env.game.initial_state)][0];
  double value = -1e300;
  const int n = particles.n();
  for (int a = 0; a < sp.num_alphas(); ++a) {
    std::span<const double> evals{sp.evals.data() + static_cast<std::size_t>(a) * n,
                                  static_cast<std::size_t>(n)};
    value = std::max(value, mc_inner(evals, prior));
  }
  CHECK(value >= lo - 1e-6);
  CHECK(value <= hi + 1e-6);
}

TEST_CASE("select_action: prior argmax matches the planning-time winner") {
  Environment env = build_chain_world();
  const ParticleSet particles = sample_particles(*env.model, 128, 14);
  PlanConfig pc;
  pc.horizon = 40;
  pc.beliefs_per_state = 8;
  pc.seed = 14;
  const PolicyBundle bundle = plan(env.game, *env.model, particles, pc);
  SufficientStats psi(env.game.num_states, env.game.num_opponent_actions);
  for (int s = 0; s < env.game.num_states; ++s) {
    const ActionSelection sel = select_action(bundle, *env.model, psi, s);
    CHECK(sel.action == bundle.policy[static_cast<std::size_t>(s)].prior_action);
    CHECK_FALSE(sel.degenerate);
  }
}

TEST_CASE("select_action on a single-action game always plays it") {
  StochasticGame game;
  game.num_states = 1;
  game.num_agent_actions = 1;
  game.num_opponent_actions = 2;
  game.discount = 0.9;
  game.allocate_tables();
  game.reward_ref(0, 0, 0) = 1.0;
  for (int v = 0; v < 2; ++v) game.transition_ref(0, 0, v, 0) = 1.0;
  game.validate();
  FdmModel model(1, 2, 0.5);
  const ParticleSet particles = fdm_particles(model, 16, 15);
  PlanConfig pc;
  pc.horizon = 5;
  pc.beliefs_per_state = 4;
  pc.seed = 15;
  const PolicyBundle bundle = plan(game, model, particles, pc);
  SufficientStats psi(1, 2);
  psi.add(0, 1, 3);
  CHECK(select_action(bundle, model, psi, 0).action == 0);
}

TEST_CASE("select_action scores at the prior equal mc_inner of the reconstructed alphas") {
  Environment env = build_chain_world();
  const ParticleSet particles = sample_particles(*env.model, 100, 16);
  PlanConfig pc;
  pc.horizon = 30;
  pc.beliefs_per_state = 8;
  pc.seed = 16;
  const PolicyBundle bundle = plan(env.game, *env.model, particles, pc);
  SufficientStats psi(env.game.num_states, env.game.num_opponent_actions);
  const int n = particles.n();
  for (int s = 0; s < env.game.num_states; ++s) {
    const ActionSelection sel = select_action(bundle, *env.model, psi, s);
    const auto& sp = bundle.policy[static_cast<std::size_t>(s)];
    const auto& prior = bundle.beliefs.per_state[static_cast<std::size_t>(s)][0];
    for (int a = 0; a < sp.num_alphas(); ++a) {
      std::span<const double> reconstructed{sp.z_table.data() + static_cast<std::size_t>(a) * n,
                                            static_cast<std::size_t>(n)};
      CHECK(sel.scores[static_cast<std::size_t>(a)] ==
            doctest::Approx(mc_inner(reconstructed, prior)).epsilon(1e-9));
    }
  }
}

TEST_CASE("degenerate online belief falls back to the prior weights") {
  FdmModel model(1, 2, 0.5);
  StochasticGame game;
  game.num_states = 1;
  game.num_agent_actions = 2;
  game.num_opponent_actions = 2;
  game.discount = 0.9;
  game.allocate_tables();
  game.reward_ref(0, 0, 0) = 1.0;
  for (int u = 0; u < 2; ++u)
    for (int v = 0; v < 2; ++v) game.transition_ref(0, u, v, 0) = 1.0;
  game.validate();
  const ParticleSet particles = fdm_particles(model, 8, 17);
  PlanConfig pc;
  pc.horizon = 6;
  pc.beliefs_per_state = 3;
  pc.seed = 17;
  const PolicyBundle bundle = plan(game, model, particles, pc);
  std::vector<double> log_phi(8, -std::numeric_limits<double>::infinity());
  const ActionSelection degenerate = select_action_logphi(bundle, log_phi, 0);
  CHECK(degenerate.degenerate);
  SufficientStats psi(1, 2);
  const ActionSelection at_prior = select_action(bundle, model, psi, 0);
  CHECK(degenerate.action == at_prior.action);
}

TEST_CASE("identical seeds give bit-identical bundles") {
  Environment env = build_chain_world();
  const ParticleSet particles = sample_particles(*env.model, 64, 18);
  PlanConfig pc;
  pc.horizon = 20;
  pc.beliefs_per_state = 8;
  pc.seed = 18;
  const PolicyBundle a = plan(env.game, *env.model, particles, pc);
  const PolicyBundle b = plan(env.game, *env.model, particles, pc);
  std::ostringstream sa, sb;
  write_bundle(a, sa);
  write_bundle(b, sb);
  CHECK(sa.str() == sb.str());
}

TEST_CASE("sampled beliefs replay as realizable count vectors") {
  Environment env = build_chain_world();
  const ParticleSet particles = sample_particles(*env.model, 32, 19);
  Rng rng(20);
  const SampledBeliefSet beliefs =
      sample_reachable_beliefs(env.game, *env.model, particles, 16, 10, rng);
  REQUIRE(beliefs.per_state.size() == 5);
  for (int s = 0; s < 5; ++s) {
    const auto& bucket = beliefs.per_state[static_cast<std::size_t>(s)];
    REQUIRE(!bucket.empty());
    CHECK(bucket[0].counts.total() == 0);  // prior first
    CHECK(bucket.size() <= 16);
    for (const auto& b : bucket) {
      // Histories have length <= depth, so total counts do too.
      CHECK(b.counts.total() <= 10);
      // Chain dynamics: counts can only accumulate at states reachable from
      // the start, i.e. all of them, but each visit increments exactly once;
      // per-state totals are bounded by the horizon.
      CHECK(b.phi_sum > 0.0);
    }
  }
  // per_state_count = 1 keeps only the prior.
  Rng rng2(21);
  const SampledBeliefSet only_prior =
      sample_reachable_beliefs(env.game, *env.model, particles, 1, 10, rng2);
  for (const auto& bucket : only_prior.per_state) {
    CHECK(bucket.size() == 1);
    CHECK(bucket[0].counts.total() == 0);
  }
}

TEST_SUITE_END();
