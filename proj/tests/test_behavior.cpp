#include <doctest.h>

#include <cmath>

#include "ibrl/behavior.hpp"
#include "ibrl/environments.hpp"
#include "oracles.hpp"

using namespace ibrl;

TEST_SUITE_BEGIN("behavior");

TEST_CASE("fdm likelihood returns the stored multinomial entry") {
  FdmModel model(2, 3, 1.0);
  BehaviorParams theta{{0.2, 0.3, 0.5, 0.1, 0.6, 0.3}};
  CHECK(model.likelihood(theta, 0, 1) == 0.3);
  CHECK(model.likelihood(theta, 1, 2) == 0.3);
  CHECK_THROWS_AS(model.likelihood(BehaviorParams{{2.0, -1.0, 0.0, 0.1, 0.6, 0.3}}, 0, 0),
                  DomainError);
}

TEST_CASE("likelihood rows sum to one for random parameters and states") {
  Rng rng(101);
  FdmModel fdm(4, 3, 0.5);
  for (int i = 0; i < 1000; ++i) {
    const BehaviorParams lambda = fdm.sample_prior(rng);
    const int s = rng.uniform_int(4);
    double sum = 0.0;
    for (int v = 0; v < 3; ++v) {
      const double p = fdm.likelihood(lambda, s, v);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
  const GippsModel gipps{IntersectionLayout{}};
  for (int i = 0; i < 1000; ++i) {
    const BehaviorParams lambda = gipps.sample_prior(rng);
    const int s = rng.uniform_int(gipps.num_states());
    double sum = 0.0;
    for (int v = 0; v < 5; ++v) sum += gipps.likelihood(lambda, s, v);
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("gipps hand-computed point mass") {
  // S_B=2, distance=10, a=1, |d|=2, tau=1, sigma=0:
  //   v_safe = 2 + (10 - 2)/(2/2 + 1) = 6, v_des = min(4, 3, 6) = 3.
  const auto dist = gipps_next_speed_dist(2, 10.0, GippsParams{1.0, 2.0, 1.0, 0.0});
  CHECK(dist[3] == 1.0);
  for (int k : {0, 1, 2, 4}) CHECK(dist[static_cast<std::size_t>(k)] == 0.0);
}

TEST_CASE("update_counts increments exactly one cell") {
  SufficientStats psi(3, 2);
  const SufficientStats one = update_counts(psi, 1, 1);
  CHECK(one.count(1, 1) == 1);
  CHECK(one.total() == 1);
  CHECK(psi.count(1, 1) == 0);  // input untouched
  const SufficientStats two = update_counts(one, 1, 1);
  CHECK(two.count(1, 1) == 2);
}

TEST_CASE("counts after a trace equal its histogram") {
  Rng rng(7);
  const int S = 4, V = 3, steps = 200;
  SufficientStats psi(S, V);
  std::vector<int> histogram(static_cast<std::size_t>(S * V), 0);
  for (int t = 0; t < steps; ++t) {
    const int s = rng.uniform_int(S);
    const int v = rng.uniform_int(V);
    psi = update_counts(psi, s, v);
    ++histogram[static_cast<std::size_t>(s * V + v)];
  }
  for (int s = 0; s < S; ++s)
    for (int v = 0; v < V; ++v)
      CHECK(psi.count(s, v) == static_cast<std::uint32_t>(histogram[static_cast<std::size_t>(s * V + v)]));
  CHECK(psi.total() == static_cast<std::uint64_t>(steps));
}

TEST_CASE("phi_eval basics and the direct product oracle") {
  FdmModel model(2, 2, 0.5);
  BehaviorParams theta{{0.25, 0.75, 0.6, 0.4}};
  SufficientStats psi(2, 2);
  CHECK(phi_eval(model, psi, theta) == 1.0);  // empty product
  psi.add(0, 1);
  CHECK(phi_eval(model, psi, theta) == doctest::Approx(0.75).epsilon(1e-12));
  SufficientStats psi2(2, 2);
  psi2.add(1, 0, 2);
  psi2.add(1, 1, 1);
  CHECK(phi_eval(model, psi2, theta) == doctest::Approx(0.6 * 0.6 * 0.4).epsilon(1e-12));
}

TEST_CASE("phi is additive over counts in log space") {
  Rng rng(13);
  FdmModel model(3, 2, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    const BehaviorParams lambda = model.sample_prior(rng);
    SufficientStats a(3, 2), b(3, 2);
    for (int i = 0; i < 10; ++i) {
      a.add(rng.uniform_int(3), rng.uniform_int(2));
      b.add(rng.uniform_int(3), rng.uniform_int(2));
    }
    const double lhs = log_phi(model, a + b, lambda);
    const double rhs = log_phi(model, a, lambda) + log_phi(model, b, lambda);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("phi_eval is zero when an observed pair has zero likelihood") {
  FdmModel model(1, 2, 0.5);
  BehaviorParams theta{{1.0, 0.0}};
  SufficientStats psi(1, 2);
  psi.add(0, 1);
  CHECK(phi_eval(model, psi, theta) == 0.0);
}

TEST_CASE("posterior weights: uniform at the prior, point mass on one particle") {
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = sample_particles(model, 64, 5);
  SufficientStats psi(2, 2);
  const std::vector<double> w = posterior_weights(model, psi, particles);
  for (double x : w) CHECK(x == doctest::Approx(1.0 / 64).epsilon(1e-12));
  ParticleSet single;
  single.particles.push_back(particles.particles[0]);
  psi.add(0, 0);
  const std::vector<double> w1 = posterior_weights(model, psi, single);
  CHECK(w1.size() == 1);
  CHECK(w1[0] == 1.0);
}

TEST_CASE("posterior weights sum to one and are scale invariant") {
  Rng rng(17);
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = sample_particles(model, 256, 6);
  SufficientStats psi(2, 2);
  for (int i = 0; i < 12; ++i) psi.add(rng.uniform_int(2), rng.uniform_int(2));
  const std::vector<double> w = posterior_weights(model, psi, particles);
  double sum = 0.0;
  for (double x : w) sum += x;
  CHECK(std::abs(sum - 1.0) <= 1e-12);
  // Rescaling Phi by a positive constant (an offset in log space) leaves the
  // self-normalized weights unchanged.
  const std::vector<double> logs = log_phi_batch(model, psi, particles);
  for (double offset : {-7.0, 3.5}) {
    std::vector<double> scaled(logs.size());
    double total = 0.0;
    for (std::size_t j = 0; j < logs.size(); ++j) {
      scaled[j] = std::exp(logs[j] + offset - (logs[0] + offset));
      total += scaled[j];
    }
    for (std::size_t j = 0; j < logs.size(); ++j)
      CHECK(scaled[j] / total == doctest::Approx(w[j]).epsilon(1e-9));
  }
}

TEST_CASE("degenerate posterior raises") {
  FdmModel model(1, 2, 0.5);
  ParticleSet particles;
  particles.particles.push_back(BehaviorParams{{1.0, 0.0}});
  particles.particles.push_back(BehaviorParams{{1.0, 0.0}});
  SufficientStats psi(1, 2);
  psi.add(0, 1);  // impossible under every particle
  CHECK_THROWS_AS(posterior_weights(model, psi, particles), DegenerateBeliefError);
}

TEST_CASE("particle posterior mean matches the Dirichlet closed form") {
  // Monte Carlo check at n = 1e5 within 3 standard errors.
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = sample_particles(model, 100000, 21);
  SufficientStats psi(2, 2);
  psi.add(0, 0, 3);
  psi.add(0, 1, 1);
  psi.add(1, 1, 2);
  const std::vector<double> w = posterior_weights(model, psi, particles);
  for (int s = 0; s < 2; ++s)
    for (int v = 0; v < 2; ++v) {
      double estimate = 0.0;
      for (int j = 0; j < particles.n(); ++j)
        estimate += w[static_cast<std::size_t>(j)] *
                    particles.particles[static_cast<std::size_t>(j)].values[static_cast<std::size_t>(s * 2 + v)];
      double variance = 0.0;
      for (int j = 0; j < particles.n(); ++j) {
        const double g = particles.particles[static_cast<std::size_t>(j)].values[static_cast<std::size_t>(s * 2 + v)];
        variance += w[static_cast<std::size_t>(j)] * w[static_cast<std::size_t>(j)] * (g - estimate) * (g - estimate);
      }
      const double se = std::sqrt(variance);
      const double expected = oracles::dirichlet_posterior_mean(model, psi, s, v);
      CHECK(std::abs(estimate - expected) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("particle estimate of the marginal likelihood matches the conjugate closed form") {
  FdmModel model(2, 2, 0.5);
  const ParticleSet particles = sample_particles(model, 100000, 22);
  SufficientStats psi(2, 2);
  psi.add(0, 0, 2);
  psi.add(1, 0, 1);
  psi.add(1, 1, 3);
  // <Phi, b> estimated as the plain prior mean of Phi(lambda_j).
  double mean = 0.0;
  std::vector<double> phis(static_cast<std::size_t>(particles.n()));
  for (int j = 0; j < particles.n(); ++j) {
    phis[static_cast<std::size_t>(j)] = phi_eval(model, psi, particles.particles[static_cast<std::size_t>(j)]);
    mean += phis[static_cast<std::size_t>(j)];
  }
  mean /= particles.n();
  double var = 0.0;
  for (double p : phis) var += (p - mean) * (p - mean);
  var /= (static_cast<double>(particles.n()) - 1.0) * particles.n();
  const double expected = oracles::dirichlet_marginal_likelihood(model, psi);
  CHECK(std::abs(mean - expected) <= 3.0 * std::sqrt(var));
}

TEST_CASE("prior means: fdm is the normalized alpha row, gipps the range midpoints") {
  FdmModel model(2, 2, std::vector<double>{1.0, 3.0, 2.0, 2.0});
  const BehaviorParams mean = model.prior_mean();
  CHECK(mean.values[0] == doctest::Approx(0.25));
  CHECK(mean.values[1] == doctest::Approx(0.75));
  const GippsModel gipps{IntersectionLayout{}};
  const GippsParams gp = GippsParams::from_behavior(gipps.prior_mean());
  CHECK(gp.accel == doctest::Approx(1.75));
  CHECK(gp.decel_mag == doctest::Approx(1.75));
  CHECK(gp.tau == doctest::Approx(1.25));
  CHECK(gp.sigma == doctest::Approx(0.5));
}

TEST_SUITE_END();
