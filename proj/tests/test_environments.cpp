#include <doctest.h>

#include <cmath>

#include "ibrl/environments.hpp"

using namespace ibrl;

TEST_SUITE_BEGIN("environments");

TEST_CASE("chain rewards follow the coordination scheme") {
  const StochasticGame g = build_chain_world().game;
  CHECK(g.num_states == 5);
  CHECK(g.discount == 0.75);
  CHECK(g.reward(4, 0, 0) == 10.0);  // coordinating on a in the last state
  CHECK(g.reward(0, 1, 1) == 0.0);   // b in the first state pays nothing
  CHECK(g.reward(2, 1, 1) == 2.0);
  CHECK(g.reward(2, 0, 1) == 0.0);  // miscoordination
  g.validate();
}

TEST_CASE("ipd has five information states and the prisoner payoffs") {
  const Environment env = build_ipd();
  const StochasticGame& g = env.game;
  CHECK(g.num_states == 5);
  CHECK(g.discount == 0.95);
  // Payoffs are shared by every information state (C = 0, B = 1).
  for (int s = 0; s < 5; ++s) {
    CHECK(g.reward(s, 0, 0) == 3.0);
    CHECK(g.reward(s, 0, 1) == 0.0);
    CHECK(g.reward(s, 1, 0) == 5.0);
    CHECK(g.reward(s, 1, 1) == 1.0);
  }
  // Transition: every state maps (u, v) deterministically to the same
  // successor, the information state remembering (u, v).
  for (int u = 0; u < 2; ++u)
    for (int v = 0; v < 2; ++v) {
      int target = -1;
      for (int s2 = 0; s2 < 5; ++s2)
        if (g.transition(0, u, v, s2) == 1.0) target = s2;
      REQUIRE(target >= 0);
      for (int s = 1; s < 5; ++s) CHECK(g.transition(s, u, v, target) == 1.0);
    }
  g.validate();
}

TEST_CASE("gipps discretization: sigma 0 collapses to the rounded level") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    GippsParams p;
    p.accel = rng.uniform(0.5, 3.0);
    p.decel_mag = rng.uniform(0.5, 3.0);
    p.tau = rng.uniform(0.5, 2.0);
    p.sigma = 0.0;
    const int sb = rng.uniform_int(5);
    const double dist = rng.uniform(0.0, 30.0);
    const auto d = gipps_next_speed_dist(sb, dist, p);
    int ones = 0;
    for (double x : d) ones += x == 1.0;
    CHECK(ones == 1);
  }
}

TEST_CASE("gipps distribution is a simplex over the five levels") {
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    GippsParams p;
    p.accel = rng.uniform(0.5, 3.0);
    p.decel_mag = rng.uniform(0.5, 3.0);
    p.tau = rng.uniform(0.5, 2.0);
    p.sigma = rng.uniform(0.0, 1.0);
    const auto d = gipps_next_speed_dist(rng.uniform_int(5), rng.uniform(0.0, 40.0), p);
    double sum = 0.0;
    for (double x : d) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gipps v_safe grows with braking headroom when headway is ample") {
  // With distance >= tau * S_B the free-speed numerator is positive, so a
  // larger braking magnitude (smaller denominator) cannot lower v_safe.
  for (double dist : {10.0, 15.0, 20.0, 30.0})
    for (int sb = 0; sb < 5; ++sb)
      for (double tau : {0.5, 1.0, 2.0})
        for (double sigma : {0.0, 0.5}) {
          double prev_vdes_mass = -1.0;
          double prev_mean = -1.0;
          for (double d : {0.5, 1.0, 1.75, 2.5, 3.0}) {
            const auto out = gipps_next_speed_dist(sb, dist, GippsParams{1.5, d, tau, sigma});
            double mean = 0.0;
            for (int k = 0; k < 5; ++k) mean += k * out[static_cast<std::size_t>(k)];
            if (prev_mean >= 0.0) CHECK(mean >= prev_mean - 1e-9);
            prev_mean = mean;
            (void)prev_vdes_mass;
          }
        }
}

TEST_CASE("intersection dimensions, discount, and reward constants") {
  const Environment full = build_intersection(false);
  CHECK(full.game.num_states == 900);
  CHECK(full.game.discount == 0.99);
  const Environment reduced = build_intersection(true);
  CHECK(reduced.game.num_states == 400);
  reduced.game.validate();

  IntersectionLayout layout;
  layout.cells = 4;
  layout.conflict = 2;
  const StochasticGame& g = reduced.game;
  // Plain step with both vehicles far from any event: expected reward -1.
  const int quiet = layout.encode(0, 0, 2, 2);
  CHECK(g.reward(quiet, 1, 2) == doctest::Approx(-1.0));
  // Crossing: A on the last cell at top speed advances with probability 0.8.
  const int about_to_cross = layout.encode(3, 0, 4, 2);
  CHECK(g.reward(about_to_cross, 1, 2) == doctest::Approx(-1.0 + 50.0 * 0.8));
  // Collision: A one cell before the conflict at top speed, B parked on it.
  const int dangerous = layout.encode(1, 2, 4, 0);
  CHECK(g.reward(dangerous, 1, 0) == doctest::Approx(-1.0 - 250.0 * 0.8));
}

TEST_CASE("advance probability is speed/5") {
  IntersectionLayout layout;
  layout.cells = 4;
  layout.conflict = 2;
  const StochasticGame g = build_intersection(true).game;
  // S_A = 4: P(A advances) = 1/t with t = 5/4.
  const int s = layout.encode(0, 0, 4, 0);
  double p_adv = 0.0;
  for (int s2 = 0; s2 < g.num_states; ++s2) {
    int pa, pb, sa, sb;
    layout.decode(s2, pa, pb, sa, sb);
    if (pa == 1) p_adv += g.transition(s, 1, 0, s2);
  }
  CHECK(p_adv == doctest::Approx(0.8));
  // S_A = 0: never advances.
  const int stopped = layout.encode(0, 0, 0, 0);
  double p_stay = 0.0;
  for (int s2 = 0; s2 < g.num_states; ++s2) {
    int pa, pb, sa, sb;
    layout.decode(s2, pa, pb, sa, sb);
    if (pa == 0) p_stay += g.transition(stopped, 1, 0, s2);
  }
  CHECK(p_stay == doctest::Approx(1.0));
}

TEST_CASE("collision states are absorbing and silent") {
  IntersectionLayout layout;
  layout.cells = 4;
  layout.conflict = 2;
  const StochasticGame g = build_intersection(true).game;
  const int crash = layout.encode(2, 2, 1, 3);
  for (int u = 0; u < 3; ++u)
    for (int v = 0; v < 5; ++v) {
      CHECK(g.transition(crash, u, v, crash) == 1.0);
      CHECK(g.reward(crash, u, v) == 0.0);
    }
}

TEST_CASE("step classifier tags crossings and collisions") {
  const Environment env = build_intersection(true);
  IntersectionLayout layout;
  layout.cells = 4;
  layout.conflict = 2;
  const int initial = env.game.initial_state;
  CHECK(env.classify_step(layout.encode(3, 1, 4, 2), 1, 2, initial) == StepEvent::kCrossing);
  CHECK(env.classify_step(layout.encode(1, 2, 4, 0), 1, 0, layout.encode(2, 2, 4, 0)) ==
        StepEvent::kCollision);
  CHECK(env.classify_step(initial, 1, 2, layout.encode(0, 1, 2, 2)) == StepEvent::kNone);
  CHECK(env.realized_reward(layout.encode(3, 1, 4, 2), 1, 2, initial) == 49.0);
  CHECK(env.realized_reward(layout.encode(1, 2, 4, 0), 1, 0, layout.encode(2, 2, 4, 0)) == -251.0);
}

TEST_CASE("every environment passes the simplex invariant") {
  build_chain_world().game.validate();
  build_ipd().game.validate();
  build_intersection(true).game.validate();
  build_intersection(false).game.validate();
}

TEST_SUITE_END();
