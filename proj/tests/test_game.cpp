#include <doctest.h>

#include "ibrl/environments.hpp"
#include "ibrl/game.hpp"

using namespace ibrl;

TEST_SUITE_BEGIN("game");

TEST_CASE("chain transitions match the coordination rules") {
  const StochasticGame g = build_chain_world().game;
  // States are 0-based; the paper's state 2 is index 1.
  auto dist = next_state_dist(g, 1, 0, 0);  // joint (a, a): forward
  CHECK(dist[2] == 1.0);
  dist = next_state_dist(g, 1, 0, 1);  // miscoordination: stay
  CHECK(dist[1] == 1.0);
  dist = next_state_dist(g, 4, 0, 0);  // forward from the last state loops
  CHECK(dist[0] == 1.0);
  dist = next_state_dist(g, 3, 1, 1);  // coordinated b: back to start
  CHECK(dist[0] == 1.0);
}

TEST_CASE("single-state game has a one-atom simplex") {
  StochasticGame g;
  g.num_states = 1;
  g.num_agent_actions = 2;
  g.num_opponent_actions = 2;
  g.discount = 0.5;
  g.allocate_tables();
  for (int u = 0; u < 2; ++u)
    for (int v = 0; v < 2; ++v) g.transition_ref(0, u, v, 0) = 1.0;
  g.validate();
  CHECK(next_state_dist(g, 0, 1, 1)[0] == 1.0);
}

TEST_CASE("next_state_dist rejects out-of-range indices") {
  const StochasticGame g = build_chain_world().game;
  CHECK_THROWS_AS(next_state_dist(g, 5, 0, 0), UsageError);
  CHECK_THROWS_AS(next_state_dist(g, -1, 0, 0), UsageError);
  CHECK_THROWS_AS(next_state_dist(g, 0, 2, 0), UsageError);
  CHECK_THROWS_AS(next_state_dist(g, 0, 0, 2), UsageError);
}

TEST_CASE("validate rejects broken tables") {
  StochasticGame g = build_chain_world().game;
  g.transition_ref(2, 0, 0, 3) += 0.5;
  CHECK_THROWS_AS(g.validate(), UsageError);
  g = build_chain_world().game;
  g.discount = 1.0;
  CHECK_THROWS_AS(g.validate(), UsageError);
}

TEST_CASE("push_history with depth 0 keeps the plain state") {
  StochasticGame g = build_chain_world().game;  // history_depth = 0
  const InformationState is{2, {}};
  const InformationState out = push_history(g, is, 3, 0, 1);
  CHECK(out.current_state == 3);
  CHECK(out.history.empty());
}

TEST_CASE("push_history keeps a sliding window of depth d") {
  StochasticGame g = build_chain_world().game;
  g.history_depth = 1;
  InformationState is{0, {{4, 1, 1}}};
  InformationState out = push_history(g, is, 1, 0, 1);
  CHECK(out.current_state == 1);
  REQUIRE(out.history.size() == 1);
  CHECK(out.history[0] == HistoryTriple{0, 0, 1});

  g.history_depth = 2;
  is = InformationState{0, {}};
  is = push_history(g, is, 1, 0, 0);
  is = push_history(g, is, 2, 0, 1);
  is = push_history(g, is, 3, 1, 0);  // third push evicts the first triple
  REQUIRE(is.history.size() == 2);
  CHECK(is.history[0] == HistoryTriple{1, 0, 1});
  CHECK(is.history[1] == HistoryTriple{2, 1, 0});
}

TEST_CASE("push_history is deterministic") {
  StochasticGame g = build_chain_world().game;
  g.history_depth = 2;
  const InformationState is{1, {{0, 0, 0}}};
  CHECK(push_history(g, is, 2, 1, 0) == push_history(g, is, 2, 1, 0));
}

TEST_CASE("depth-0 expansion is a bijection onto the states") {
  const StochasticGame g = build_chain_world().game;
  const InfoStateSpace space = expand_information_states(g);
  REQUIRE(space.expanded.num_states == g.num_states);
  for (int s = 0; s < g.num_states; ++s) {
    CHECK(space.physical_state[static_cast<std::size_t>(s)] == s);
    CHECK(space.index_of(InformationState{s, {}}) == s);
  }
}

TEST_CASE("expansion preserves the transition simplex") {
  StochasticGame base;
  base.num_states = 2;
  base.num_agent_actions = 2;
  base.num_opponent_actions = 2;
  base.discount = 0.9;
  base.history_depth = 1;
  base.allocate_tables();
  for (int s = 0; s < 2; ++s)
    for (int u = 0; u < 2; ++u)
      for (int v = 0; v < 2; ++v) {
        base.transition_ref(s, u, v, 0) = 0.25;
        base.transition_ref(s, u, v, 1) = 0.75;
      }
  const InfoStateSpace space = expand_information_states(base);
  space.expanded.validate();
  CHECK(space.expanded.num_states > base.num_states);
}

TEST_SUITE_END();
