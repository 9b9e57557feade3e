#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ibrl/errors.hpp"

namespace ibrl {

struct HistoryTriple {
  int state;
  int agent_action;
  int opponent_action;
  bool operator==(const HistoryTriple&) const = default;
};

/// Physical state plus the window of the most recent interaction triples.
/// With history_depth 0 this is just the state.
struct InformationState {
  int current_state = 0;
  std::vector<HistoryTriple> history;
  bool operator==(const InformationState&) const = default;
};

/// Two-player discounted stochastic game with dense reward and transition
/// tables. Immutable after construction; safe for concurrent reads.
struct StochasticGame {
  std::string name;
  int num_states = 0;
  int num_agent_actions = 0;
  int num_opponent_actions = 0;
  double discount = 0.95;
  int history_depth = 0;
  int initial_state = 0;
  std::vector<double> reward_table;      // [s][u][v]
  std::vector<double> transition_table;  // [s][u][v][s']

  double reward(int s, int u, int v) const {
    return reward_table[static_cast<std::size_t>((s * num_agent_actions + u) * num_opponent_actions + v)];
  }
  double& reward_ref(int s, int u, int v) {
    return reward_table[static_cast<std::size_t>((s * num_agent_actions + u) * num_opponent_actions + v)];
  }
  double transition(int s, int u, int v, int s2) const {
    return transition_table[static_cast<std::size_t>(
        ((s * num_agent_actions + u) * num_opponent_actions + v) * num_states + s2)];
  }
  double& transition_ref(int s, int u, int v, int s2) {
    return transition_table[static_cast<std::size_t>(
        ((s * num_agent_actions + u) * num_opponent_actions + v) * num_states + s2)];
  }

  void allocate_tables() {
    reward_table.assign(static_cast<std::size_t>(num_states) * num_agent_actions * num_opponent_actions, 0.0);
    transition_table.assign(
        static_cast<std::size_t>(num_states) * num_agent_actions * num_opponent_actions * num_states, 0.0);
  }

  void check_state(int s) const {
    if (s < 0 || s >= num_states) throw UsageError("state index out of range: " + std::to_string(s));
  }
  void check_agent_action(int u) const {
    if (u < 0 || u >= num_agent_actions) throw UsageError("agent action out of range: " + std::to_string(u));
  }
  void check_opponent_action(int v) const {
    if (v < 0 || v >= num_opponent_actions) throw UsageError("opponent action out of range: " + std::to_string(v));
  }

  /// Verifies discount range and that every transition row is a simplex.
  void validate(double tol = 1e-12) const;

  /// FNV-1a over dimensions, discount and both tables; identifies the game
  /// a PolicyBundle was planned for.
  std::uint64_t hash() const;

  /// Distinct successor states over all (u, v), ascending.
  std::vector<int> successors(int s) const;
};

/// The stored simplex row p_s^{uv}(.); throws UsageError on bad indices.
std::span<const double> next_state_dist(const StochasticGame& game, int s, int u, int v);

/// Slides (s, u, v) into the history window and moves to s2, keeping at most
/// history_depth triples.
InformationState push_history(const StochasticGame& game, const InformationState& is,
                              int s2, int u, int v);

/// Result of eagerly enumerating reachable information states: a plain game
/// whose states are the information states, so planners never see histories.
struct InfoStateSpace {
  StochasticGame expanded;
  std::vector<InformationState> states;   // index -> information state
  std::vector<int> physical_state;        // index -> underlying state
  int index_of(const InformationState& is) const;  // -1 if absent
};

InfoStateSpace expand_information_states(const StochasticGame& base);

}  // namespace ibrl
