#include "ibrl/game.hpp"

#include <cmath>
#include <cstring>
#include <deque>

namespace ibrl {

void StochasticGame::validate(double tol) const {
  if (num_states <= 0 || num_agent_actions <= 0 || num_opponent_actions <= 0)
    throw UsageError("game dimensions must be positive");
  if (!(discount > 0.0 && discount < 1.0))
    throw UsageError("discount must lie strictly inside (0,1)");
  if (history_depth < 0) throw UsageError("history depth must be >= 0");
  if (initial_state < 0 || initial_state >= num_states)
    throw UsageError("initial state out of range");
  const std::size_t want_r =
      static_cast<std::size_t>(num_states) * num_agent_actions * num_opponent_actions;
  if (reward_table.size() != want_r || transition_table.size() != want_r * num_states)
    throw UsageError("reward/transition tables not fully populated");
  for (int s = 0; s < num_states; ++s)
    for (int u = 0; u < num_agent_actions; ++u)
      for (int v = 0; v < num_opponent_actions; ++v) {
        double sum = 0.0;
        for (int s2 = 0; s2 < num_states; ++s2) {
          const double p = transition(s, u, v, s2);
          if (p < 0.0) throw UsageError("negative transition probability");
          sum += p;
        }
        if (std::abs(sum - 1.0) > tol)
          throw UsageError("transition row does not sum to 1 at state " + std::to_string(s));
      }
}

std::uint64_t StochasticGame::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_bytes = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  auto mix_i = [&](std::int64_t x) { mix_bytes(&x, sizeof x); };
  mix_i(num_states);
  mix_i(num_agent_actions);
  mix_i(num_opponent_actions);
  mix_i(history_depth);
  mix_i(initial_state);
  mix_bytes(&discount, sizeof discount);
  mix_bytes(reward_table.data(), reward_table.size() * sizeof(double));
  mix_bytes(transition_table.data(), transition_table.size() * sizeof(double));
  return h;
}

std::vector<int> StochasticGame::successors(int s) const {
  std::vector<char> seen(static_cast<std::size_t>(num_states), 0);
  for (int u = 0; u < num_agent_actions; ++u)
    for (int v = 0; v < num_opponent_actions; ++v)
      for (int s2 = 0; s2 < num_states; ++s2)
        if (transition(s, u, v, s2) > 0.0) seen[static_cast<std::size_t>(s2)] = 1;
  std::vector<int> out;
  for (int s2 = 0; s2 < num_states; ++s2)
    if (seen[static_cast<std::size_t>(s2)]) out.push_back(s2);
  return out;
}

std::span<const double> next_state_dist(const StochasticGame& game, int s, int u, int v) {
  game.check_state(s);
  game.check_agent_action(u);
  game.check_opponent_action(v);
  const std::size_t off = static_cast<std::size_t>(
      ((s * game.num_agent_actions + u) * game.num_opponent_actions + v) * game.num_states);
  return {game.transition_table.data() + off, static_cast<std::size_t>(game.num_states)};
}

InformationState push_history(const StochasticGame& game, const InformationState& is,
                              int s2, int u, int v) {
  game.check_state(is.current_state);
  game.check_state(s2);
  game.check_agent_action(u);
  game.check_opponent_action(v);
  InformationState out;
  out.current_state = s2;
  if (game.history_depth == 0) return out;
  out.history = is.history;
  out.history.push_back({is.current_state, u, v});
  while (static_cast<int>(out.history.size()) > game.history_depth)
    out.history.erase(out.history.begin());
  return out;
}

int InfoStateSpace::index_of(const InformationState& is) const {
  for (std::size_t i = 0; i < states.size(); ++i)
    if (states[i] == is) return static_cast<int>(i);
  return -1;
}

InfoStateSpace expand_information_states(const StochasticGame& base) {
  base.validate();
  InfoStateSpace out;
  if (base.history_depth == 0) {
    out.expanded = base;
    out.states.resize(static_cast<std::size_t>(base.num_states));
    out.physical_state.resize(static_cast<std::size_t>(base.num_states));
    for (int s = 0; s < base.num_states; ++s) {
      out.states[static_cast<std::size_t>(s)] = InformationState{s, {}};
      out.physical_state[static_cast<std::size_t>(s)] = s;
    }
    return out;
  }

  // BFS over reachable (state, window) pairs from the initial state.
  std::deque<int> frontier;
  out.states.push_back(InformationState{base.initial_state, {}});
  out.physical_state.push_back(base.initial_state);
  frontier.push_back(0);
  while (!frontier.empty()) {
    const int idx = frontier.front();
    frontier.pop_front();
    const InformationState cur = out.states[static_cast<std::size_t>(idx)];
    for (int u = 0; u < base.num_agent_actions; ++u)
      for (int v = 0; v < base.num_opponent_actions; ++v)
        for (int s2 = 0; s2 < base.num_states; ++s2) {
          if (base.transition(cur.current_state, u, v, s2) <= 0.0) continue;
          const InformationState next = push_history(base, cur, s2, u, v);
          if (out.index_of(next) >= 0) continue;
          out.states.push_back(next);
          out.physical_state.push_back(s2);
          frontier.push_back(static_cast<int>(out.states.size()) - 1);
        }
  }

  StochasticGame& g = out.expanded;
  g.name = base.name;
  g.num_states = static_cast<int>(out.states.size());
  g.num_agent_actions = base.num_agent_actions;
  g.num_opponent_actions = base.num_opponent_actions;
  g.discount = base.discount;
  g.history_depth = base.history_depth;
  g.initial_state = 0;
  g.allocate_tables();
  for (int i = 0; i < g.num_states; ++i) {
    const InformationState& cur = out.states[static_cast<std::size_t>(i)];
    const int s = cur.current_state;
    for (int u = 0; u < g.num_agent_actions; ++u)
      for (int v = 0; v < g.num_opponent_actions; ++v) {
        g.reward_ref(i, u, v) = base.reward(s, u, v);
        for (int s2 = 0; s2 < base.num_states; ++s2) {
          const double p = base.transition(s, u, v, s2);
          if (p <= 0.0) continue;
          const int j = out.index_of(push_history(base, cur, s2, u, v));
          g.transition_ref(i, u, v, j) += p;
        }
      }
  }
  g.validate();
  return out;
}

}  // namespace ibrl
