#include "ibrl/environments.hpp"

#include <algorithm>
#include <cmath>

namespace ibrl {

GippsParams GippsParams::from_behavior(const BehaviorParams& p) {
  if (p.values.size() != 4) throw DomainError("GippsParams: expected 4 parameters");
  return GippsParams{p.values[0], p.values[1], p.values[2], p.values[3]};
}

BehaviorParams GippsParams::to_behavior() const {
  return BehaviorParams{{accel, decel_mag, tau, sigma}};
}

bool GippsParams::in_range() const {
  return accel >= 0.5 && accel <= 3.0 && decel_mag >= 0.5 && decel_mag <= 3.0 &&
         tau >= 0.5 && tau <= 2.0 && sigma >= 0.0 && sigma <= 1.0;
}

std::array<double, 5> gipps_next_speed_dist(int speed_level, double distance_m,
                                            const GippsParams& params) {
  if (speed_level < 0 || speed_level >= IntersectionLayout::kSpeeds)
    throw UsageError("gipps_next_speed_dist: speed level out of range");
  if (distance_m < 0.0) throw UsageError("gipps_next_speed_dist: negative distance");
  if (!params.in_range()) throw DomainError("gipps_next_speed_dist: parameters out of range");

  const double sb = static_cast<double>(speed_level);
  // Braking magnitude in the denominator; clamped at 0 so a too-short headway
  // means a full stop rather than a negative speed.
  double v_safe = sb + (distance_m - params.tau * sb) / (sb / params.decel_mag + params.tau);
  if (v_safe < 0.0) v_safe = 0.0;
  const double v_des = std::min({4.0, sb + params.accel, v_safe});
  const double lo = std::max(0.0, v_des - params.sigma * params.accel);
  const double hi = v_des;

  std::array<double, 5> dist{};
  if (hi - lo < 1e-12) {
    int level = static_cast<int>(std::lround(v_des));
    level = std::clamp(level, 0, 4);
    dist[static_cast<std::size_t>(level)] = 1.0;
    return dist;
  }
  const double width = hi - lo;
  for (int k = 0; k < 5; ++k) {
    const double a = std::max(lo, k - 0.5);
    const double b = std::min(hi, k + 0.5);
    dist[static_cast<std::size_t>(k)] = b > a ? (b - a) / width : 0.0;
  }
  return dist;
}

double IntersectionLayout::headway_m(int pa, int pb) const {
  const double free_road = cells * kCellMeters;
  if (pb >= conflict) return free_road;  // B committed to or past the conflict cell
  if (pa > conflict) return free_road;   // A already cleared it
  double d = kCellMeters * (conflict - pb);
  if (pa == conflict) d -= kCellMeters;  // A occupies the cell B is heading for
  return d < 0.0 ? 0.0 : d;
}

double GippsModel::likelihood(const BehaviorParams& lambda, int state, int v) const {
  validate_params(lambda);
  if (state < 0 || state >= layout_.num_states() || v < 0 || v >= IntersectionLayout::kSpeeds)
    throw UsageError("GippsModel: index out of range");
  int pa, pb, sa, sb;
  layout_.decode(state, pa, pb, sa, sb);
  const auto dist = gipps_next_speed_dist(sb, layout_.headway_m(pa, pb),
                                          GippsParams::from_behavior(lambda));
  return dist[static_cast<std::size_t>(v)];
}

BehaviorParams GippsModel::sample_prior(Rng& rng) const {
  GippsParams p;
  p.accel = rng.uniform(0.5, 3.0);
  p.decel_mag = rng.uniform(0.5, 3.0);
  p.tau = rng.uniform(0.5, 2.0);
  p.sigma = rng.uniform(0.0, 1.0);
  return p.to_behavior();
}

void GippsModel::validate_params(const BehaviorParams& lambda) const {
  if (!GippsParams::from_behavior(lambda).in_range())
    throw DomainError("GippsModel: parameters out of range");
}

BehaviorParams GippsModel::prior_mean() const {
  return GippsParams{1.75, 1.75, 1.25, 0.5}.to_behavior();
}

bool GippsModel::clamp_params(BehaviorParams& lambda) const {
  GippsParams p = GippsParams::from_behavior(lambda);
  GippsParams c = p;
  c.accel = std::clamp(c.accel, 0.5, 3.0);
  c.decel_mag = std::clamp(c.decel_mag, 0.5, 3.0);
  c.tau = std::clamp(c.tau, 0.5, 2.0);
  c.sigma = std::clamp(c.sigma, 0.0, 1.0);
  lambda = c.to_behavior();
  return c.accel != p.accel || c.decel_mag != p.decel_mag || c.tau != p.tau || c.sigma != p.sigma;
}

Environment build_chain_world() {
  constexpr int kStates = 5;
  constexpr int kA = 0, kB = 1;
  Environment env;
  StochasticGame& g = env.game;
  g.name = "chain";
  g.num_states = kStates;
  g.num_agent_actions = 2;
  g.num_opponent_actions = 2;
  g.discount = 0.75;
  g.initial_state = 0;
  g.allocate_tables();
  for (int s = 0; s < kStates; ++s) {
    // Coordinating on a moves forward; from the last state it pays 10 and
    // loops back to the start.
    if (s < kStates - 1) {
      g.transition_ref(s, kA, kA, s + 1) = 1.0;
    } else {
      g.transition_ref(s, kA, kA, 0) = 1.0;
      g.reward_ref(s, kA, kA) = 10.0;
    }
    // Coordinating on b returns to the start; pays 2 except from the start.
    g.transition_ref(s, kB, kB, 0) = 1.0;
    if (s > 0) g.reward_ref(s, kB, kB) = 2.0;
    // Miscoordination stays put with no reward.
    g.transition_ref(s, kA, kB, s) = 1.0;
    g.transition_ref(s, kB, kA, s) = 1.0;
  }
  g.validate();
  env.model = std::make_shared<FdmModel>(kStates, 2, 0.5, "fdm");
  env.planner_defaults = {60, 200, 16, 10};
  env.protocol_defaults = {20, 10, 100};
  return env;
}

Environment build_ipd() {
  // Base: one physical state, actions {cooperate, betray}, memory depth 1.
  StochasticGame base;
  base.name = "ipd";
  base.num_states = 1;
  base.num_agent_actions = 2;
  base.num_opponent_actions = 2;
  base.discount = 0.95;
  base.history_depth = 1;
  base.initial_state = 0;
  base.allocate_tables();
  constexpr int kC = 0, kB = 1;
  base.reward_ref(0, kC, kC) = 3.0;
  base.reward_ref(0, kC, kB) = 0.0;
  base.reward_ref(0, kB, kC) = 5.0;
  base.reward_ref(0, kB, kB) = 1.0;
  for (int u = 0; u < 2; ++u)
    for (int v = 0; v < 2; ++v) base.transition_ref(0, u, v, 0) = 1.0;

  InfoStateSpace space = expand_information_states(base);
  Environment env;
  env.game = std::move(space.expanded);
  env.game.name = "ipd";
  env.model = std::make_shared<FdmModel>(env.game.num_states, 2, 0.5, "fdm");
  env.planner_defaults = {60, 200, 16, 10};
  env.protocol_defaults = {20, 10, 100};
  return env;
}

Environment build_intersection(bool reduced) {
  IntersectionLayout layout;
  layout.cells = reduced ? 4 : 6;
  layout.conflict = reduced ? 2 : 3;

  Environment env;
  StochasticGame& g = env.game;
  g.name = reduced ? "intersection-reduced" : "intersection";
  g.num_states = layout.num_states();
  g.num_agent_actions = 3;   // +1, 0, -1 m/s^2
  g.num_opponent_actions = IntersectionLayout::kSpeeds;
  g.discount = 0.99;
  g.initial_state = layout.encode(0, 0, 2, 2);
  g.allocate_tables();

  constexpr int kAccelDelta[3] = {+1, 0, -1};
  for (int s = 0; s < g.num_states; ++s) {
    int pa, pb, sa, sb;
    layout.decode(s, pa, pb, sa, sb);
    const bool absorbing = layout.is_collision_state(s);
    for (int u = 0; u < 3; ++u)
      for (int v = 0; v < IntersectionLayout::kSpeeds; ++v) {
        if (absorbing) {  // crashed: zero reward, self loop
          g.transition_ref(s, u, v, s) = 1.0;
          continue;
        }
        const int sa2 = std::clamp(sa + kAccelDelta[u], 0, 4);
        const int sb2 = v;
        // Advance probability 1/t with t = 5 / speed, i.e. speed/5, taken at
        // the current speed; a stopped vehicle never advances.
        const double p_adv_a = static_cast<double>(sa) / 5.0;
        const double p_adv_b = static_cast<double>(sb) / 5.0;
        double reward = -1.0;
        for (int move_a = 0; move_a < 2; ++move_a)
          for (int move_b = 0; move_b < 2; ++move_b) {
            const double p = (move_a ? p_adv_a : 1.0 - p_adv_a) *
                             (move_b ? p_adv_b : 1.0 - p_adv_b);
            if (p <= 0.0) continue;
            const int pa2 = pa + move_a;
            int pb2 = pb + move_b;
            if (pb2 >= layout.cells) pb2 = 0;  // B re-enters its corridor
            int target;
            if (pa2 >= layout.cells) {
              // Crossed: reward and reset the whole system.
              reward += 50.0 * p;
              target = g.initial_state;
            } else if (pa2 == layout.conflict && pb2 == layout.conflict) {
              reward += -250.0 * p;
              target = layout.encode(pa2, pb2, sa2, sb2);
            } else {
              target = layout.encode(pa2, pb2, sa2, sb2);
            }
            g.transition_ref(s, u, v, target) += p;
          }
        g.reward_ref(s, u, v) = reward;
      }
  }
  g.validate();

  env.model = std::make_shared<GippsModel>(layout);
  env.planner_defaults = {30, 200, 8, 16};
  env.protocol_defaults = {10, 5, 100};
  const int initial = g.initial_state;
  const int last_cell = layout.cells - 1;
  auto classify = [layout, initial, last_cell](int s, int /*u*/, int /*v*/, int s2) {
    int pa, pb, sa, sb;
    layout.decode(s, pa, pb, sa, sb);
    if (pa == last_cell && s2 == initial) return StepEvent::kCrossing;
    if (!layout.is_collision_state(s) && layout.is_collision_state(s2))
      return StepEvent::kCollision;
    return StepEvent::kNone;
  };
  env.classify_step = classify;
  env.realized_reward = [layout, classify](int s, int u, int v, int s2) {
    if (layout.is_collision_state(s)) return 0.0;  // crashed; episode is over
    switch (classify(s, u, v, s2)) {
      case StepEvent::kCrossing:
        return 49.0;  // -1 step cost + 50 for crossing
      case StepEvent::kCollision:
        return -251.0;  // -1 step cost - 250 penalty
      case StepEvent::kNone:
        break;
    }
    return -1.0;
  };
  return env;
}

Environment build_environment(const std::string& name) {
  if (name == "chain") return build_chain_world();
  if (name == "ipd") return build_ipd();
  if (name == "intersection") return build_intersection(false);
  if (name == "intersection-reduced") return build_intersection(true);
  throw UsageError("unknown environment: " + name);
}

}  // namespace ibrl
