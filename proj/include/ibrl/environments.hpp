#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>

#include "ibrl/behavior.hpp"
#include "ibrl/game.hpp"

namespace ibrl {

/// Gipps reactive-driver parameters. The paper's deceleration is negative;
/// we carry its magnitude (see gipps_next_speed_dist).
struct GippsParams {
  double accel = 1.75;      // m/s^2, in [0.5, 3]
  double decel_mag = 1.75;  // m/s^2, in [0.5, 3]
  double tau = 1.25;        // s, in [0.5, 2]
  double sigma = 0.5;       // in [0, 1]

  static GippsParams from_behavior(const BehaviorParams& p);
  BehaviorParams to_behavior() const;
  bool in_range() const;
};

/// Next-speed distribution over the 5 discrete levels: the continuous
/// Uniform(max(0, v_des - sigma*a), v_des) gets each level the mass of
/// [k-0.5, k+0.5) intersected with its support, renormalized. A degenerate
/// support yields a point mass on the nearest level.
std::array<double, 5> gipps_next_speed_dist(int speed_level, double distance_m,
                                            const GippsParams& params);

/// Geometry of the two crossing 1-D paths: `cells` positions per vehicle,
/// one shared conflict cell, 5 m cell size, 5 speed levels.
struct IntersectionLayout {
  int cells = 6;
  int conflict = 3;
  static constexpr int kSpeeds = 5;
  static constexpr double kCellMeters = 5.0;

  int num_states() const { return cells * cells * kSpeeds * kSpeeds; }
  int encode(int pa, int pb, int sa, int sb) const {
    return ((pa * cells + pb) * kSpeeds + sa) * kSpeeds + sb;
  }
  void decode(int s, int& pa, int& pb, int& sa, int& sb) const {
    sb = s % kSpeeds;
    s /= kSpeeds;
    sa = s % kSpeeds;
    s /= kSpeeds;
    pb = s % cells;
    pa = s / cells;
  }
  /// Scalar headway for the Gipps model: B's path distance to the conflict
  /// cell, shortened by one cell while A occupies it; a free-road constant
  /// once either vehicle has passed the conflict cell.
  double headway_m(int pa, int pb) const;
  bool is_collision_state(int s) const {
    int pa, pb, sa, sb;
    decode(s, pa, pb, sa, sb);
    return pa == conflict && pb == conflict;
  }
};

/// Gipps reactive driver bound to an intersection layout: the opponent's
/// action is its next speed level.
class GippsModel : public BehaviorModel {
 public:
  explicit GippsModel(IntersectionLayout layout) : layout_(layout) {}

  std::string name() const override { return "gipps"; }
  int param_dim() const override { return 4; }
  int num_states() const override { return layout_.num_states(); }
  int num_opponent_actions() const override { return IntersectionLayout::kSpeeds; }
  double likelihood(const BehaviorParams& lambda, int state, int v) const override;
  BehaviorParams sample_prior(Rng& rng) const override;
  void validate_params(const BehaviorParams& lambda) const override;
  BehaviorParams prior_mean() const override;
  bool clamp_params(BehaviorParams& lambda) const override;

  const IntersectionLayout& layout() const { return layout_; }

 private:
  IntersectionLayout layout_;
};

enum class StepEvent { kNone, kCrossing, kCollision };

/// Planner hyperparameters an environment suggests for itself.
struct PlannerDefaults {
  int horizon = 60;
  int particles = 200;
  int beliefs_per_state = 16;
  int sample_depth = 10;
};

/// Evaluation protocol an environment suggests for itself.
struct ProtocolDefaults {
  int opponents = 20;
  int episodes = 10;
  int horizon = 100;
};

struct Environment {
  StochasticGame game;
  std::shared_ptr<BehaviorModel> model;
  PlannerDefaults planner_defaults;
  ProtocolDefaults protocol_defaults;
  std::function<StepEvent(int s, int u, int v, int s2)> classify_step;  // may be null
  /// Realized per-step reward when the table holds an expectation over chance
  /// events (the intersection). Null means the table value is the reward.
  std::function<double(int s, int u, int v, int s2)> realized_reward;
};

/// 5-state coordination chain (phi = 0.75), FDM opponent with Dir(1/|V|) rows.
Environment build_chain_world();

/// Iterated prisoner's dilemma over memory-1 information states
/// (1 initial + 4), phi = 0.95.
Environment build_ipd();

/// Two-vehicle intersection game (900 states, or 400 reduced), phi = 0.99,
/// Gipps opponent.
Environment build_intersection(bool reduced);

/// Registry lookup: "chain", "ipd", "intersection", "intersection-reduced".
Environment build_environment(const std::string& name);

}  // namespace ibrl
