#pragma once

// Planar point-mass multi-task suite. All tasks share one observation layout
// [agent_pos, agent_vel, object_pos, goal_pos] (object slot zero-padded for
// single-phase tasks) and a 2-d force action in [-1,1]^2. Two-phase tasks
// (push, pick-lite) switch target when the agent first touches the object.

#include "cmta/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cmta::envs {

using Vec2 = Eigen::Vector2d;

inline constexpr double kDamping = 0.9;
inline constexpr double kAccel = 0.1;
inline constexpr double kDt = 0.05;
inline constexpr double kContactRadius = 0.08;
inline constexpr double kSuccessRadius = 0.05;
inline constexpr double kArenaHalf = 1.0;
inline constexpr double kRewardScale = 1.0;
inline constexpr int kObsDim = 8;
inline constexpr int kActDim = 2;
inline constexpr int kVariantsPerTask = 50;
// Seed for the position tables; fixed so every build generates the same suite.
inline constexpr std::uint64_t kSuiteSeed = 901237;

// Obstacle used by reach-wall.
inline constexpr double kWallX = 0.35;
inline constexpr double kWallHalfSpan = 0.35;

enum class TaskKind { Reach, Push, PickLite, ReachWall, PushBack };

struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::Reach;
  int state_dim = kObsDim;
  int action_dim = kActDim;
  int phase_count = 1;
  double success_radius = kSuccessRadius;
  // (object_start, goal) per variant; 1 entry for Fixed, 50 for Mixed.
  std::vector<std::pair<Vec2, Vec2>> variant_positions;

  bool has_object() const { return phase_count == 2; }
};

struct EnvState {
  Vec2 agent_pos = Vec2::Zero();
  Vec2 agent_vel = Vec2::Zero();
  Vec2 object_pos = Vec2::Zero();
  Vec2 goal_pos = Vec2::Zero();
  int step_count = 0;
  int phase = 0;
  bool attached = false;       // pick-lite latch
  bool success_latched = false;
};

struct StepResult {
  Eigen::VectorXd observation;
  double reward = 0.0;
  bool done = false;
  bool success = false;  // latched success flag
  bool timeout = false;  // done due to horizon, not a true terminal
};

namespace detail {

inline Vec2 clamp_arena(Vec2 p) {
  return {std::clamp(p.x(), -kArenaHalf, kArenaHalf), std::clamp(p.y(), -kArenaHalf, kArenaHalf)};
}

// True if the segment a->b crosses the reach-wall barrier.
inline bool crosses_wall(const Vec2& a, const Vec2& b) {
  if ((a.x() - kWallX) * (b.x() - kWallX) > 0.0) return false;
  const double denom = b.x() - a.x();
  if (std::abs(denom) < 1e-12) return false;
  const double s = (kWallX - a.x()) / denom;
  const double y = a.y() + s * (b.y() - a.y());
  return std::abs(y) <= kWallHalfSpan;
}

inline std::vector<std::pair<Vec2, Vec2>> generate_positions(TaskKind kind, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<Vec2, Vec2>> out;
  out.reserve(kVariantsPerTask);
  while (out.size() < kVariantsPerTask) {
    Vec2 object(rng.uniform(-0.55, 0.55), rng.uniform(-0.55, 0.55));
    Vec2 goal(rng.uniform(-0.75, 0.75), rng.uniform(-0.75, 0.75));
    switch (kind) {
      case TaskKind::Reach:
        object.setZero();
        if (goal.norm() < 0.3) continue;  // keep the task non-degenerate
        break;
      case TaskKind::ReachWall:
        object.setZero();
        goal.x() = rng.uniform(0.55, 0.9);  // force routing around the wall
        goal.y() = rng.uniform(-0.3, 0.3);
        break;
      case TaskKind::Push:
      case TaskKind::PickLite:
        if (object.norm() < 0.2) continue;
        if ((goal - object).norm() < 0.25) continue;
        break;
      case TaskKind::PushBack:
        if (object.norm() < 0.2) continue;
        // Goal on the side of the arena opposite the object.
        goal = -0.6 * object.normalized() * rng.uniform(0.7, 1.2);
        goal = clamp_arena(goal);
        if ((goal - object).norm() < 0.25) continue;
        break;
    }
    out.emplace_back(object, goal);
  }
  return out;
}

}  // namespace detail

inline std::vector<TaskSpec> register_suite(const std::string& suite_name) {
  bool mixed = false;
  int n_tasks = 0;
  if (suite_name == "MT3-Fixed") {
    n_tasks = 3;
  } else if (suite_name == "MT3-Mixed") {
    n_tasks = 3;
    mixed = true;
  } else if (suite_name == "MT5-Fixed") {
    n_tasks = 5;
  } else if (suite_name == "MT5-Mixed") {
    n_tasks = 5;
    mixed = true;
  } else {
    throw std::invalid_argument("unknown suite: " + suite_name);
  }

  const std::vector<std::pair<std::string, TaskKind>> defs = {
      {"reach", TaskKind::Reach},
      {"push", TaskKind::Push},
      {"pick-lite", TaskKind::PickLite},
      {"reach-wall", TaskKind::ReachWall},
      {"push-back", TaskKind::PushBack},
  };

  std::vector<TaskSpec> specs;
  for (int i = 0; i < n_tasks; ++i) {
    TaskSpec spec;
    spec.name = defs[static_cast<std::size_t>(i)].first;
    spec.kind = defs[static_cast<std::size_t>(i)].second;
    spec.phase_count = (spec.kind == TaskKind::Push || spec.kind == TaskKind::PickLite ||
                        spec.kind == TaskKind::PushBack)
                           ? 2
                           : 1;
    auto all = detail::generate_positions(spec.kind, kSuiteSeed + static_cast<std::uint64_t>(i));
    if (mixed) {
      spec.variant_positions = std::move(all);
    } else {
      spec.variant_positions = {all.front()};
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

class Env {
 public:
  Env(TaskSpec spec, int horizon) : spec_(std::move(spec)), horizon_(horizon) {}

  const TaskSpec& spec() const { return spec_; }
  const EnvState& state() const { return state_; }
  int horizon() const { return horizon_; }

  Eigen::VectorXd reset(std::size_t variant_index) {
    if (variant_index >= spec_.variant_positions.size())
      throw std::invalid_argument("reset: variant index out of range");
    const auto& [object, goal] = spec_.variant_positions[variant_index];
    state_ = EnvState{};
    state_.object_pos = spec_.has_object() ? object : Vec2::Zero();
    state_.goal_pos = goal;
    return observation();
  }

  Eigen::VectorXd reset_random(Rng& rng) {
    return reset(spec_.variant_positions.size() == 1 ? 0 : rng.index(spec_.variant_positions.size()));
  }

  StepResult step(const Vec2& action_in) {
    if (!action_in.allFinite()) throw std::invalid_argument("step: non-finite action");
    Vec2 action(std::clamp(action_in.x(), -1.0, 1.0), std::clamp(action_in.y(), -1.0, 1.0));

    const Vec2 old_pos = state_.agent_pos;
    state_.agent_vel = kDamping * state_.agent_vel + kAccel * action;
    Vec2 new_pos = detail::clamp_arena(state_.agent_pos + kDt * state_.agent_vel);

    if (spec_.kind == TaskKind::ReachWall && detail::crosses_wall(old_pos, new_pos)) {
      new_pos = old_pos;
      state_.agent_vel.x() = 0.0;
    }
    state_.agent_pos = new_pos;
    const Vec2 delta = state_.agent_pos - old_pos;

    if (spec_.has_object()) {
      const bool contact = (state_.agent_pos - state_.object_pos).norm() < kContactRadius;
      if (spec_.kind == TaskKind::PickLite) {
        if (contact) state_.attached = true;
        if (state_.attached) state_.object_pos = detail::clamp_arena(state_.object_pos + delta);
      } else {  // push variants: object moves only while in contact
        if (contact) state_.object_pos = detail::clamp_arena(state_.object_pos + delta);
      }
      if (state_.phase == 0 && contact) state_.phase = 1;
    }

    const Vec2 target = phase_target();
    const Vec2 tracked = tracked_point();
    const double reward = -kRewardScale * (tracked - target).norm();

    const bool success_now = (final_tracked() - state_.goal_pos).norm() < spec_.success_radius &&
                             (!spec_.has_object() || state_.phase == 1);
    if (success_now) state_.success_latched = true;

    ++state_.step_count;
    StepResult r;
    r.reward = reward;
    r.success = state_.success_latched;
    const bool horizon_hit = state_.step_count >= horizon_;
    r.done = state_.success_latched || horizon_hit;
    r.timeout = horizon_hit && !state_.success_latched;
    r.observation = observation();
    return r;
  }

  Eigen::VectorXd observation() const {
    Eigen::VectorXd obs(kObsDim);
    obs << state_.agent_pos, state_.agent_vel,
        (spec_.has_object() ? state_.object_pos : Vec2::Zero()), state_.goal_pos;
    return obs;
  }

  // Target the dense reward tracks in the current phase.
  Vec2 phase_target() const {
    if (!spec_.has_object()) return state_.goal_pos;
    return state_.phase == 0 ? state_.object_pos : state_.goal_pos;
  }

 private:
  // Point whose distance to the phase target defines the reward.
  Vec2 tracked_point() const {
    if (!spec_.has_object()) return state_.agent_pos;
    return state_.phase == 0 ? state_.agent_pos : state_.object_pos;
  }

  // Point that must end up at the goal for success.
  Vec2 final_tracked() const {
    return spec_.has_object() ? state_.object_pos : state_.agent_pos;
  }

  TaskSpec spec_;
  EnvState state_;
  int horizon_;
};

// Proportional-derivative controller used as a solvability oracle in tests.
// Goal-only tasks drive straight at the goal. Object tasks first move to a
// waypoint behind the object (relative to the goal) so the approach velocity
// is aligned with the push direction, then steer so the object, which shares
// the agent's displacement while touched or carried, heads for the goal.
inline Vec2 scripted_action(const Env& env) {
  const EnvState& st = env.state();
  const TaskSpec& spec = env.spec();
  Vec2 err;
  if (!spec.has_object()) {
    err = st.goal_pos - st.agent_pos;
  } else if (st.attached || (st.agent_pos - st.object_pos).norm() < kContactRadius) {
    err = st.goal_pos - st.object_pos;
  } else {
    const Vec2 dir = (st.goal_pos - st.object_pos).normalized();
    const Vec2 behind = detail::clamp_arena(st.object_pos - 1.5 * kContactRadius * dir);
    err = (st.agent_pos - behind).norm() > 0.04 ? behind - st.agent_pos
                                                : st.goal_pos - st.agent_pos;
  }
  Vec2 a = 8.0 * err - 2.0 * st.agent_vel;
  return {std::clamp(a.x(), -1.0, 1.0), std::clamp(a.y(), -1.0, 1.0)};
}

// Plain-text manifest of a suite for reproducibility audits.
inline void write_manifest(const std::vector<TaskSpec>& specs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << "tasks = " << specs.size() << "\n";
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    out << "\n[task." << i << "]\n";
    out << "name = " << s.name << "\n";
    out << "state_dim = " << s.state_dim << "\n";
    out << "action_dim = " << s.action_dim << "\n";
    out << "phase_count = " << s.phase_count << "\n";
    out << "success_radius = " << s.success_radius << "\n";
    out << "variants = " << s.variant_positions.size() << "\n";
    for (std::size_t v = 0; v < s.variant_positions.size(); ++v) {
      const auto& [obj, goal] = s.variant_positions[v];
      out << "variant." << v << " = " << obj.x() << " " << obj.y() << " " << goal.x() << " "
          << goal.y() << "\n";
    }
  }
}

}  // namespace cmta::envs
