#pragma once

// Three hand-scripted episodes (goal, collision, timeout) whose metrics are
// known exactly, shared by the eval unit tests and the acceptance suite.

#include <vector>

#include "fcca/eval.hpp"
#include "fcca/sim.hpp"

namespace fcca::test {

// Binary-exact geometry so every expected value below is exact: dt = 1/8,
// hazard zone = 0.25 + 0.25 + 0.25 = 0.75, timeout after 8 steps.
inline sim::WorldConfig scripted_world() {
  sim::WorldConfig w = sim::make_preset("empty");
  w.num_agents = 2;
  w.dt = 0.125;
  w.agent_radius = 0.25;
  w.obstacle_radius = 0.25;
  w.max_steps = 8;
  return w;
}

inline eval::EvalConfig scripted_config() {
  eval::EvalConfig c;
  c.hazard_margin = 0.25;
  return c;
}

struct Frame {
  Vec2 a0, a1;  // agent positions
  Vec2 v0, v1;  // agent velocities
  double formation_error;
};

enum class End { None, Collision, Goal, Timeout };

// The obstacle sits at the origin throughout.
inline std::vector<sim::TraceStep> script(const std::vector<Frame>& frames, End end) {
  std::vector<sim::TraceStep> trace;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    sim::TraceStep s;
    s.t = t;
    s.positions = {frames[t].a0, frames[t].a1};
    s.velocities = {frames[t].v0, frames[t].v1};
    s.headings = {0.0, 0.0};
    s.obstacle_positions = {{0.0, 0.0}};
    s.formation_error = frames[t].formation_error;
    if (t + 1 == frames.size()) {
      s.collision = end == End::Collision;
      s.goal_reached = end == End::Goal;
      s.timeout = end == End::Timeout;
    }
    trace.push_back(s);
  }
  return trace;
}

inline const Vec2 kFar{0.0, 5.0};

// Success at t = 4. Agent 0 enters the hazard zone twice; accelerations sum
// to 8 + 16 = 24 over 4 intervals x 2 agents.
inline std::vector<sim::TraceStep> success_trace() {
  return script({{{2.0, 0.0}, kFar, {0, 0}, {0, 0}, 1.0},
                 {{0.5, 0.0}, kFar, {1, 0}, {0, 0.5}, 0.5},
                 {{0.0, 0.5}, kFar, {1, 0}, {0, 1.0}, 0.5},
                 {{2.0, 0.0}, kFar, {1, 0}, {0, 1.5}, 0.25},
                 {{0.0, 0.7}, kFar, {1, 0}, {0, 2.0}, 0.25}},
                End::Goal);
}

// Collision at t = 2; its large formation errors must not reach the means.
inline std::vector<sim::TraceStep> collision_trace() {
  return script({{{2.0, 0.0}, kFar, {0, 0}, {0, 0}, 0.0},
                 {{1.0, 0.0}, kFar, {2, 0}, {0, 0}, 3.0},
                 {{0.3, 0.0}, kFar, {2, 0}, {0, 0}, 5.0}},
                End::Collision);
}

// Stationary until timeout; agent 1 starts inside the zone: one incident.
inline std::vector<sim::TraceStep> timeout_trace() {
  std::vector<Frame> f(9, Frame{{3.0, 3.0}, {0.0, -0.5}, {0, 0}, {0, 0}, 0.75});
  return script(f, End::Timeout);
}

}  // namespace fcca::test
