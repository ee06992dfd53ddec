#pragma once

// Deterministic 2D kinematic world: omnidirectional agents that take a
// (speed, absolute heading) command each decision step, and scripted
// obstacles. Integration is explicit Euler at a fixed dt.

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fcca/error.hpp"
#include "fcca/formation.hpp"
#include "fcca/geometry.hpp"
#include "fcca/random.hpp"

namespace fcca::sim {

struct ObstacleScript {
  enum class Motion { Static, Bounce, WaypointLoop };

  Motion motion = Motion::Static;
  Vec2 initial_position;
  // Bounce: constant velocity, reflected at the bounds.
  Vec2 velocity;
  // Bounce bounds; an empty box (min == max) means the world rectangle.
  Vec2 bounds_min;
  Vec2 bounds_max;
  // WaypointLoop: visits waypoints cyclically at `speed`, starting from
  // initial_position towards waypoints[0].
  std::vector<Vec2> waypoints;
  double speed = 0.0;
  // Per-episode randomization at reset: static obstacles are jittered by the
  // world's obstacle_jitter, bounce obstacles get a random direction (same
  // speed), loop obstacles start at a random point of the loop.
  bool randomize = false;
};

formation::FormationSpec equilateral_triangle(double side);

struct WorldConfig {
  Vec2 world_size{20.0, 20.0};
  std::size_t num_agents = 3;
  double agent_radius = 0.175;
  double obstacle_radius = 0.175;
  double max_speed_agent = 1.25;
  double max_speed_obstacle = 1.25;
  double dt = 0.1;
  Vec2 goal{17.0, 10.0};
  double goal_tolerance = 0.5;
  std::vector<Vec2> start_positions;
  std::vector<double> start_headings;  // empty: all zero
  double start_jitter = 0.0;
  double obstacle_jitter = 0.0;
  // Per-episode goal randomization: the goal is rotated about the centroid of
  // start_positions by a uniform angle in [-goal_spread, goal_spread].
  double goal_spread = 0.0;
  std::vector<ObstacleScript> obstacles;
  double sensing_radius = 5.0;
  std::size_t max_steps = 300;
  formation::FormationSpec formation = equilateral_triangle(1.0);

  // Throws ConfigError describing the first violated invariant.
  void validate() const;

  // Per-agent target: the goal shifted by that agent's offset in the desired
  // formation. The centroid of the slots is the goal.
  std::vector<Vec2> goal_slots() const { return goal_slots(goal); }
  std::vector<Vec2> goal_slots(Vec2 episode_goal) const;
};

// Presets: "empty" (short hop, no obstacles), "simple" (three sparse dynamic
// obstacles), "complex" (seven dense static+dynamic obstacles in the central
// 5 m x 5 m area).
WorldConfig make_preset(const std::string& name);
std::vector<std::string> preset_names();

struct Action {
  double speed = 0.0;    // m/s, clamped to [0, max_speed_agent]
  double heading = 0.0;  // rad, absolute, wrapped to (-pi, pi]
};

struct AgentState {
  Vec2 position;
  Vec2 velocity;
  Vec2 previous_velocity;
  double heading = 0.0;
  bool done = false;
};

struct ObstacleState {
  Vec2 position;
  Vec2 previous_position;
  Vec2 velocity;  // current scripted velocity (bounce) or last loop velocity
  std::size_t waypoint = 0;
};

enum class Termination { None, Collision, GoalReached, Timeout };

const char* to_string(Termination t);

struct EpisodeState {
  std::size_t t = 0;
  Vec2 goal;  // this episode's goal (config.goal unless goal_spread > 0)
  std::vector<AgentState> agents;
  std::vector<ObstacleState> obstacles;
  Rng rng;
  bool done = false;
  Termination termination = Termination::None;

  std::vector<Vec2> agent_positions() const;
};

struct TerminationFlags {
  std::vector<bool> agent_collision;
  bool any_collision = false;
  bool goal_reached = false;
  bool timeout = false;
  // At most one cause ends the episode: collision, then goal, then timeout.
  Termination termination = Termination::None;
};

struct StepOutcome {
  TerminationFlags flags;
  std::vector<double> min_obstacle_distance;  // per agent, center to center, all obstacles
  std::vector<double> acceleration;           // per agent, |dv|/dt
  std::vector<bool> ignored_action;           // action sent to an already-done agent
};

// Large stand-in for "no obstacle".
inline constexpr double kNoObstacleDistance = 1e6;

EpisodeState reset(const WorldConfig& config, std::uint64_t seed);

// Advances one decision step in place.
StepOutcome step(const WorldConfig& config, EpisodeState& state, std::span<const Action> actions);

TerminationFlags termination_check(const EpisodeState& state, const WorldConfig& config);

struct AgentObservation {
  double g_x = 0.0;
  double g_y = 0.0;
  double v = 0.0;
  double theta = 0.0;
  double f = 0.0;
};

struct ObstacleObservation {
  double p_ox = 0.0;
  double p_oy = 0.0;
  double v_ox = 0.0;
  double v_oy = 0.0;
};

struct Observation {
  AgentObservation agent;
  std::vector<ObstacleObservation> obstacles;  // ascending distance
};

Observation observe(const WorldConfig& config, const EpisodeState& state, std::size_t agent);

// Formation error of the current agent positions; a fully coincident team
// (no defined normalization) reports the bound N(N-1).
double current_formation_error(const WorldConfig& config, const EpisodeState& state);

// Distance from agent to the nearest obstacle (center to center), or
// kNoObstacleDistance.
double nearest_obstacle_distance(const WorldConfig& config, const EpisodeState& state,
                                 std::size_t agent);

// One line of a trajectory trace.
struct TraceStep {
  std::size_t t = 0;
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
  std::vector<double> headings;
  std::vector<Vec2> obstacle_positions;
  double formation_error = 0.0;
  bool collision = false;
  bool goal_reached = false;
  bool timeout = false;

  friend bool operator==(const TraceStep&, const TraceStep&) = default;
};

TraceStep make_trace_step(const WorldConfig& config, const EpisodeState& state,
                          const TerminationFlags& flags);

void to_json(nlohmann::json& j, const TraceStep& s);
void from_json(const nlohmann::json& j, TraceStep& s);

// WorldConfig <-> run configuration JSON. Unknown keys are rejected.
WorldConfig world_from_json(const nlohmann::json& j);
nlohmann::json world_to_json(const WorldConfig& config);

}  // namespace fcca::sim
