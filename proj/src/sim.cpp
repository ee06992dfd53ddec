#include "fcca/sim.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

namespace fcca::sim {
namespace {

bool inside(Vec2 p, Vec2 size) { return p.x >= 0.0 && p.y >= 0.0 && p.x <= size.x && p.y <= size.y; }

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("world config: " + what);
}

void advance_bounce(const WorldConfig& config, const ObstacleScript& script, ObstacleState& o) {
  Vec2 lo = script.bounds_min;
  Vec2 hi = script.bounds_max;
  if (lo == hi) {
    lo = {0.0, 0.0};
    hi = config.world_size;
  }
  const double r = config.obstacle_radius;
  o.position += o.velocity * config.dt;
  auto reflect = [](double& p, double& v, double a, double b) {
    if (p < a) {
      p = 2.0 * a - p;
      v = -v;
    } else if (p > b) {
      p = 2.0 * b - p;
      v = -v;
    }
  };
  reflect(o.position.x, o.velocity.x, lo.x + r, hi.x - r);
  reflect(o.position.y, o.velocity.y, lo.y + r, hi.y - r);
}

void advance_loop(const WorldConfig& config, const ObstacleScript& script, ObstacleState& o) {
  const std::size_t n = script.waypoints.size();
  double remaining = script.speed * config.dt;
  std::size_t zero_legs = 0;
  while (remaining > 0.0 && zero_legs <= n) {
    const Vec2 target = script.waypoints[o.waypoint];
    const double d = distance(o.position, target);
    if (d <= remaining) {
      o.position = target;
      remaining -= d;
      o.waypoint = (o.waypoint + 1) % n;
      zero_legs = d == 0.0 ? zero_legs + 1 : 0;
    } else {
      o.position += (target - o.position) * (remaining / d);
      remaining = 0.0;
    }
  }
  o.velocity = (o.position - o.previous_position) * (1.0 / config.dt);
}

// Places a loop obstacle at a uniformly random arc-length point of its cycle.
void random_loop_phase(const ObstacleScript& script, ObstacleState& o, Rng& rng) {
  const auto& w = script.waypoints;
  const std::size_t n = w.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += distance(w[i], w[(i + 1) % n]);
  double s = uniform(rng, 0.0, total);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = w[i];
    const Vec2 b = w[(i + 1) % n];
    const double len = distance(a, b);
    if (s <= len || i + 1 == n) {
      o.position = len > 0.0 ? a + (b - a) * (std::min(s, len) / len) : a;
      o.waypoint = (i + 1) % n;
      return;
    }
    s -= len;
  }
}

bool bodies_overlap(const WorldConfig& config, const EpisodeState& s) {
  const double aa = 2.0 * config.agent_radius;
  const double ao = config.agent_radius + config.obstacle_radius;
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    for (std::size_t j = i + 1; j < s.agents.size(); ++j)
      if (distance(s.agents[i].position, s.agents[j].position) < aa) return true;
    for (const auto& o : s.obstacles)
      if (distance(s.agents[i].position, o.position) < ao) return true;
  }
  return false;
}

}  // namespace

formation::FormationSpec equilateral_triangle(double side) {
  const double r3 = std::sqrt(3.0);
  // Pointing along +x, centroid at the origin.
  return formation::FormationSpec({{-side * r3 / 6.0, -side * 0.5},
                                   {side * r3 / 3.0, 0.0},
                                   {-side * r3 / 6.0, side * 0.5}});
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::None: return "none";
    case Termination::Collision: return "collision";
    case Termination::GoalReached: return "goal";
    case Termination::Timeout: return "timeout";
  }
  return "?";
}

void WorldConfig::validate() const {
  require(world_size.x > 0.0 && world_size.y > 0.0, "world_size must be positive");
  require(num_agents >= 2, "num_agents must be >= 2");
  require(agent_radius > 0.0 && obstacle_radius > 0.0, "radii must be positive");
  require(max_speed_agent > 0.0 && max_speed_obstacle > 0.0, "speeds must be positive");
  require(dt > 0.0, "dt must be positive");
  require(max_steps > 0, "max_steps must be positive");
  require(goal_tolerance > 0.0, "goal_tolerance must be positive");
  require(sensing_radius > 0.0, "sensing_radius must be positive");
  require(start_jitter >= 0.0 && obstacle_jitter >= 0.0, "jitter must be nonnegative");
  require(goal_spread >= 0.0 && goal_spread <= std::numbers::pi, "goal_spread must be in [0, pi]");
  require(inside(goal, world_size), "goal outside world");
  require(start_positions.size() == num_agents, "start_positions must have num_agents entries");
  require(start_headings.empty() || start_headings.size() == num_agents,
          "start_headings must be empty or have num_agents entries");
  require(formation.size() == num_agents, "formation must have num_agents positions");
  for (const Vec2& p : start_positions)
    require(is_finite(p) && inside(p, world_size), "start position outside world");
  for (const auto& o : obstacles) {
    require(is_finite(o.initial_position) && inside(o.initial_position, world_size),
            "obstacle initial position outside world");
    switch (o.motion) {
      case ObstacleScript::Motion::Static: break;
      case ObstacleScript::Motion::Bounce:
        require(norm(o.velocity) <= max_speed_obstacle, "bounce speed exceeds max_speed_obstacle");
        break;
      case ObstacleScript::Motion::WaypointLoop:
        require(!o.waypoints.empty(), "waypoint loop needs waypoints");
        require(!o.randomize || o.waypoints.size() >= 2, "randomized loop needs >= 2 waypoints");
        require(o.speed > 0.0 && o.speed <= max_speed_obstacle, "loop speed out of range");
        for (const Vec2& w : o.waypoints) require(inside(w, world_size), "waypoint outside world");
        break;
    }
  }
}

std::vector<Vec2> WorldConfig::goal_slots(Vec2 episode_goal) const {
  std::vector<Vec2> slots = formation.centered_offsets();
  for (Vec2& s : slots) s += episode_goal;
  return slots;
}

WorldConfig make_preset(const std::string& name) {
  WorldConfig c;
  using M = ObstacleScript::Motion;
  if (name == "empty") {
    c.start_positions = {{8.0, 9.0}, {8.0, 10.0}, {8.0, 11.0}};
    c.goal = {11.0, 10.0};
    c.goal_spread = 0.5;
    c.max_steps = 150;
    c.start_jitter = 0.1;
    return c;
  }
  c.start_positions = {{3.0, 9.0}, {3.0, 10.0}, {3.0, 11.0}};
  c.goal = {17.0, 10.0};
  c.max_steps = 300;
  c.start_jitter = 0.1;
  if (name == "simple") {
    // Three sparse obstacles sweeping across the corridor.
    auto sweeper = [](double x, double y0, double y1, double speed) {
      ObstacleScript o;
      o.motion = M::WaypointLoop;
      o.initial_position = {x, y0};
      o.waypoints = {{x, y1}, {x, y0}};
      o.speed = speed;
      o.randomize = true;
      return o;
    };
    c.obstacles = {sweeper(6.5, 6.0, 14.0, 0.6), sweeper(10.0, 14.0, 6.0, 0.5),
                   sweeper(13.5, 6.0, 14.0, 0.6)};
    return c;
  }
  if (name == "complex") {
    c.obstacle_jitter = 0.3;
    auto fixed = [](double x, double y) {
      ObstacleScript o;
      o.initial_position = {x, y};
      o.randomize = true;
      return o;
    };
    auto bouncer = [](double x, double y, double vx, double vy) {
      ObstacleScript o;
      o.motion = M::Bounce;
      o.initial_position = {x, y};
      o.velocity = {vx, vy};
      o.bounds_min = {7.5, 7.5};
      o.bounds_max = {12.5, 12.5};
      o.randomize = true;
      return o;
    };
    auto sweeper = [](double x, double y0, double y1, double speed) {
      ObstacleScript o;
      o.motion = M::WaypointLoop;
      o.initial_position = {x, y0};
      o.waypoints = {{x, y1}, {x, y0}};
      o.speed = speed;
      o.randomize = true;
      return o;
    };
    c.obstacles = {fixed(8.6, 10.3),         fixed(10.2, 8.8),          fixed(11.4, 11.2),
                   bouncer(9.0, 8.0, 0.8, 0.5), bouncer(11.5, 9.5, -0.6, 0.7),
                   sweeper(9.5, 7.5, 12.5, 1.0), sweeper(12.0, 12.5, 7.5, 0.9)};
    return c;
  }
  throw ConfigError("unknown world preset '" + name + "'");
}

std::vector<std::string> preset_names() { return {"empty", "simple", "complex"}; }

std::vector<Vec2> EpisodeState::agent_positions() const {
  std::vector<Vec2> p;
  p.reserve(agents.size());
  for (const auto& a : agents) p.push_back(a.position);
  return p;
}

EpisodeState reset(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  const bool randomized =
      config.start_jitter > 0.0 ||
      std::any_of(config.obstacles.begin(), config.obstacles.end(),
                  [](const ObstacleScript& o) { return o.randomize; });
  EpisodeState s;
  s.rng.seed(derive_seed(seed, {0x5eed}));
  s.goal = config.goal;
  if (config.goal_spread > 0.0) {
    const Vec2 pivot = formation::centroid(config.start_positions);
    const Vec2 g = pivot + rotate(config.goal - pivot, uniform(s.rng, -config.goal_spread, config.goal_spread));
    s.goal = {std::clamp(g.x, 0.0, config.world_size.x), std::clamp(g.y, 0.0, config.world_size.y)};
  }
  constexpr int kAttempts = 100;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    s.agents.assign(config.num_agents, {});
    for (std::size_t i = 0; i < config.num_agents; ++i) {
      AgentState& a = s.agents[i];
      a.position = config.start_positions[i];
      if (config.start_jitter > 0.0) {
        a.position.x += uniform(s.rng, -config.start_jitter, config.start_jitter);
        a.position.y += uniform(s.rng, -config.start_jitter, config.start_jitter);
        a.position.x = std::clamp(a.position.x, 0.0, config.world_size.x);
        a.position.y = std::clamp(a.position.y, 0.0, config.world_size.y);
      }
      a.heading = config.start_headings.empty() ? 0.0 : wrap_angle(config.start_headings[i]);
    }
    s.obstacles.assign(config.obstacles.size(), {});
    for (std::size_t k = 0; k < config.obstacles.size(); ++k) {
      const ObstacleScript& script = config.obstacles[k];
      ObstacleState& o = s.obstacles[k];
      o.position = script.initial_position;
      switch (script.motion) {
        case ObstacleScript::Motion::Static:
          if (script.randomize && config.obstacle_jitter > 0.0) {
            o.position.x += uniform(s.rng, -config.obstacle_jitter, config.obstacle_jitter);
            o.position.y += uniform(s.rng, -config.obstacle_jitter, config.obstacle_jitter);
          }
          break;
        case ObstacleScript::Motion::Bounce:
          o.velocity = script.velocity;
          if (script.randomize) {
            const double phi = uniform(s.rng, -std::numbers::pi, std::numbers::pi);
            o.velocity = Vec2{std::cos(phi), std::sin(phi)} * norm(script.velocity);
          }
          break;
        case ObstacleScript::Motion::WaypointLoop:
          if (script.randomize) random_loop_phase(script, o, s.rng);
          break;
      }
      o.previous_position = o.position;
    }
    if (!bodies_overlap(config, s)) break;
    if (!randomized || attempt + 1 == kAttempts)
      throw ConfigError("world config: overlapping bodies at start");
  }
  s.t = 0;
  const TerminationFlags flags = termination_check(s, config);
  if (flags.termination != Termination::None) {
    s.done = true;
    s.termination = flags.termination;
    for (auto& a : s.agents) a.done = true;
  }
  return s;
}

StepOutcome step(const WorldConfig& config, EpisodeState& state, std::span<const Action> actions) {
  if (state.done) throw InputError("step called on a finished episode");
  if (actions.size() != state.agents.size())
    throw InputError("step: expected " + std::to_string(state.agents.size()) + " actions, got " +
                     std::to_string(actions.size()));
  for (const Action& a : actions)
    if (std::isnan(a.speed) || std::isnan(a.heading)) throw InputError("step: NaN action");

  StepOutcome out;
  const std::size_t n = state.agents.size();
  out.ignored_action.assign(n, false);
  out.acceleration.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    AgentState& a = state.agents[i];
    if (a.done) {
      out.ignored_action[i] = true;
      continue;
    }
    const double speed = std::clamp(actions[i].speed, 0.0, config.max_speed_agent);
    const double heading = wrap_angle(actions[i].heading);
    a.previous_velocity = a.velocity;
    a.velocity = Vec2{std::cos(heading), std::sin(heading)} * speed;
    a.heading = heading;
    a.position += a.velocity * config.dt;
    a.position.x = std::clamp(a.position.x, 0.0, config.world_size.x);
    a.position.y = std::clamp(a.position.y, 0.0, config.world_size.y);
    out.acceleration[i] = norm(a.velocity - a.previous_velocity) / config.dt;
  }
  for (std::size_t k = 0; k < state.obstacles.size(); ++k) {
    ObstacleState& o = state.obstacles[k];
    const ObstacleScript& script = config.obstacles[k];
    o.previous_position = o.position;
    switch (script.motion) {
      case ObstacleScript::Motion::Static: break;
      case ObstacleScript::Motion::Bounce: advance_bounce(config, script, o); break;
      case ObstacleScript::Motion::WaypointLoop: advance_loop(config, script, o); break;
    }
  }
  ++state.t;

  out.flags = termination_check(state, config);
  out.min_obstacle_distance.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.min_obstacle_distance[i] = nearest_obstacle_distance(config, state, i);
  if (out.flags.termination != Termination::None) {
    state.done = true;
    state.termination = out.flags.termination;
    for (auto& a : state.agents) a.done = true;
  }
  return out;
}

TerminationFlags termination_check(const EpisodeState& state, const WorldConfig& config) {
  TerminationFlags f;
  const std::size_t n = state.agents.size();
  f.agent_collision.assign(n, false);
  const double aa = 2.0 * config.agent_radius;
  const double ao = config.agent_radius + config.obstacle_radius;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& o : state.obstacles)
      if (distance(state.agents[i].position, o.position) < ao) f.agent_collision[i] = true;
    for (std::size_t j = i + 1; j < n; ++j)
      if (distance(state.agents[i].position, state.agents[j].position) < aa)
        f.agent_collision[i] = f.agent_collision[j] = true;
  }
  f.any_collision = std::find(f.agent_collision.begin(), f.agent_collision.end(), true) !=
                    f.agent_collision.end();
  const auto positions = state.agent_positions();
  f.goal_reached = distance(formation::centroid(positions), state.goal) <= config.goal_tolerance;
  f.timeout = state.t >= config.max_steps;
  if (f.any_collision)
    f.termination = Termination::Collision;
  else if (f.goal_reached)
    f.termination = Termination::GoalReached;
  else if (f.timeout)
    f.termination = Termination::Timeout;
  return f;
}

double current_formation_error(const WorldConfig& config, const EpisodeState& state) {
  try {
    return config.formation.error(state.agent_positions());
  } catch (const formation::DegenerateFormationError&) {
    const double n = static_cast<double>(state.agents.size());
    return n * (n - 1.0);
  }
}

double nearest_obstacle_distance(const WorldConfig&, const EpisodeState& state, std::size_t agent) {
  double best = kNoObstacleDistance;
  for (const auto& o : state.obstacles)
    best = std::min(best, distance(state.agents[agent].position, o.position));
  return best;
}

Observation observe(const WorldConfig& config, const EpisodeState& state, std::size_t agent) {
  if (agent >= state.agents.size()) throw InputError("observe: agent index out of range");
  const AgentState& a = state.agents[agent];
  const Vec2 slot = config.goal_slots(state.goal)[agent];
  Observation obs;
  const Vec2 g = rotate_into(slot - a.position, a.heading);
  obs.agent = {g.x, g.y, norm(a.velocity), a.heading, current_formation_error(config, state)};

  struct Seen {
    double dist;
    std::size_t index;
  };
  std::vector<Seen> seen;
  for (std::size_t k = 0; k < state.obstacles.size(); ++k) {
    const double d = distance(state.obstacles[k].position, a.position);
    if (d <= config.sensing_radius) seen.push_back({d, k});
  }
  std::sort(seen.begin(), seen.end(), [](const Seen& l, const Seen& r) {
    return l.dist != r.dist ? l.dist < r.dist : l.index < r.index;
  });
  obs.obstacles.reserve(seen.size());
  for (const Seen& s : seen) {
    const ObstacleState& o = state.obstacles[s.index];
    const Vec2 p = rotate_into(o.position - a.position, a.heading);
    const Vec2 v = (o.position - o.previous_position) * (1.0 / config.dt);
    obs.obstacles.push_back({p.x, p.y, v.x, v.y});
  }
  return obs;
}

TraceStep make_trace_step(const WorldConfig& config, const EpisodeState& state,
                          const TerminationFlags& flags) {
  TraceStep s;
  s.t = state.t;
  for (const auto& a : state.agents) {
    s.positions.push_back(a.position);
    s.velocities.push_back(a.velocity);
    s.headings.push_back(a.heading);
  }
  for (const auto& o : state.obstacles) s.obstacle_positions.push_back(o.position);
  s.formation_error = current_formation_error(config, state);
  s.collision = flags.any_collision;
  s.goal_reached = flags.goal_reached && !flags.any_collision;
  s.timeout = flags.timeout && !flags.any_collision && !flags.goal_reached;
  return s;
}

// ---- JSON ----------------------------------------------------------------

namespace {

using nlohmann::json;

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }

Vec2 vec_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ConfigError(std::string(what) + ": expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<Vec2> vecs_from(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + ": expected a list of [x, y]");
  std::vector<Vec2> out;
  for (const auto& e : j) out.push_back(vec_from(e, what));
  return out;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
T num(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
  if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError(std::string("'") + key + "' must be a nonnegative integer");
  }
  return v.get<T>();
}

ObstacleScript obstacle_from(const json& j) {
  check_keys(j, {"motion", "position", "velocity", "bounds", "waypoints", "speed", "randomize"},
             "obstacle");
  ObstacleScript o;
  const std::string motion = j.value("motion", "static");
  if (motion == "static")
    o.motion = ObstacleScript::Motion::Static;
  else if (motion == "bounce")
    o.motion = ObstacleScript::Motion::Bounce;
  else if (motion == "loop")
    o.motion = ObstacleScript::Motion::WaypointLoop;
  else
    throw ConfigError("obstacle: unknown motion '" + motion + "'");
  o.initial_position = vec_from(j.at("position"), "obstacle.position");
  if (j.contains("velocity")) o.velocity = vec_from(j["velocity"], "obstacle.velocity");
  if (j.contains("bounds")) {
    auto b = vecs_from(j["bounds"], "obstacle.bounds");
    if (b.size() != 2) throw ConfigError("obstacle.bounds: expected [[x0,y0],[x1,y1]]");
    o.bounds_min = b[0];
    o.bounds_max = b[1];
  }
  if (j.contains("waypoints")) o.waypoints = vecs_from(j["waypoints"], "obstacle.waypoints");
  if (j.contains("speed")) o.speed = num<double>(j, "speed");
  if (j.contains("randomize")) o.randomize = j.at("randomize").get<bool>();
  return o;
}

json obstacle_to(const ObstacleScript& o) {
  json j;
  switch (o.motion) {
    case ObstacleScript::Motion::Static: j["motion"] = "static"; break;
    case ObstacleScript::Motion::Bounce: j["motion"] = "bounce"; break;
    case ObstacleScript::Motion::WaypointLoop: j["motion"] = "loop"; break;
  }
  j["position"] = vec_json(o.initial_position);
  if (o.motion == ObstacleScript::Motion::Bounce) {
    j["velocity"] = vec_json(o.velocity);
    j["bounds"] = json::array({vec_json(o.bounds_min), vec_json(o.bounds_max)});
  }
  if (o.motion == ObstacleScript::Motion::WaypointLoop) {
    j["waypoints"] = json::array();
    for (Vec2 w : o.waypoints) j["waypoints"].push_back(vec_json(w));
    j["speed"] = o.speed;
  }
  j["randomize"] = o.randomize;
  return j;
}

}  // namespace

void to_json(nlohmann::json& j, const TraceStep& s) {
  json agents = json::array();
  for (std::size_t i = 0; i < s.positions.size(); ++i)
    agents.push_back({s.positions[i].x, s.positions[i].y, s.velocities[i].x, s.velocities[i].y,
                      s.headings[i]});
  json obstacles = json::array();
  for (Vec2 p : s.obstacle_positions) obstacles.push_back(vec_json(p));
  j = json{{"t", s.t},
           {"agents", agents},
           {"obstacles", obstacles},
           {"formation_error", s.formation_error},
           {"collision", s.collision},
           {"goal_reached", s.goal_reached},
           {"timeout", s.timeout}};
}

void from_json(const nlohmann::json& j, TraceStep& s) {
  try {
    s = TraceStep{};
    s.t = j.at("t").get<std::size_t>();
    for (const auto& a : j.at("agents")) {
      if (a.size() != 5) throw InputError("trace: agent record must be [x, y, vx, vy, heading]");
      s.positions.push_back({a[0].get<double>(), a[1].get<double>()});
      s.velocities.push_back({a[2].get<double>(), a[3].get<double>()});
      s.headings.push_back(a[4].get<double>());
    }
    for (const auto& o : j.at("obstacles")) s.obstacle_positions.push_back(vec_from(o, "trace obstacle"));
    s.formation_error = j.at("formation_error").get<double>();
    s.collision = j.at("collision").get<bool>();
    s.goal_reached = j.at("goal_reached").get<bool>();
    s.timeout = j.at("timeout").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed trace record: ") + e.what());
  } catch (const ConfigError& e) {
    throw InputError(std::string("malformed trace record: ") + e.what());
  }
}

WorldConfig world_from_json(const nlohmann::json& j) {
  check_keys(j,
             {"preset", "world_size", "num_agents", "agent_radius", "obstacle_radius",
              "max_speed_agent", "max_speed_obstacle", "dt", "goal", "goal_tolerance",
              "start_positions", "start_headings", "start_jitter", "obstacle_jitter", "goal_spread", "obstacles",
              "sensing_radius", "max_steps", "formation"},
             "world");
  try {
    WorldConfig c = make_preset(j.value("preset", "simple"));
    if (j.contains("world_size")) c.world_size = vec_from(j["world_size"], "world_size");
    if (j.contains("num_agents")) c.num_agents = num<std::size_t>(j, "num_agents");
    if (j.contains("agent_radius")) c.agent_radius = num<double>(j, "agent_radius");
    if (j.contains("obstacle_radius")) c.obstacle_radius = num<double>(j, "obstacle_radius");
    if (j.contains("max_speed_agent")) c.max_speed_agent = num<double>(j, "max_speed_agent");
    if (j.contains("max_speed_obstacle")) c.max_speed_obstacle = num<double>(j, "max_speed_obstacle");
    if (j.contains("dt")) c.dt = num<double>(j, "dt");
    if (j.contains("goal")) c.goal = vec_from(j["goal"], "goal");
    if (j.contains("goal_tolerance")) c.goal_tolerance = num<double>(j, "goal_tolerance");
    if (j.contains("start_positions")) c.start_positions = vecs_from(j["start_positions"], "start_positions");
    if (j.contains("start_headings")) c.start_headings = j["start_headings"].get<std::vector<double>>();
    if (j.contains("start_jitter")) c.start_jitter = num<double>(j, "start_jitter");
    if (j.contains("obstacle_jitter")) c.obstacle_jitter = num<double>(j, "obstacle_jitter");
    if (j.contains("goal_spread")) c.goal_spread = num<double>(j, "goal_spread");
    if (j.contains("obstacles")) {
      c.obstacles.clear();
      for (const auto& o : j["obstacles"]) c.obstacles.push_back(obstacle_from(o));
    }
    if (j.contains("sensing_radius")) c.sensing_radius = num<double>(j, "sensing_radius");
    if (j.contains("max_steps")) c.max_steps = num<std::size_t>(j, "max_steps");
    if (j.contains("formation"))
      c.formation = formation::FormationSpec(vecs_from(j["formation"], "formation"));
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("world config: ") + e.what());
  } catch (const InputError& e) {
    throw ConfigError(std::string("world config: ") + e.what());
  }
}

nlohmann::json world_to_json(const WorldConfig& c) {
  json j;
  j["world_size"] = vec_json(c.world_size);
  j["num_agents"] = c.num_agents;
  j["agent_radius"] = c.agent_radius;
  j["obstacle_radius"] = c.obstacle_radius;
  j["max_speed_agent"] = c.max_speed_agent;
  j["max_speed_obstacle"] = c.max_speed_obstacle;
  j["dt"] = c.dt;
  j["goal"] = vec_json(c.goal);
  j["goal_tolerance"] = c.goal_tolerance;
  j["start_positions"] = json::array();
  for (Vec2 p : c.start_positions) j["start_positions"].push_back(vec_json(p));
  if (!c.start_headings.empty()) j["start_headings"] = c.start_headings;
  j["start_jitter"] = c.start_jitter;
  j["obstacle_jitter"] = c.obstacle_jitter;
  j["goal_spread"] = c.goal_spread;
  j["obstacles"] = json::array();
  for (const auto& o : c.obstacles) j["obstacles"].push_back(obstacle_to(o));
  j["sensing_radius"] = c.sensing_radius;
  j["max_steps"] = c.max_steps;
  j["formation"] = json::array();
  for (Vec2 p : c.formation.desired_positions()) j["formation"].push_back(vec_json(p));
  return j;
}

}  // namespace fcca::sim
