#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mapex/errors.hpp"
#include "mapex/rng.hpp"

namespace mapex {

// --- Basic geometry ---

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

inline int manhattan(const Cell& a, const Cell& b) {
  return std::abs(a.row - b.row) + std::abs(a.col - b.col);
}

inline int sgn(int x) { return (x > 0) - (x < 0); }

// --- Actions ---
//
// Index order is load-bearing: ties in expert policies and tree leaves break
// toward the smallest index. Movers use 0..4; prey additionally use 5..8
// (two-cell moves).

inline constexpr int kStay = 0;
inline constexpr std::array<Cell, 9> kActionDeltas = {{
    {0, 0}, {-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-2, 0}, {2, 0}, {0, -2}, {0, 2},
}};

inline const std::array<std::string, 9>& action_names() {
  static const std::array<std::string, 9> names = {
      "stay", "up", "down", "left", "right", "up2", "down2", "left2", "right2"};
  return names;
}

inline int action_move_length(int a) { return a == 0 ? 0 : (a < 5 ? 1 : 2); }

// --- Environment configuration ---

enum class EnvKind { PhysicalDeception, CooperativeNavigation, PredatorPrey };

inline std::string env_kind_name(EnvKind k) {
  switch (k) {
    case EnvKind::PhysicalDeception: return "physical_deception";
    case EnvKind::CooperativeNavigation: return "cooperative_navigation";
    case EnvKind::PredatorPrey: return "predator_prey";
  }
  return "?";
}

inline EnvKind env_kind_from_name(const std::string& s) {
  if (s == "physical_deception") return EnvKind::PhysicalDeception;
  if (s == "cooperative_navigation") return EnvKind::CooperativeNavigation;
  if (s == "predator_prey") return EnvKind::PredatorPrey;
  throw ConfigError("unknown environment kind '" + s + "'");
}

struct EnvConfig {
  EnvKind kind = EnvKind::PhysicalDeception;
  int grid_size = 5;
  int horizon = 25;
  // Role populations. Meaningful keys per kind:
  //   physical_deception: defenders (adversary count is fixed at 1)
  //   cooperative_navigation: agents
  //   predator_prey: predators, prey (landmark count is fixed at 2)
  std::map<std::string, int> roles;
  std::uint64_t seed = 0;
  int epsilon_cells = 0;
  double discount = 0.95;
};

enum class Role { Defender, Adversary, Navigator, Predator, Prey };

// Validated environment with derived structure. Agents come first in every
// per-entity vector, landmarks (targets or obstacles) after them.
struct Env {
  EnvConfig cfg;
  int n_agents = 0;
  std::vector<Role> agent_roles;
  int n_landmarks = 0;       // targets in the first two kinds, obstacles in the third
  bool landmarks_block = false;
  std::vector<std::vector<int>> teams;  // team id -> agent indices
  std::vector<int> team_of;             // agent -> team id

  int role_count(Role r) const {
    int n = 0;
    for (Role a : agent_roles) n += (a == r);
    return n;
  }
  int n_actions(int agent) const {
    return agent_roles[agent] == Role::Prey ? 9 : 5;
  }
  int interior_cells() const {
    int inner = cfg.grid_size - 2;
    return inner * inner;
  }
};

inline int role_value(const std::map<std::string, int>& roles,
                      const std::string& key, int fallback) {
  auto it = roles.find(key);
  return it == roles.end() ? fallback : it->second;
}

inline Env make_env(const EnvConfig& cfg) {
  if (cfg.grid_size < 3) throw ConfigError("grid_size must be at least 3");
  if (cfg.horizon < 1) throw ConfigError("horizon must be at least 1");
  if (!(cfg.discount > 0.0 && cfg.discount <= 1.0))
    throw ConfigError("discount must be in (0, 1]");
  if (cfg.epsilon_cells < 0) throw ConfigError("epsilon_cells must be >= 0");

  Env env;
  env.cfg = cfg;
  switch (cfg.kind) {
    case EnvKind::PhysicalDeception: {
      int n = role_value(cfg.roles, "defenders", 2);
      if (n < 1) throw ConfigError("physical_deception needs at least 1 defender");
      for (int i = 0; i < n; ++i) env.agent_roles.push_back(Role::Defender);
      env.agent_roles.push_back(Role::Adversary);
      env.n_landmarks = n;  // one target per defender
      env.landmarks_block = false;
      std::vector<int> defenders(n);
      for (int i = 0; i < n; ++i) defenders[i] = i;
      env.teams = {defenders, {n}};
      break;
    }
    case EnvKind::CooperativeNavigation: {
      int n = role_value(cfg.roles, "agents", 3);
      if (n < 1) throw ConfigError("cooperative_navigation needs at least 1 agent");
      for (int i = 0; i < n; ++i) env.agent_roles.push_back(Role::Navigator);
      env.n_landmarks = n;
      env.landmarks_block = false;
      std::vector<int> all(n);
      for (int i = 0; i < n; ++i) all[i] = i;
      env.teams = {all};
      break;
    }
    case EnvKind::PredatorPrey: {
      int k = role_value(cfg.roles, "predators", 2);
      int m = role_value(cfg.roles, "prey", 2);
      if (k < 1 || m < 1) throw ConfigError("predator_prey needs predators and prey");
      for (int i = 0; i < k; ++i) env.agent_roles.push_back(Role::Predator);
      for (int i = 0; i < m; ++i) env.agent_roles.push_back(Role::Prey);
      env.n_landmarks = 2;
      env.landmarks_block = true;
      std::vector<int> preds(k), prey(m);
      for (int i = 0; i < k; ++i) preds[i] = i;
      for (int i = 0; i < m; ++i) prey[i] = k + i;
      env.teams = {preds, prey};
      break;
    }
  }
  env.n_agents = static_cast<int>(env.agent_roles.size());
  env.team_of.assign(env.n_agents, 0);
  for (int t = 0; t < static_cast<int>(env.teams.size()); ++t)
    for (int a : env.teams[t]) env.team_of[a] = t;

  // Placement feasibility: landmarks live on distinct interior cells, agents
  // on distinct cells not occupied by landmarks.
  if (env.interior_cells() < env.n_landmarks)
    throw ConfigError("grid interior too small for " +
                      std::to_string(env.n_landmarks) + " landmarks");
  int total = cfg.grid_size * cfg.grid_size;
  if (total - env.n_landmarks < env.n_agents)
    throw ConfigError("grid too small to place all entities on distinct cells");
  return env;
}

// --- State ---

struct JointState {
  std::vector<Cell> positions;   // agents then landmarks
  std::vector<Cell> velocities;  // per agent, predator_prey only (last move)
  int true_target_index = -1;    // physical_deception only
  int timestep = 0;
};

using JointAction = std::vector<int>;

inline Cell agent_pos(const JointState& s, int agent) { return s.positions[agent]; }
inline Cell landmark_pos(const Env& env, const JointState& s, int idx) {
  return s.positions[env.n_agents + idx];
}

inline JointState reset(const Env& env, std::uint64_t episode_seed) {
  auto rng = make_rng({env.cfg.seed, 0x9a75f3c1u, episode_seed});
  int g = env.cfg.grid_size;

  std::vector<Cell> interior;
  for (int r = 1; r < g - 1; ++r)
    for (int c = 1; c < g - 1; ++c) interior.push_back({r, c});
  if (static_cast<int>(interior.size()) < env.n_landmarks)
    throw ConfigError("grid interior too small for landmarks");
  shuffle_inplace(interior, rng);
  std::vector<Cell> landmarks(interior.begin(), interior.begin() + env.n_landmarks);

  std::vector<Cell> open;
  for (int r = 0; r < g; ++r)
    for (int c = 0; c < g; ++c) {
      Cell cell{r, c};
      if (std::find(landmarks.begin(), landmarks.end(), cell) == landmarks.end())
        open.push_back(cell);
    }
  if (static_cast<int>(open.size()) < env.n_agents)
    throw ConfigError("grid too small to place all entities on distinct cells");
  shuffle_inplace(open, rng);

  JointState s;
  s.positions.assign(open.begin(), open.begin() + env.n_agents);
  s.positions.insert(s.positions.end(), landmarks.begin(), landmarks.end());
  if (env.cfg.kind == EnvKind::PredatorPrey)
    s.velocities.assign(env.n_agents, Cell{0, 0});
  if (env.cfg.kind == EnvKind::PhysicalDeception)
    s.true_target_index = static_cast<int>(bounded(rng, env.n_landmarks));
  s.timestep = 0;
  return s;
}

// --- Events ---

enum class EventKind { TargetCovered, AdversaryReachedTrue, Collision, PredatorTouch };

struct Event {
  EventKind kind;
  int a = -1;  // target index, or first agent of a pair
  int b = -1;  // second agent of a pair
  friend bool operator==(const Event&, const Event&) = default;
};

struct StepOutcome {
  JointState next_state;
  std::vector<double> rewards;  // per agent
  std::vector<Event> events;    // canonical order: kind, then indices ascending
};

// --- Step ---

inline bool in_grid(const Env& env, const Cell& c) {
  return c.row >= 0 && c.col >= 0 && c.row < env.cfg.grid_size &&
         c.col < env.cfg.grid_size;
}

inline StepOutcome step(const Env& env, const JointState& state,
                        const JointAction& actions) {
  if (state.timestep >= env.cfg.horizon)
    throw EpisodeOver("step at timestep " + std::to_string(state.timestep) +
                      " of horizon " + std::to_string(env.cfg.horizon));
  if (static_cast<int>(actions.size()) != env.n_agents)
    throw ConfigError("joint action arity mismatch");

  StepOutcome out;
  out.next_state = state;
  JointState& next = out.next_state;

  // Simultaneous moves; invalid destinations (off grid, or a blocking
  // landmark) cancel the whole move.
  for (int i = 0; i < env.n_agents; ++i) {
    int a = actions[i];
    if (a < 0 || a >= env.n_actions(i))
      throw ConfigError("action " + std::to_string(a) + " out of range for agent " +
                        std::to_string(i));
    Cell from = state.positions[i];
    Cell dest{from.row + kActionDeltas[a].row, from.col + kActionDeltas[a].col};
    bool blocked = !in_grid(env, dest);
    if (!blocked && env.landmarks_block) {
      for (int l = 0; l < env.n_landmarks; ++l)
        if (dest == landmark_pos(env, state, l)) blocked = true;
    }
    if (blocked) dest = from;
    next.positions[i] = dest;
    if (!next.velocities.empty())
      next.velocities[i] = {dest.row - from.row, dest.col - from.col};
  }
  next.timestep = state.timestep + 1;

  const int eps = env.cfg.epsilon_cells;

  // Events, in canonical order.
  if (env.cfg.kind == EnvKind::PhysicalDeception) {
    for (int t = 0; t < env.n_landmarks; ++t) {
      for (int d : env.teams[0]) {
        if (manhattan(next.positions[d], landmark_pos(env, next, t)) <= eps) {
          out.events.push_back({EventKind::TargetCovered, t, -1});
          break;
        }
      }
    }
    int adv = env.teams[1][0];
    if (manhattan(next.positions[adv],
                  landmark_pos(env, next, next.true_target_index)) <= eps)
      out.events.push_back({EventKind::AdversaryReachedTrue, -1, -1});
  }
  for (int i = 0; i < env.n_agents; ++i)
    for (int j = i + 1; j < env.n_agents; ++j)
      if (next.positions[i] == next.positions[j])
        out.events.push_back({EventKind::Collision, i, j});
  if (env.cfg.kind == EnvKind::PredatorPrey) {
    for (int p : env.teams[0])
      for (int q : env.teams[1])
        if (next.positions[p] == next.positions[q])
          out.events.push_back({EventKind::PredatorTouch, p, q});
  }

  // Rewards.
  out.rewards.assign(env.n_agents, 0.0);
  switch (env.cfg.kind) {
    case EnvKind::PhysicalDeception: {
      int adv = env.teams[1][0];
      int adv_dist = manhattan(next.positions[adv],
                               landmark_pos(env, next, next.true_target_index));
      int covered = 0;
      for (const Event& e : out.events) covered += (e.kind == EventKind::TargetCovered);
      bool all_covered = covered == env.n_landmarks;
      for (int d : env.teams[0])
        out.rewards[d] = static_cast<double>(adv_dist) + (all_covered ? 1.0 : 0.0);
      out.rewards[adv] =
          -static_cast<double>(adv_dist) + (adv_dist <= eps ? 5.0 : 0.0);
      break;
    }
    case EnvKind::CooperativeNavigation: {
      double total = 0.0;
      for (int t = 0; t < env.n_landmarks; ++t) {
        int best = INT32_MAX;
        for (int i = 0; i < env.n_agents; ++i)
          best = std::min(best, manhattan(next.positions[i], landmark_pos(env, next, t)));
        total += best;
      }
      int collisions = 0;
      for (const Event& e : out.events) collisions += (e.kind == EventKind::Collision);
      double shared = -total - static_cast<double>(collisions);
      for (int i = 0; i < env.n_agents; ++i) out.rewards[i] = shared;
      break;
    }
    case EnvKind::PredatorPrey: {
      int touches = 0;
      for (const Event& e : out.events) touches += (e.kind == EventKind::PredatorTouch);
      for (int p : env.teams[0]) out.rewards[p] = 10.0 * touches;
      for (int q : env.teams[1]) out.rewards[q] = -10.0 * touches;
      break;
    }
  }
  return out;
}

// --- Observations ---
//
// physical_deception / cooperative_navigation: integer offsets to every
// target and every other agent; defenders additionally see the offset to the
// true target. predator_prey: own position and velocity raw, everything else
// sign-binarized; prey velocities are the only velocities exposed to others.

using Observation = std::vector<double>;

inline Observation observe(const Env& env, const JointState& s, int agent) {
  Observation o;
  Cell me = s.positions[agent];
  if (env.cfg.kind == EnvKind::PredatorPrey) {
    Cell vel = s.velocities[agent];
    o.push_back(me.row);
    o.push_back(me.col);
    o.push_back(vel.row);
    o.push_back(vel.col);
    for (int l = 0; l < env.n_landmarks; ++l) {
      Cell lm = landmark_pos(env, s, l);
      o.push_back(sgn(lm.row - me.row));
      o.push_back(sgn(lm.col - me.col));
    }
    for (int j = 0; j < env.n_agents; ++j) {
      if (j == agent) continue;
      o.push_back(sgn(s.positions[j].row - me.row));
      o.push_back(sgn(s.positions[j].col - me.col));
    }
    for (int j : env.teams[1]) {  // prey velocities only
      if (j == agent) continue;
      o.push_back(sgn(s.velocities[j].row - vel.row));
      o.push_back(sgn(s.velocities[j].col - vel.col));
    }
    int other_team = env.team_of[agent] == 0 ? 1 : 0;
    for (int t : {other_team, env.team_of[agent]}) {
      const auto& members = env.teams[t];
      for (std::size_t p = 0; p < members.size(); ++p)
        for (std::size_t q = p + 1; q < members.size(); ++q) {
          Cell cp = s.positions[members[p]], cq = s.positions[members[q]];
          o.push_back(sgn(cp.row - cq.row));
          o.push_back(sgn(cp.col - cq.col));
        }
    }
    return o;
  }
  for (int t = 0; t < env.n_landmarks; ++t) {
    Cell lm = landmark_pos(env, s, t);
    o.push_back(lm.row - me.row);
    o.push_back(lm.col - me.col);
  }
  for (int j = 0; j < env.n_agents; ++j) {
    if (j == agent) continue;
    o.push_back(s.positions[j].row - me.row);
    o.push_back(s.positions[j].col - me.col);
  }
  if (env.agent_roles[agent] == Role::Defender) {
    Cell tt = landmark_pos(env, s, s.true_target_index);
    o.push_back(tt.row - me.row);
    o.push_back(tt.col - me.col);
  }
  return o;
}

inline std::vector<std::string> observation_feature_names(const Env& env, int agent) {
  std::vector<std::string> n;
  if (env.cfg.kind == EnvKind::PredatorPrey) {
    n = {"self_row", "self_col", "self_vrow", "self_vcol"};
    for (int l = 0; l < env.n_landmarks; ++l) {
      n.push_back("landmark" + std::to_string(l) + "_sgn_drow");
      n.push_back("landmark" + std::to_string(l) + "_sgn_dcol");
    }
    for (int j = 0; j < env.n_agents; ++j) {
      if (j == agent) continue;
      n.push_back("agent" + std::to_string(j) + "_sgn_drow");
      n.push_back("agent" + std::to_string(j) + "_sgn_dcol");
    }
    for (int j : env.teams[1]) {
      if (j == agent) continue;
      n.push_back("agent" + std::to_string(j) + "_sgn_dvrow");
      n.push_back("agent" + std::to_string(j) + "_sgn_dvcol");
    }
    int other_team = env.team_of[agent] == 0 ? 1 : 0;
    for (int t : {other_team, env.team_of[agent]}) {
      std::string tag = t == env.team_of[agent] ? "team" : "oppteam";
      const auto& members = env.teams[t];
      for (std::size_t p = 0; p < members.size(); ++p)
        for (std::size_t q = p + 1; q < members.size(); ++q) {
          std::string pair = tag + "_pair" + std::to_string(members[p]) + "_" +
                             std::to_string(members[q]);
          n.push_back(pair + "_sgn_drow");
          n.push_back(pair + "_sgn_dcol");
        }
    }
    return n;
  }
  for (int t = 0; t < env.n_landmarks; ++t) {
    n.push_back("target" + std::to_string(t) + "_drow");
    n.push_back("target" + std::to_string(t) + "_dcol");
  }
  for (int j = 0; j < env.n_agents; ++j) {
    if (j == agent) continue;
    n.push_back("agent" + std::to_string(j) + "_drow");
    n.push_back("agent" + std::to_string(j) + "_dcol");
  }
  if (env.agent_roles[agent] == Role::Defender) {
    n.push_back("true_target_drow");
    n.push_back("true_target_dcol");
  }
  return n;
}

// First observation index whose value is sign-binarized (predator_prey only).
inline int first_binarized_feature(const Env& env) {
  return env.cfg.kind == EnvKind::PredatorPrey ? 4 : -1;
}

// --- Team metrics ---
//
// physical_deception team 0: 1 if every target is covered simultaneously at
// some timestep, else 0. Team 1: 1 if the adversary ever reaches the true
// target. cooperative_navigation: sum over targets of the closest agent's
// distance at the final step (lower is better). predator_prey: total touch
// count for either team (predators want it high, prey low).

inline bool metric_higher_is_better(const Env& env, int team) {
  switch (env.cfg.kind) {
    case EnvKind::PhysicalDeception: return true;
    case EnvKind::CooperativeNavigation: return false;
    case EnvKind::PredatorPrey: return team == 0;
  }
  return true;
}

inline double team_metric(const Env& env, const std::vector<StepOutcome>& trace,
                          int team) {
  if (static_cast<int>(trace.size()) != env.cfg.horizon)
    throw IncompleteTrace("trace has " + std::to_string(trace.size()) +
                          " steps, horizon is " + std::to_string(env.cfg.horizon));
  switch (env.cfg.kind) {
    case EnvKind::PhysicalDeception: {
      if (team == 0) {
        for (const StepOutcome& out : trace) {
          int covered = 0;
          for (const Event& e : out.events)
            covered += (e.kind == EventKind::TargetCovered);
          if (covered == env.n_landmarks) return 1.0;
        }
        return 0.0;
      }
      for (const StepOutcome& out : trace)
        for (const Event& e : out.events)
          if (e.kind == EventKind::AdversaryReachedTrue) return 1.0;
      return 0.0;
    }
    case EnvKind::CooperativeNavigation: {
      const JointState& fin = trace.back().next_state;
      double total = 0.0;
      for (int t = 0; t < env.n_landmarks; ++t) {
        int best = INT32_MAX;
        for (int i = 0; i < env.n_agents; ++i)
          best = std::min(best, manhattan(fin.positions[i], landmark_pos(env, fin, t)));
        total += best;
      }
      return total;
    }
    case EnvKind::PredatorPrey: {
      int touches = 0;
      for (const StepOutcome& out : trace)
        for (const Event& e : out.events)
          touches += (e.kind == EventKind::PredatorTouch);
      return static_cast<double>(touches);
    }
  }
  return 0.0;
}

// Per-step contribution to the team metric, used by exact best-response
// search. Indicator metrics saturate via max, additive metrics via sum.
inline bool metric_is_indicator(const Env& env) {
  return env.cfg.kind == EnvKind::PhysicalDeception;
}

inline double metric_step_gain(const Env& env, const StepOutcome& out, int team) {
  switch (env.cfg.kind) {
    case EnvKind::PhysicalDeception: {
      if (team == 0) {
        int covered = 0;
        for (const Event& e : out.events)
          covered += (e.kind == EventKind::TargetCovered);
        return covered == env.n_landmarks ? 1.0 : 0.0;
      }
      for (const Event& e : out.events)
        if (e.kind == EventKind::AdversaryReachedTrue) return 1.0;
      return 0.0;
    }
    case EnvKind::CooperativeNavigation:
      return 0.0;  // final-state metric, no per-step form
    case EnvKind::PredatorPrey: {
      int touches = 0;
      for (const Event& e : out.events)
        touches += (e.kind == EventKind::PredatorTouch);
      return static_cast<double>(touches);
    }
  }
  return 0.0;
}

}  // namespace mapex
