#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "mapex/env.hpp"

namespace mapex {

// --- Movement primitives ---

// Greedy single step toward a goal: move along the axis with the larger
// remaining distance, ties prefer the row axis. Already there -> stay.
inline int greedy_move_toward(const Cell& from, const Cell& to) {
  int drow = to.row - from.row;
  int dcol = to.col - from.col;
  if (drow == 0 && dcol == 0) return 0;
  if (std::abs(drow) >= std::abs(dcol) && drow != 0)
    return drow < 0 ? 1 : 2;  // up : down
  return dcol < 0 ? 3 : 4;    // left : right
}

// --- Assignment ---

// Minimum-total-distance assignment of each seeker to a distinct goal,
// by brute force over injective mappings enumerated in lexicographic order of
// the assignment vector; the first minimum wins, so ties break toward lower
// goal indices for lower-indexed seekers.
inline std::vector<int> min_cost_assignment(const std::vector<Cell>& seekers,
                                            const std::vector<Cell>& goals) {
  const int n = static_cast<int>(seekers.size());
  const int m = static_cast<int>(goals.size());
  std::vector<int> current(n, -1), best;
  std::vector<bool> used(m, false);
  int best_cost = std::numeric_limits<int>::max();
  int cost = 0;

  std::function<void(int)> rec = [&](int i) {
    if (i == n) {
      if (cost < best_cost) {
        best_cost = cost;
        best = current;
      }
      return;
    }
    for (int g = 0; g < m; ++g) {
      if (used[g]) continue;
      used[g] = true;
      current[i] = g;
      cost += manhattan(seekers[i], goals[g]);
      rec(i + 1);
      cost -= manhattan(seekers[i], goals[g]);
      used[g] = false;
    }
  };
  rec(0);
  return best;
}

// --- Scripted policies ---

namespace detail {

inline std::vector<Cell> team_positions(const Env& env, const JointState& s,
                                        int team) {
  std::vector<Cell> out;
  for (int a : env.teams[team]) out.push_back(s.positions[a]);
  return out;
}

inline std::vector<Cell> landmark_positions(const Env& env, const JointState& s) {
  std::vector<Cell> out;
  for (int l = 0; l < env.n_landmarks; ++l) out.push_back(landmark_pos(env, s, l));
  return out;
}

// Coverage roles: defenders (and navigators) jointly pick the cheapest
// one-to-one pairing with the targets and walk to their own target.
inline int cover_targets_act(const Env& env, const JointState& s, int agent,
                             int team) {
  auto seekers = team_positions(env, s, team);
  auto goals = landmark_positions(env, s);
  auto assign = min_cost_assignment(seekers, goals);
  int slot = 0;
  for (int a : env.teams[team]) {
    if (a == agent) break;
    ++slot;
  }
  return greedy_move_toward(s.positions[agent], goals[assign[slot]]);
}

inline int adversary_act(const Env& env, const JointState& s, int agent) {
  // Heads for the nearest target; the true one is hidden from it.
  Cell me = s.positions[agent];
  int best = 0, best_dist = std::numeric_limits<int>::max();
  for (int t = 0; t < env.n_landmarks; ++t) {
    int d = manhattan(me, landmark_pos(env, s, t));
    if (d < best_dist) {
      best_dist = d;
      best = t;
    }
  }
  return greedy_move_toward(me, landmark_pos(env, s, best));
}

inline int predator_act(const Env& env, const JointState& s, int agent) {
  auto seekers = team_positions(env, s, 0);
  auto goals = team_positions(env, s, 1);
  // With fewer prey than predators no one-to-one pairing exists; the cheapest
  // many-to-one mapping sends every predator to its nearest prey.
  if (seekers.size() > goals.size()) {
    Cell me = s.positions[agent];
    int best = 0, best_dist = std::numeric_limits<int>::max();
    for (std::size_t g = 0; g < goals.size(); ++g) {
      int d = manhattan(me, goals[g]);
      if (d < best_dist) {
        best_dist = d;
        best = static_cast<int>(g);
      }
    }
    return greedy_move_toward(me, goals[best]);
  }
  auto assign = min_cost_assignment(seekers, goals);
  int slot = 0;
  for (int a : env.teams[0]) {
    if (a == agent) break;
    ++slot;
  }
  return greedy_move_toward(s.positions[agent], goals[assign[slot]]);
}

inline bool destination_legal(const Env& env, const JointState& s, const Cell& dest) {
  if (!in_grid(env, dest)) return false;
  if (env.landmarks_block)
    for (int l = 0; l < env.n_landmarks; ++l)
      if (dest == landmark_pos(env, s, l)) return false;
  return true;
}

inline int prey_act(const Env& env, const JointState& s, int agent) {
  // Among legal moves, maximize the distance to the closest predator; ties
  // prefer the longer move, then the smaller action index.
  Cell me = s.positions[agent];
  int best_action = 0;
  int best_score = std::numeric_limits<int>::min();
  int best_len = -1;
  for (int a = 0; a < env.n_actions(agent); ++a) {
    Cell dest{me.row + kActionDeltas[a].row, me.col + kActionDeltas[a].col};
    if (!destination_legal(env, s, dest)) continue;
    int score = std::numeric_limits<int>::max();
    for (int p : env.teams[0]) score = std::min(score, manhattan(dest, s.positions[p]));
    int len = action_move_length(a);
    if (score > best_score || (score == best_score && len > best_len)) {
      best_score = score;
      best_len = len;
      best_action = a;
    }
  }
  return best_action;
}

}  // namespace detail

inline int scripted_expert_act(const Env& env, const JointState& s, int agent) {
  switch (env.agent_roles[agent]) {
    case Role::Defender: return detail::cover_targets_act(env, s, agent, 0);
    case Role::Navigator: return detail::cover_targets_act(env, s, agent, 0);
    case Role::Adversary: return detail::adversary_act(env, s, agent);
    case Role::Predator: return detail::predator_act(env, s, agent);
    case Role::Prey: return detail::prey_act(env, s, agent);
  }
  return 0;
}

// --- Expert profile ---

// One deterministic policy per agent. The scripted profile reads the joint
// state; tests may substitute arbitrary policies.
using AgentPolicyFn = std::function<int(const Env&, const JointState&, int)>;

struct ExpertProfile {
  std::vector<AgentPolicyFn> policies;            // one per agent
  std::vector<std::vector<int>> team_partition;   // mirrors env.teams

  static ExpertProfile scripted(const Env& env) {
    ExpertProfile p;
    p.policies.assign(env.n_agents,
                      [](const Env& e, const JointState& st, int a) {
                        return scripted_expert_act(e, st, a);
                      });
    p.team_partition = env.teams;
    return p;
  }
};

inline int expert_act(const ExpertProfile& profile, const Env& env,
                      const JointState& s, int agent) {
  return profile.policies[agent](env, s, agent);
}

inline JointAction expert_joint_action(const ExpertProfile& profile, const Env& env,
                                       const JointState& s) {
  JointAction a(env.n_agents);
  for (int i = 0; i < env.n_agents; ++i) a[i] = expert_act(profile, env, s, i);
  return a;
}

}  // namespace mapex
