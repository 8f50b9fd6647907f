#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "mapex/env.hpp"
#include "mapex/expert.hpp"
#include "mapex/rng.hpp"

namespace mapex {

// Canonical textual form of a joint state, used as cache key and as input to
// seed derivation. Covers every field that influences the dynamics.
inline std::string state_digest(const Env& env, const JointState& s) {
  std::string d;
  d.reserve(8 * s.positions.size() + 16);
  for (const Cell& c : s.positions) {
    d += std::to_string(c.row);
    d += ',';
    d += std::to_string(c.col);
    d += ';';
  }
  d += '|';
  for (const Cell& v : s.velocities) {
    d += std::to_string(v.row);
    d += ',';
    d += std::to_string(v.col);
    d += ';';
  }
  d += '|';
  d += std::to_string(s.true_target_index);
  d += '|';
  d += std::to_string(s.timestep);
  (void)env;
  return d;
}

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct OracleConfig {
  int mc_samples = 16;
  int enumeration_cap = 64;
  std::uint64_t seed = 0;
  bool cache = true;
};

// Which other agents the gap expectation ranges over. Agents outside the set
// act per their expert policies inside every evaluated term.
struct OthersSpec {
  enum Mode { AllOthers, OutsideTeam } mode = AllOthers;
  std::vector<int> team;  // OutsideTeam only: the agents held at expert play
};

// Exact finite-horizon action values under the expert profile, computed by a
// single deterministic rollout per query. Values condition on the state's
// timestep: the return integrates rewards from there to the horizon.
//
// Instances are not shared across threads; parallel callers hold one oracle
// (and cache) per worker.
class QOracle {
 public:
  QOracle(const Env& env, ExpertProfile profile, OracleConfig cfg = {})
      : env_(env), profile_(std::move(profile)), cfg_(cfg) {}

  const Env& env() const { return env_; }
  const ExpertProfile& profile() const { return profile_; }

  // Discounted return for `agent` from `state`, executing `joint` once and
  // the expert profile afterwards.
  double q_value(const JointState& state, int agent, const JointAction& joint) const {
    if (state.timestep >= env_.cfg.horizon)
      throw EpisodeOver("q_value past horizon");
    std::string key;
    if (cfg_.cache) {
      key = state_digest(env_, state);
      key += '#';
      key += std::to_string(agent);
      key += '#';
      for (int a : joint) {
        key += std::to_string(a);
        key += ',';
      }
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    double value = rollout_return(state, agent, joint);
    if (cfg_.cache) cache_.emplace(std::move(key), value);
    return value;
  }

  // Expert-play return; zero on an empty remaining horizon.
  double v_value(const JointState& state, int agent) const {
    if (state.timestep >= env_.cfg.horizon) return 0.0;
    return q_value(state, agent, expert_joint_action(profile_, env_, state));
  }

  // Advantage-style gap: how much worse the worst own action is than expert
  // play, averaged over the other agents' joint actions. The action products
  // are enumerated exactly up to enumeration_cap (and whenever mc_samples
  // covers the whole product); otherwise mc_samples seeded-uniform draws.
  double expected_q_gap(const JointState& state, int agent,
                        const OthersSpec& others) const {
    if (state.timestep >= env_.cfg.horizon)
      throw EpisodeOver("expected_q_gap past horizon");
    std::vector<int> varying;
    for (int j = 0; j < env_.n_agents; ++j) {
      if (j == agent) continue;
      if (others.mode == OthersSpec::OutsideTeam) {
        bool in_team = false;
        for (int t : others.team) in_team = in_team || (t == j);
        if (in_team) continue;
      }
      varying.push_back(j);
    }

    JointAction base = expert_joint_action(profile_, env_, state);
    if (varying.empty()) return gap_for(state, agent, base);

    std::uint64_t product = 1;
    bool overflow = false;
    for (int j : varying) {
      product *= static_cast<std::uint64_t>(env_.n_actions(j));
      if (product > (1ULL << 40)) {
        overflow = true;
        break;
      }
    }
    bool enumerate = !overflow &&
                     (product <= static_cast<std::uint64_t>(cfg_.enumeration_cap) ||
                      product <= static_cast<std::uint64_t>(cfg_.mc_samples));
    double total = 0.0;
    if (enumerate) {
      std::vector<int> combo(varying.size(), 0);
      for (std::uint64_t it = 0; it < product; ++it) {
        JointAction joint = base;
        for (std::size_t k = 0; k < varying.size(); ++k) joint[varying[k]] = combo[k];
        total += gap_for(state, agent, joint);
        for (std::size_t k = 0; k < varying.size(); ++k) {
          if (++combo[k] < env_.n_actions(varying[k])) break;
          combo[k] = 0;
        }
      }
      return total / static_cast<double>(product);
    }
    auto rng = make_rng({cfg_.seed, 0x6a11u, fnv1a64(state_digest(env_, state)),
                         static_cast<std::uint64_t>(agent),
                         static_cast<std::uint64_t>(others.mode)});
    for (int sample = 0; sample < cfg_.mc_samples; ++sample) {
      JointAction joint = base;
      for (int j : varying)
        joint[j] = static_cast<int>(bounded(rng, env_.n_actions(j)));
      total += gap_for(state, agent, joint);
    }
    return total / static_cast<double>(cfg_.mc_samples);
  }

  std::size_t cache_size() const { return cache_.size(); }
  void clear_cache() const { cache_.clear(); }

 private:
  double rollout_return(const JointState& state, int agent,
                        const JointAction& joint) const {
    StepOutcome out = step(env_, state, joint);
    double total = out.rewards[agent];
    double disc = 1.0;
    JointState cur = std::move(out.next_state);
    while (cur.timestep < env_.cfg.horizon) {
      StepOutcome next = step(env_, cur, expert_joint_action(profile_, env_, cur));
      disc *= env_.cfg.discount;
      total += disc * next.rewards[agent];
      cur = std::move(next.next_state);
    }
    return total;
  }

  // Gap for one fixed assignment of the varying agents: expert own action vs
  // the worst own action.
  double gap_for(const JointState& state, int agent, const JointAction& joint) const {
    JointAction probe = joint;
    probe[agent] = expert_act(profile_, env_, state, agent);
    double expert_term = q_value(state, agent, probe);
    double worst = std::numeric_limits<double>::infinity();
    for (int a = 0; a < env_.n_actions(agent); ++a) {
      probe[agent] = a;
      worst = std::min(worst, q_value(state, agent, probe));
    }
    return expert_term - worst;
  }

  const Env& env_;
  ExpertProfile profile_;
  OracleConfig cfg_;
  mutable std::unordered_map<std::string, double> cache_;
};

}  // namespace mapex
