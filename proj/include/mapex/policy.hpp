#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mapex/dtree.hpp"
#include "mapex/env.hpp"
#include "mapex/expert.hpp"

namespace mapex {

// A full joint policy: one deterministic action choice per agent. Tree-backed
// entries read only their own observation; expert entries read the state.
struct PolicyProfile {
  std::string label;
  std::vector<AgentPolicyFn> acts;

  static PolicyProfile from_expert(const ExpertProfile& profile,
                                   std::string label = "Expert") {
    PolicyProfile p;
    p.label = std::move(label);
    for (const AgentPolicyFn& fn : profile.policies) p.acts.push_back(fn);
    return p;
  }
};

inline AgentPolicyFn tree_actor(std::shared_ptr<const DecisionTreePolicy> tree) {
  return [tree = std::move(tree)](const Env& env, const JointState& s, int agent) {
    Observation o = observe(env, s, agent);
    return predict(*tree, o);
  };
}

// Expert profile with some agents replaced.
inline PolicyProfile with_substitutions(
    const ExpertProfile& experts,
    const std::vector<std::pair<int, AgentPolicyFn>>& subs, std::string label) {
  PolicyProfile p = PolicyProfile::from_expert(experts, std::move(label));
  for (const auto& [agent, fn] : subs) p.acts[agent] = fn;
  return p;
}

struct EpisodeTrace {
  std::vector<JointState> states;    // states before each step (s_0 .. s_{T-1})
  std::vector<JointAction> actions;  // joint action taken at each state
  std::vector<StepOutcome> outcomes;
};

inline EpisodeTrace run_episode(const Env& env, const PolicyProfile& profile,
                                std::uint64_t episode_seed) {
  EpisodeTrace trace;
  JointState s = reset(env, episode_seed);
  while (s.timestep < env.cfg.horizon) {
    JointAction a(env.n_agents);
    for (int i = 0; i < env.n_agents; ++i) a[i] = profile.acts[i](env, s, i);
    StepOutcome out = step(env, s, a);
    trace.states.push_back(std::move(s));
    trace.actions.push_back(std::move(a));
    s = out.next_state;
    trace.outcomes.push_back(std::move(out));
  }
  return trace;
}

// Mean team metric over a set of episodes.
inline double mean_team_metric(const Env& env, const PolicyProfile& profile,
                               int team, const std::vector<std::uint64_t>& seeds) {
  double total = 0.0;
  for (std::uint64_t seed : seeds) {
    EpisodeTrace trace = run_episode(env, profile, seed);
    total += team_metric(env, trace.outcomes, team);
  }
  return total / static_cast<double>(seeds.size());
}

// Line-delimited trace record: one JSON object per step.
inline std::string trace_to_jsonl(const Env& env, const EpisodeTrace& trace) {
  std::string out;
  for (std::size_t t = 0; t < trace.outcomes.size(); ++t) {
    const StepOutcome& o = trace.outcomes[t];
    nlohmann::json positions = nlohmann::json::array();
    for (const Cell& c : o.next_state.positions)
      positions.push_back({c.row, c.col});
    nlohmann::json events = nlohmann::json::array();
    for (const Event& e : o.events) {
      switch (e.kind) {
        case EventKind::TargetCovered:
          events.push_back("target_covered:" + std::to_string(e.a));
          break;
        case EventKind::AdversaryReachedTrue:
          events.push_back("adversary_reached_true");
          break;
        case EventKind::Collision:
          events.push_back("collision:" + std::to_string(e.a) + "," +
                           std::to_string(e.b));
          break;
        case EventKind::PredatorTouch:
          events.push_back("predator_touch:" + std::to_string(e.a) + "," +
                           std::to_string(e.b));
          break;
      }
    }
    nlohmann::json rec{{"t", trace.states[t].timestep},
                       {"actions", trace.actions[t]},
                       {"rewards", o.rewards},
                       {"positions", positions},
                       {"events", events}};
    out += rec.dump();
    out += "\n";
  }
  (void)env;
  return out;
}

}  // namespace mapex
