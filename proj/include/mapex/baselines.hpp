#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mapex/dtree.hpp"
#include "mapex/env.hpp"
#include "mapex/expert.hpp"
#include "mapex/extraction.hpp"
#include "mapex/policy.hpp"
#include "mapex/rng.hpp"

namespace mapex {

// --- Behavioral cloning baseline ---
//
// One pass of expert rollouts, one tree per agent, no relabeling loop and no
// resampling. Exactly n_samples states are used; the last episode is
// truncated if needed.

struct ImitationConfig {
  int n_samples = 30000;
  int max_depth = 4;
  double min_samples_split = 2.0;
  SplitCriterion criterion = SplitCriterion::Gini;
  std::uint64_t seed = 0;
};

inline TrainedPolicies imitation_dt_train(const Env& env, const ExpertProfile& experts,
                                          const ImitationConfig& cfg,
                                          const std::vector<int>& agents) {
  if (cfg.n_samples <= 0) throw ConfigError("imitation needs n_samples > 0");
  PolicyProfile actors = PolicyProfile::from_expert(experts, "expert");
  std::vector<JointState> states;
  states.reserve(cfg.n_samples);
  for (std::uint64_t e = 0; static_cast<int>(states.size()) < cfg.n_samples; ++e) {
    EpisodeTrace trace =
        run_episode(env, actors, seed_mix({cfg.seed, seedtag::kImitation, e}));
    for (JointState& s : trace.states) {
      if (static_cast<int>(states.size()) >= cfg.n_samples) break;
      states.push_back(std::move(s));
    }
  }

  TrainedPolicies result;
  for (int agent : agents) {
    std::vector<WeightedSample> data;
    data.reserve(states.size());
    for (const JointState& s : states)
      data.push_back({observe(env, s, agent), expert_act(experts, env, s, agent), 1.0});
    TrainOptions opt{cfg.max_depth, cfg.min_samples_split, cfg.criterion,
                     env.n_actions(agent)};
    DecisionTreePolicy tree = train_decision_tree(data, opt);
    tree.feature_names = observation_feature_names(env, agent);
    tree.action_names.assign(action_names().begin(),
                             action_names().begin() + env.n_actions(agent));
    result.progress.push_back(detail::progress_line(
        1, agent, 0.0, data.size(), false, true));
    result.trees[agent] = std::move(tree);
  }
  return result;
}

// --- Fitted Q-iteration baseline ---
//
// Offline Q-learning on uniform-random play. Observations are discretized
// onto fixed bins, one regression tree per action approximates Q, and the
// greedy policy reads the argmax (ties to the smallest action index).

inline const std::vector<double>& fqi_default_bins() {
  static const std::vector<double> bins = {-1.0, -0.75, -0.5, -0.25, 0.0,
                                           0.25, 0.5,   0.75, 1.0};
  return bins;
}

// Index of the first boundary strictly above x; values at or past the last
// boundary land in the top bin.
inline int bin_index(double x, std::span<const double> boundaries) {
  return static_cast<int>(
      std::upper_bound(boundaries.begin(), boundaries.end(), x) -
      boundaries.begin());
}

inline std::vector<double> binned(const Observation& obs,
                                  std::span<const double> boundaries) {
  std::vector<double> out(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i)
    out[i] = static_cast<double>(bin_index(obs[i], boundaries));
  return out;
}

struct FqiConfig {
  int n_samples = 30000;
  int q_iterations = 10;
  int max_depth = 4;
  double min_samples_split = 2.0;
  std::vector<double> bin_boundaries = fqi_default_bins();
  std::uint64_t seed = 0;
};

struct FqiTransition {
  std::vector<double> features;       // binned observation
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_features;  // binned next observation
  bool terminal = false;
};

struct FqiPolicy {
  std::vector<RegressionTree> q_trees;  // one per action
  std::vector<double> bin_boundaries;
  int n_actions = 0;
};

inline double fqi_value(const FqiPolicy& p, std::span<const double> binned_obs) {
  double best = predict(p.q_trees[0], binned_obs);
  for (int a = 1; a < p.n_actions; ++a)
    best = std::max(best, predict(p.q_trees[a], binned_obs));
  return best;
}

inline int fqi_act_binned(const FqiPolicy& p, std::span<const double> binned_obs) {
  int best = 0;
  double best_q = predict(p.q_trees[0], binned_obs);
  for (int a = 1; a < p.n_actions; ++a) {
    double q = predict(p.q_trees[a], binned_obs);
    if (q > best_q) {
      best_q = q;
      best = a;
    }
  }
  return best;
}

inline int fqi_act(const FqiPolicy& p, const Observation& obs) {
  return fqi_act_binned(p, binned(obs, p.bin_boundaries));
}

inline AgentPolicyFn fqi_actor(std::shared_ptr<const FqiPolicy> policy) {
  return [policy = std::move(policy)](const Env& env, const JointState& s, int agent) {
    return fqi_act(*policy, observe(env, s, agent));
  };
}

// Core fit on an explicit transition set: Q_0 = 0, then q_iterations sweeps
// of Q_{k+1}(s,a) <- r + gamma * max_a' Q_k(s',a') with the bootstrap term
// cut at terminal transitions.
inline FqiPolicy fit_q_iteration(const std::vector<FqiTransition>& transitions,
                                 int n_actions, double gamma, const FqiConfig& cfg) {
  if (transitions.empty()) throw EmptyDataset("fitted Q-iteration needs transitions");
  FqiPolicy policy;
  policy.n_actions = n_actions;
  policy.bin_boundaries = cfg.bin_boundaries;

  const int n_features = static_cast<int>(transitions[0].features.size());
  bool have_q = false;
  for (int k = 0; k < cfg.q_iterations; ++k) {
    std::vector<std::vector<RegressionSample>> per_action(n_actions);
    for (const FqiTransition& t : transitions) {
      double target = t.reward;
      if (have_q && !t.terminal) target += gamma * fqi_value(policy, t.next_features);
      per_action[t.action].push_back({t.features, target, 1.0});
    }
    std::vector<RegressionTree> next(n_actions);
    for (int a = 0; a < n_actions; ++a) {
      next[a] = train_regression_tree(per_action[a], cfg.max_depth,
                                      cfg.min_samples_split);
      if (per_action[a].empty()) next[a].n_features = n_features;
    }
    policy.q_trees = std::move(next);
    have_q = true;
  }
  return policy;
}

// Collects uniform-random-play transitions for every agent at once (shared
// episodes), then fits each requested agent independently.
inline std::map<int, FqiPolicy> fitted_q_train(const Env& env, const FqiConfig& cfg,
                                               const std::vector<int>& agents) {
  if (cfg.n_samples <= 0) throw ConfigError("fitted Q-iteration needs n_samples > 0");
  std::map<int, std::vector<FqiTransition>> per_agent;
  for (int agent : agents) per_agent[agent] = {};

  int collected = 0;
  for (std::uint64_t e = 0; collected < cfg.n_samples; ++e) {
    auto rng = make_rng({cfg.seed, seedtag::kFqiBehavior, e});
    JointState s = reset(env, seed_mix({cfg.seed, seedtag::kFqiBehavior, e}));
    for (int t = 0; t < env.cfg.horizon && collected < cfg.n_samples; ++t) {
      JointAction joint(env.n_agents);
      for (int i = 0; i < env.n_agents; ++i)
        joint[i] = static_cast<int>(bounded(rng, env.n_actions(i)));
      StepOutcome out = step(env, s, joint);
      bool terminal = out.next_state.timestep >= env.cfg.horizon;
      for (auto& [agent, list] : per_agent) {
        FqiTransition tr;
        tr.features = binned(observe(env, s, agent), cfg.bin_boundaries);
        tr.action = joint[agent];
        tr.reward = out.rewards[agent];
        tr.next_features = binned(observe(env, out.next_state, agent),
                                  cfg.bin_boundaries);
        tr.terminal = terminal;
        list.push_back(std::move(tr));
      }
      ++collected;
      s = std::move(out.next_state);
    }
  }

  std::map<int, FqiPolicy> result;
  for (auto& [agent, transitions] : per_agent)
    result[agent] =
        fit_q_iteration(transitions, env.n_actions(agent), env.cfg.discount, cfg);
  return result;
}

// --- Serialization ---

inline nlohmann::json fqi_to_json(const FqiPolicy& p) {
  nlohmann::json j;
  j["kind"] = "fqi_policy";
  j["n_actions"] = p.n_actions;
  j["bin_boundaries"] = p.bin_boundaries;
  j["q_trees"] = nlohmann::json::array();
  for (const RegressionTree& t : p.q_trees)
    j["q_trees"].push_back(regression_tree_to_json(t));
  return j;
}

inline std::string serialize_fqi(const FqiPolicy& p) {
  return fqi_to_json(p).dump(2) + "\n";
}

inline FqiPolicy fqi_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind").get<std::string>() != "fqi_policy")
      throw ParseError("not a fitted Q policy document");
    FqiPolicy p;
    p.n_actions = j.at("n_actions").get<int>();
    p.bin_boundaries = j.at("bin_boundaries").get<std::vector<double>>();
    for (const nlohmann::json& t : j.at("q_trees"))
      p.q_trees.push_back(regression_tree_from_json(t));
    if (static_cast<int>(p.q_trees.size()) != p.n_actions)
      throw ParseError("fitted Q policy action count mismatch");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed fitted Q policy document: ") + e.what());
  }
}

inline FqiPolicy deserialize_fqi(const std::string& text) {
  try {
    return fqi_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed fitted Q policy document: ") + e.what());
  }
}

}  // namespace mapex
