#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mapex/dtree.hpp"
#include "mapex/env.hpp"
#include "mapex/expert.hpp"
#include "mapex/oracle.hpp"
#include "mapex/policy.hpp"
#include "mapex/rng.hpp"

namespace mapex {

// --- Seed derivation tags ---
//
// Shared across all training loops so that structurally equivalent runs (for
// instance a one-agent team) consume identical random streams.

namespace seedtag {
inline constexpr std::uint64_t kRollout = 0x9d2c5680ULL;
inline constexpr std::uint64_t kResample = 0x1f83d9abULL;
inline constexpr std::uint64_t kSelectEval = 0x5be0cd19ULL;
inline constexpr std::uint64_t kImitation = 0x428a2f98ULL;
inline constexpr std::uint64_t kFqiBehavior = 0x71374491ULL;
}  // namespace seedtag

// --- Configuration ---

enum class Resampling { Uniform, ViperSingle, IviperCentralized, MaviperExpected };

inline std::string resampling_name(Resampling r) {
  switch (r) {
    case Resampling::Uniform: return "uniform";
    case Resampling::ViperSingle: return "viper_single";
    case Resampling::IviperCentralized: return "iviper_centralized";
    case Resampling::MaviperExpected: return "maviper_expected";
  }
  return "?";
}

inline Resampling resampling_from_name(const std::string& s) {
  if (s == "uniform") return Resampling::Uniform;
  if (s == "viper_single") return Resampling::ViperSingle;
  if (s == "iviper_centralized") return Resampling::IviperCentralized;
  if (s == "maviper_expected") return Resampling::MaviperExpected;
  throw ConfigError("unknown resampling mode '" + s + "'");
}

struct ExtractionConfig {
  int iterations = 30;
  int rollouts_per_iter = 25;
  int max_depth = 4;
  int threshold = -1;  // joint growth keep-threshold; -1 resolves to team size - 1
  Resampling resampling = Resampling::MaviperExpected;
  bool prediction_module = true;
  int max_samples = 30000;
  int eval_episodes_for_selection = 30;
  double min_samples_split = 2.0;
  SplitCriterion criterion = SplitCriterion::Gini;
  int early_stop_patience = 0;  // 0 disables early stopping
  std::uint64_t seed = 0;
};

// --- Dataset ---

// One visited joint state with everything training needs: per-agent
// observations and the expert relabeling, plus per-agent loss weights filled
// in at aggregation time.
struct JointSample {
  JointState state;
  std::vector<Observation> obs;
  std::vector<int> expert_actions;
  std::vector<double> weights;
};

// Runs episodes under `actors` and records every visited state, relabeled
// with expert actions. One episode of horizon T yields exactly T samples.
inline std::vector<JointSample> collect_rollouts(
    const Env& env, const ExpertProfile& experts, const PolicyProfile& actors,
    const std::vector<std::uint64_t>& episode_seeds) {
  std::vector<JointSample> samples;
  for (std::uint64_t seed : episode_seeds) {
    EpisodeTrace trace = run_episode(env, actors, seed);
    for (JointState& s : trace.states) {
      JointSample js;
      js.obs.reserve(env.n_agents);
      js.expert_actions.reserve(env.n_agents);
      for (int i = 0; i < env.n_agents; ++i) {
        js.obs.push_back(observe(env, s, i));
        js.expert_actions.push_back(expert_act(experts, env, s, i));
      }
      js.weights.assign(env.n_agents, 1.0);
      js.state = std::move(s);
      samples.push_back(std::move(js));
    }
  }
  return samples;
}

// --- Loss weights ---
//
// How much the expert cares about getting state x right for `agent`:
//   viper_single / iviper_centralized: expert-vs-worst own action gap with
//     all other agents at expert play (the two coincide under an exact
//     rollout oracle, where folding others into the environment and fixing
//     them to expert actions evaluate identically);
//   maviper_expected: the same gap in expectation over the other agents'
//     joint actions (all others when the team spans every agent, otherwise
//     only the agents outside the team);
//   uniform: constant 1.

inline double compute_loss_weight(const QOracle& oracle, const JointState& x,
                                  int agent, Resampling mode,
                                  const std::vector<int>& team) {
  switch (mode) {
    case Resampling::Uniform:
      return 1.0;
    case Resampling::ViperSingle:
    case Resampling::IviperCentralized: {
      OthersSpec spec;
      spec.mode = OthersSpec::OutsideTeam;
      spec.team.resize(oracle.env().n_agents);
      for (int i = 0; i < oracle.env().n_agents; ++i) spec.team[i] = i;
      return oracle.expected_q_gap(x, agent, spec);
    }
    case Resampling::MaviperExpected: {
      OthersSpec spec;
      if (static_cast<int>(team.size()) == oracle.env().n_agents) {
        spec.mode = OthersSpec::AllOthers;
      } else {
        spec.mode = OthersSpec::OutsideTeam;
        spec.team = team;
      }
      return oracle.expected_q_gap(x, agent, spec);
    }
  }
  return 1.0;
}

// --- Resampling ---

// Draws `count` indices with probability proportional to the weights.
// Exact-zero weights are never drawn. All-zero weight vectors fall back to a
// uniform draw and set *fallback.
inline std::vector<std::size_t> resample_indices(std::span<const double> weights,
                                                 std::size_t count,
                                                 std::mt19937_64& rng,
                                                 bool* fallback = nullptr) {
  if (weights.empty()) throw EmptyDataset("resampling from an empty dataset");
  if (fallback) *fallback = false;
  double total = 0.0;
  for (double w : weights) total += w;
  std::vector<double> cum;
  if (total <= 0.0) {
    if (fallback) *fallback = true;
    std::vector<double> ones(weights.size(), 1.0);
    cum = cumulative_sums(ones);
  } else {
    cum = cumulative_sums(weights);
  }
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = weighted_index(cum, rng);
  return out;
}

// --- Training result ---

struct TrainedPolicies {
  std::map<int, DecisionTreePolicy> trees;  // best tree per extracted agent
  std::vector<std::string> progress;        // line-delimited iteration records
};

namespace detail {

inline std::string progress_line(int iteration, int agent, double score,
                                 std::size_t dataset, bool fallback, bool selected) {
  return "iter=" + std::to_string(iteration) + " agent=" + std::to_string(agent) +
         " score=" + nlohmann::json(score).dump() +
         " dataset=" + std::to_string(dataset) +
         " resample_fallback=" + std::to_string(fallback ? 1 : 0) +
         " selected=" + std::to_string(selected ? 1 : 0);
}

inline std::vector<std::uint64_t> selection_seeds(const ExtractionConfig& cfg) {
  std::vector<std::uint64_t> seeds(cfg.eval_episodes_for_selection);
  for (int e = 0; e < cfg.eval_episodes_for_selection; ++e)
    seeds[e] = seed_mix({cfg.seed, seedtag::kSelectEval, static_cast<std::uint64_t>(e)});
  return seeds;
}

inline std::vector<std::uint64_t> rollout_seeds(const ExtractionConfig& cfg, int scope,
                                                int iteration) {
  std::vector<std::uint64_t> seeds(cfg.rollouts_per_iter);
  for (int k = 0; k < cfg.rollouts_per_iter; ++k)
    seeds[k] = seed_mix({cfg.seed, seedtag::kRollout, static_cast<std::uint64_t>(scope),
                         static_cast<std::uint64_t>(iteration),
                         static_cast<std::uint64_t>(k)});
  return seeds;
}

// Oriented candidate score: mean team metric with the given substitutions,
// negated for lower-is-better metrics so that greater is always better.
inline double candidate_score(const Env& env, const ExpertProfile& experts,
                              const std::vector<std::pair<int, AgentPolicyFn>>& subs,
                              int team_id, const std::vector<std::uint64_t>& seeds) {
  PolicyProfile p = with_substitutions(experts, subs, "candidate");
  double metric = mean_team_metric(env, p, team_id, seeds);
  return metric_higher_is_better(env, team_id) ? metric : -metric;
}

inline void fifo_cap(std::deque<JointSample>& store, int max_samples) {
  while (static_cast<int>(store.size()) > max_samples) store.pop_front();
}

}  // namespace detail

// --- Single-agent distillation (value-gap resampling over own actions) ---
//
// The one-agent loop: roll out the current student, relabel with the expert,
// aggregate, resample by the value gap, refit, and keep the best tree across
// iterations by held-out episodes.

inline TrainedPolicies viper_train(const Env& env, const ExpertProfile& experts,
                                   const QOracle& oracle, ExtractionConfig cfg) {
  if (env.n_agents != 1)
    throw ConfigError("single-agent training requires a one-agent environment");
  cfg.resampling = Resampling::ViperSingle;
  const int agent = 0;
  const std::vector<int> team = {agent};
  const auto eval_seeds = detail::selection_seeds(cfg);

  TrainedPolicies result;
  std::deque<JointSample> store;
  std::shared_ptr<const DecisionTreePolicy> student;
  double best_score = 0.0;
  bool have_best = false;
  int since_best = 0;

  for (int m = 1; m <= cfg.iterations; ++m) {
    PolicyProfile actors = PolicyProfile::from_expert(experts, "rollout");
    if (student) actors.acts[agent] = tree_actor(student);
    auto samples =
        collect_rollouts(env, experts, actors, detail::rollout_seeds(cfg, agent, m));
    for (JointSample& s : samples) {
      s.weights[agent] =
          compute_loss_weight(oracle, s.state, agent, cfg.resampling, team);
      store.push_back(std::move(s));
    }
    detail::fifo_cap(store, cfg.max_samples);

    std::vector<double> weights(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) weights[i] = store[i].weights[agent];
    auto rng = make_rng({cfg.seed, seedtag::kResample, static_cast<std::uint64_t>(agent),
                         static_cast<std::uint64_t>(m)});
    bool fallback = false;
    auto drawn = resample_indices(weights, store.size(), rng, &fallback);

    std::vector<WeightedSample> data(drawn.size());
    for (std::size_t i = 0; i < drawn.size(); ++i) {
      const JointSample& js = store[drawn[i]];
      data[i] = {js.obs[agent], js.expert_actions[agent], 1.0};
    }
    TrainOptions opt{cfg.max_depth, cfg.min_samples_split, cfg.criterion,
                     env.n_actions(agent)};
    auto tree = std::make_shared<DecisionTreePolicy>(train_decision_tree(data, opt));
    tree->feature_names = observation_feature_names(env, agent);
    tree->action_names.assign(action_names().begin(),
                              action_names().begin() + env.n_actions(agent));

    double score = detail::candidate_score(env, experts, {{agent, tree_actor(tree)}},
                                           env.team_of[agent], eval_seeds);
    bool selected = !have_best || score > best_score;
    if (selected) {
      best_score = score;
      have_best = true;
      result.trees[agent] = *tree;
      since_best = 0;
    } else {
      ++since_best;
    }
    result.progress.push_back(
        detail::progress_line(m, agent, score, store.size(), fallback, selected));
    student = tree;
    if (cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience) break;
  }
  return result;
}

// --- Independent per-agent distillation ---
//
// Each extracted agent runs its own loop against expert teammates: rollouts
// under (student_i, expert_others), expert relabeling, value-gap resampling
// with others fixed to expert actions, and per-agent best-tree selection.

inline TrainedPolicies iviper_train(const Env& env, const ExpertProfile& experts,
                                    const QOracle& oracle, ExtractionConfig cfg,
                                    const std::vector<int>& agents) {
  if (cfg.resampling == Resampling::MaviperExpected)
    cfg.resampling = Resampling::IviperCentralized;
  const auto eval_seeds = detail::selection_seeds(cfg);
  TrainedPolicies result;

  for (int agent : agents) {
    const std::vector<int> team = {agent};
    std::deque<JointSample> store;
    std::shared_ptr<const DecisionTreePolicy> student;
    double best_score = 0.0;
    bool have_best = false;
    int since_best = 0;

    for (int m = 1; m <= cfg.iterations; ++m) {
      PolicyProfile actors = PolicyProfile::from_expert(experts, "rollout");
      if (student) actors.acts[agent] = tree_actor(student);
      auto samples =
          collect_rollouts(env, experts, actors, detail::rollout_seeds(cfg, agent, m));
      for (JointSample& s : samples) {
        s.weights[agent] =
            compute_loss_weight(oracle, s.state, agent, cfg.resampling, team);
        store.push_back(std::move(s));
      }
      detail::fifo_cap(store, cfg.max_samples);

      std::vector<double> weights(store.size());
      for (std::size_t i = 0; i < store.size(); ++i)
        weights[i] = store[i].weights[agent];
      auto rng = make_rng({cfg.seed, seedtag::kResample,
                           static_cast<std::uint64_t>(agent),
                           static_cast<std::uint64_t>(m)});
      bool fallback = false;
      auto drawn = resample_indices(weights, store.size(), rng, &fallback);

      std::vector<WeightedSample> data(drawn.size());
      for (std::size_t i = 0; i < drawn.size(); ++i) {
        const JointSample& js = store[drawn[i]];
        data[i] = {js.obs[agent], js.expert_actions[agent], 1.0};
      }
      TrainOptions opt{cfg.max_depth, cfg.min_samples_split, cfg.criterion,
                       env.n_actions(agent)};
      auto tree = std::make_shared<DecisionTreePolicy>(train_decision_tree(data, opt));
      tree->feature_names = observation_feature_names(env, agent);
      tree->action_names.assign(action_names().begin(),
                                action_names().begin() + env.n_actions(agent));

      double score = detail::candidate_score(env, experts, {{agent, tree_actor(tree)}},
                                             env.team_of[agent], eval_seeds);
      bool selected = !have_best || score > best_score;
      if (selected) {
        best_score = score;
        have_best = true;
        result.trees[agent] = *tree;
        since_best = 0;
      } else {
        ++since_best;
      }
      result.progress.push_back(
          detail::progress_line(m, agent, score, store.size(), fallback, selected));
      student = tree;
      if (cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience) break;
    }
  }
  return result;
}

// --- Joint tree growth ---
//
// Grows one tree per team agent in lock step: round-robin over agents, one
// breadth-first level at a time. Before a node is split, data points whose
// teammate trees would not reproduce the teammates' expert actions are
// dropped (prediction module); teammate predictions come from projected
// trees: the teammate's partial tree routes the point to a node, and a plain
// tree trained on that node's dataset with the remaining depth budget
// predicts. Projected trees are memoized per node and die with the split.

class JointTreeTrainer {
 public:
  // Test seam: when set, replaces projected-tree prediction correctness in
  // the Build filter.
  std::function<bool(int teammate_slot, const JointSample&)> correctness_override;

  JointTreeTrainer(const Env& env, const ExtractionConfig& cfg, std::vector<int> team,
                   std::vector<std::vector<WeightedSample>> rows,
                   std::vector<std::vector<const JointSample*>> refs)
      : env_(env), cfg_(cfg), team_(std::move(team)), rows_(std::move(rows)),
        refs_(std::move(refs)) {
    trees_.resize(team_.size());
    for (std::size_t slot = 0; slot < team_.size(); ++slot) {
      if (rows_[slot].empty()) throw EmptyDataset("joint training needs samples");
      std::vector<int> all(rows_[slot].size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
      add_node(static_cast<int>(slot), std::move(all), 0);
    }
  }

  int threshold() const {
    return cfg_.threshold >= 0 ? cfg_.threshold
                               : static_cast<int>(team_.size()) - 1;
  }

  // Grows one breadth-first level of one agent's tree.
  void build_level(int slot, int level) {
    growth_log_.emplace_back(slot, level);
    const std::size_t fixed = trees_[slot].size();
    for (std::size_t n = 0; n < fixed; ++n) {
      if (!trees_[slot][n].open || trees_[slot][n].depth != level) continue;

      std::vector<int> filtered;
      if (cfg_.prediction_module && team_.size() > 1) {
        const int thr = threshold();
        for (int r : trees_[slot][n].rows) {
          const JointSample& x = *refs_[slot][r];
          int correct = 0;
          for (std::size_t j = 0; j < team_.size(); ++j) {
            if (static_cast<int>(j) == slot) continue;
            bool ok = correctness_override
                          ? correctness_override(static_cast<int>(j), x)
                          : projected_predict(static_cast<int>(j), x) ==
                                x.expert_actions[team_[j]];
            correct += ok ? 1 : 0;
          }
          if (correct >= thr) filtered.push_back(r);
        }
        if (filtered.empty()) {
          // Nothing survives: close the node on its pre-filter majority.
          trees_[slot][n].open = false;
          ++empty_filter_nodes_;
          continue;
        }
      } else {
        filtered = trees_[slot][n].rows;
      }

      GrowNode& g = trees_[slot][n];
      g.rows = std::move(filtered);
      g.node.counts = class_weights(rows_[slot], g.rows, n_classes(slot));
      g.node.action = argmax_class(g.node.counts);

      bool stop = detail::labels_pure(rows_[slot], g.rows) ||
                  detail::total_weight_cls(rows_[slot], g.rows) <
                      cfg_.min_samples_split;
      std::optional<Split> split;
      if (!stop)
        split = best_classification_split(rows_[slot], g.rows,
                                          n_features(slot), n_classes(slot),
                                          cfg_.criterion);
      if (stop || !split) {
        g.open = false;
        continue;
      }

      std::vector<int> left_rows, right_rows;
      for (int r : g.rows) {
        if (rows_[slot][r].features[split->feature] < split->threshold)
          left_rows.push_back(r);
        else
          right_rows.push_back(r);
      }
      const int left = static_cast<int>(trees_[slot].size());
      g.node.leaf = false;
      g.node.feature = split->feature;
      g.node.threshold = split->threshold;
      g.node.counts.clear();
      g.node.left = left;
      g.node.right = left + 1;
      g.open = false;
      g.memo.reset();
      add_node(slot, std::move(left_rows), level + 1);
      add_node(slot, std::move(right_rows), level + 1);
    }
  }

  // Full round-robin growth to max depth.
  void grow_all() {
    for (int level = 0; level < cfg_.max_depth; ++level)
      for (std::size_t slot = 0; slot < team_.size(); ++slot)
        build_level(static_cast<int>(slot), level);
  }

  // Routes x through the teammate's partial tree; an open frontier node
  // answers with a projected tree trained on its routed rows under the
  // remaining depth budget (memoized until the node splits), a closed leaf
  // answers directly.
  int projected_predict(int slot, const JointSample& x, bool use_memo = true) const {
    const Observation& obs = x.obs[team_[slot]];
    int n = 0;
    while (!trees_[slot][n].node.leaf) {
      const TreeNode& node = trees_[slot][n].node;
      n = obs[node.feature] < node.threshold ? node.left : node.right;
    }
    const GrowNode& g = trees_[slot][n];
    if (!g.open || g.rows.empty()) return g.node.action;
    if (use_memo) {
      if (!g.memo) g.memo = std::make_shared<DecisionTreePolicy>(projected_tree(slot, g));
      return predict(*g.memo, obs);
    }
    DecisionTreePolicy t = projected_tree(slot, g);
    return predict(t, obs);
  }

  // Finished trees, breadth-first node layout identical to the plain trainer.
  std::vector<DecisionTreePolicy> finish() const {
    std::vector<DecisionTreePolicy> out;
    for (std::size_t slot = 0; slot < team_.size(); ++slot) {
      DecisionTreePolicy tree;
      tree.max_depth = cfg_.max_depth;
      tree.n_features = n_features(static_cast<int>(slot));
      tree.n_classes = n_classes(static_cast<int>(slot));
      tree.criterion = cfg_.criterion;
      tree.feature_names = observation_feature_names(env_, team_[slot]);
      tree.action_names.assign(
          action_names().begin(),
          action_names().begin() + env_.n_actions(team_[slot]));
      for (const GrowNode& g : trees_[slot]) tree.nodes.push_back(g.node);
      out.push_back(std::move(tree));
    }
    return out;
  }

  // Introspection for tests.
  const std::vector<std::pair<int, int>>& growth_log() const { return growth_log_; }
  int empty_filter_nodes() const { return empty_filter_nodes_; }
  std::size_t node_count(int slot) const { return trees_[slot].size(); }
  int node_depth(int slot, int n) const { return trees_[slot][n].depth; }
  bool node_open(int slot, int n) const { return trees_[slot][n].open; }
  const std::vector<int>& node_rows(int slot, int n) const {
    return trees_[slot][n].rows;
  }
  int max_open_depth(int slot) const {
    int d = -1;
    for (const GrowNode& g : trees_[slot])
      if (g.open) d = std::max(d, g.depth);
    return d;
  }

 private:
  struct GrowNode {
    TreeNode node;
    std::vector<int> rows;
    int depth = 0;
    bool open = true;
    mutable std::shared_ptr<DecisionTreePolicy> memo;
  };

  int n_features(int slot) const {
    return static_cast<int>(rows_[slot][0].features.size());
  }
  int n_classes(int slot) const { return env_.n_actions(team_[slot]); }

  void add_node(int slot, std::vector<int> rows, int depth) {
    GrowNode g;
    g.depth = depth;
    g.node.leaf = true;
    g.node.counts = class_weights(rows_[slot], rows, n_classes(slot));
    g.node.action = argmax_class(g.node.counts);
    g.rows = std::move(rows);
    g.open = depth < cfg_.max_depth;
    trees_[slot].push_back(std::move(g));
  }

  DecisionTreePolicy projected_tree(int slot, const GrowNode& g) const {
    std::vector<WeightedSample> subset;
    subset.reserve(g.rows.size());
    for (int r : g.rows) subset.push_back(rows_[slot][r]);
    TrainOptions opt{cfg_.max_depth - g.depth, cfg_.min_samples_split,
                     cfg_.criterion, n_classes(slot)};
    return train_decision_tree(subset, opt);
  }

  const Env& env_;
  ExtractionConfig cfg_;
  std::vector<int> team_;
  std::vector<std::vector<WeightedSample>> rows_;
  std::vector<std::vector<const JointSample*>> refs_;
  std::vector<std::vector<GrowNode>> trees_;
  std::vector<std::pair<int, int>> growth_log_;
  int empty_filter_nodes_ = 0;
};

// --- Joint team distillation ---
//
// Teams train independently, each against expert opponents. Within a team:
// rollouts under all previous-iteration trees, expert relabeling, per-agent
// expected-gap resampling, lock-step joint tree growth with the prediction
// module, and best-profile selection by the joint team metric.

inline TrainedPolicies maviper_train(const Env& env, const ExpertProfile& experts,
                                     const QOracle& oracle, ExtractionConfig cfg,
                                     const std::vector<std::vector<int>>& teams) {
  const auto eval_seeds = detail::selection_seeds(cfg);
  TrainedPolicies result;

  for (const std::vector<int>& team : teams) {
    if (team.empty()) throw ConfigError("empty extraction team");
    const int scope = *std::min_element(team.begin(), team.end());
    const int team_id = env.team_of[team[0]];
    std::deque<JointSample> store;
    std::map<int, std::shared_ptr<const DecisionTreePolicy>> students;
    double best_score = 0.0;
    bool have_best = false;
    int since_best = 0;

    for (int m = 1; m <= cfg.iterations; ++m) {
      PolicyProfile actors = PolicyProfile::from_expert(experts, "rollout");
      for (const auto& [agent, tree] : students) actors.acts[agent] = tree_actor(tree);
      auto samples =
          collect_rollouts(env, experts, actors, detail::rollout_seeds(cfg, scope, m));
      for (JointSample& s : samples) {
        for (int agent : team)
          s.weights[agent] =
              compute_loss_weight(oracle, s.state, agent, cfg.resampling, team);
        store.push_back(std::move(s));
      }
      detail::fifo_cap(store, cfg.max_samples);

      std::vector<const JointSample*> snapshot;
      snapshot.reserve(store.size());
      for (const JointSample& s : store) snapshot.push_back(&s);

      std::vector<std::vector<WeightedSample>> rows(team.size());
      std::vector<std::vector<const JointSample*>> refs(team.size());
      bool any_fallback = false;
      for (std::size_t slot = 0; slot < team.size(); ++slot) {
        int agent = team[slot];
        std::vector<double> weights(store.size());
        for (std::size_t i = 0; i < store.size(); ++i)
          weights[i] = store[i].weights[agent];
        auto rng = make_rng({cfg.seed, seedtag::kResample,
                             static_cast<std::uint64_t>(agent),
                             static_cast<std::uint64_t>(m)});
        bool fallback = false;
        auto drawn = resample_indices(weights, store.size(), rng, &fallback);
        any_fallback = any_fallback || fallback;
        rows[slot].reserve(drawn.size());
        refs[slot].reserve(drawn.size());
        for (std::size_t r : drawn) {
          const JointSample* js = snapshot[r];
          rows[slot].push_back({js->obs[agent], js->expert_actions[agent], 1.0});
          refs[slot].push_back(js);
        }
      }

      JointTreeTrainer trainer(env, cfg, team, std::move(rows), std::move(refs));
      trainer.grow_all();
      auto trees = trainer.finish();

      std::vector<std::pair<int, AgentPolicyFn>> subs;
      std::map<int, std::shared_ptr<const DecisionTreePolicy>> candidate;
      for (std::size_t slot = 0; slot < team.size(); ++slot) {
        auto t = std::make_shared<DecisionTreePolicy>(std::move(trees[slot]));
        candidate[team[slot]] = t;
        subs.emplace_back(team[slot], tree_actor(t));
      }
      double score =
          detail::candidate_score(env, experts, subs, team_id, eval_seeds);
      bool selected = !have_best || score > best_score;
      if (selected) {
        best_score = score;
        have_best = true;
        for (const auto& [agent, tree] : candidate) result.trees[agent] = *tree;
        since_best = 0;
      } else {
        ++since_best;
      }
      result.progress.push_back(detail::progress_line(
          m, scope, score, store.size(), any_fallback, selected));
      students = std::move(candidate);
      if (cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience) break;
    }
  }
  return result;
}

}  // namespace mapex
