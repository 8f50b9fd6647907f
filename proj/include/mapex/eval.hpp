#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mapex/baselines.hpp"
#include "mapex/env.hpp"
#include "mapex/expert.hpp"
#include "mapex/extraction.hpp"
#include "mapex/oracle.hpp"
#include "mapex/policy.hpp"
#include "mapex/rng.hpp"

namespace mapex {

namespace seedtag {
inline constexpr std::uint64_t kEvalEpisode = 0xb5c0fbcfULL;
}

// --- Report statistics ---
//
// One replicate per seed (each seed averages its own block of episodes);
// mean, sample standard deviation, and a 95% confidence half-width of
// 1.96 * sd / sqrt(n_seeds) summarize the replicates.

struct EvalReport {
  std::string metric_name;
  double mean = 0.0;
  double sd = 0.0;
  double ci95 = 0.0;
  int n_seeds = 0;
  int n_episodes = 0;
  std::vector<double> per_seed;
  bool absolute = false;  // zero-denominator fallback: absolute metric, not a ratio
  std::string provenance;
};

namespace detail {

inline std::string fmt(double v) { return nlohmann::json(v).dump(); }

inline void fill_stats(EvalReport& r) {
  r.n_seeds = static_cast<int>(r.per_seed.size());
  if (r.n_seeds == 0) return;
  double sum = 0.0;
  for (double v : r.per_seed) sum += v;
  r.mean = sum / r.n_seeds;
  if (r.n_seeds > 1) {
    double ss = 0.0;
    for (double v : r.per_seed) ss += (v - r.mean) * (v - r.mean);
    r.sd = std::sqrt(ss / (r.n_seeds - 1));
  } else {
    r.sd = 0.0;
  }
  r.ci95 = 1.96 * r.sd / std::sqrt(static_cast<double>(r.n_seeds));
}

inline std::vector<std::uint64_t> episode_seeds(std::uint64_t seed, int episodes) {
  std::vector<std::uint64_t> out(episodes);
  for (int e = 0; e < episodes; ++e)
    out[e] = seed_mix({seed, seedtag::kEvalEpisode, static_cast<std::uint64_t>(e)});
  return out;
}

}  // namespace detail

// --- Performance ratios ---
//
// Team metric with trees swapped in, divided by the all-expert metric on the
// same episode seeds. Lower-is-better metrics invert to baseline/value so
// that 1 means parity and larger is better everywhere. A zero denominator
// anywhere switches the whole report to absolute metrics and flags it.

inline double ratio_from_values(double value, double baseline, bool higher_is_better,
                                bool* zero_denominator = nullptr) {
  double num = higher_is_better ? value : baseline;
  double den = higher_is_better ? baseline : value;
  if (den == 0.0) {
    if (zero_denominator) *zero_denominator = true;
    return 0.0;
  }
  return num / den;
}

namespace detail {

inline EvalReport paired_ratio_report(const Env& env, const ExpertProfile& experts,
                                      int team,
                                      const std::vector<std::pair<int, AgentPolicyFn>>& subs,
                                      int episodes, std::span<const std::uint64_t> seeds,
                                      std::string metric_name) {
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  PolicyProfile swapped = with_substitutions(experts, subs, "swapped");
  PolicyProfile baseline = PolicyProfile::from_expert(experts, "expert");
  const bool higher = metric_higher_is_better(env, team);

  std::vector<double> values, baselines;
  bool zero = false;
  for (std::uint64_t s : seeds) {
    auto ep = episode_seeds(s, episodes);
    double v = mean_team_metric(env, swapped, team, ep);
    double b = mean_team_metric(env, baseline, team, ep);
    values.push_back(v);
    baselines.push_back(b);
    ratio_from_values(v, b, higher, &zero);
  }

  EvalReport r;
  r.metric_name = std::move(metric_name);
  r.n_episodes = episodes;
  if (zero) {
    r.absolute = true;
    r.per_seed = values;
  } else {
    for (std::size_t i = 0; i < values.size(); ++i)
      r.per_seed.push_back(ratio_from_values(values[i], baselines[i], higher));
  }
  fill_stats(r);
  return r;
}

}  // namespace detail

inline EvalReport individual_ratio(const Env& env, const ExpertProfile& experts,
                                   int team, int agent, const AgentPolicyFn& actor,
                                   int episodes, std::span<const std::uint64_t> seeds) {
  if (env.team_of[agent] != team)
    throw ConfigError("agent " + std::to_string(agent) + " is not on team " +
                      std::to_string(team));
  return detail::paired_ratio_report(env, experts, team, {{agent, actor}}, episodes,
                                     seeds, "individual_ratio");
}

inline EvalReport joint_ratio(const Env& env, const ExpertProfile& experts, int team,
                              const std::vector<std::pair<int, AgentPolicyFn>>& subs,
                              int episodes, std::span<const std::uint64_t> seeds) {
  for (const auto& [agent, fn] : subs)
    if (env.team_of[agent] != team)
      throw ConfigError("agent " + std::to_string(agent) + " is not on team " +
                        std::to_string(team));
  return detail::paired_ratio_report(env, experts, team, subs, episodes, seeds,
                                     "joint_ratio");
}

// --- Cross-play ---
//
// Every team-0 source plays every team-1 source on shared episode seeds.
// Cells carry both teams' metric statistics over seeds; row and column
// averages exclude the expert source, which is reported separately.

struct PolicySource {
  std::string label;
  std::vector<std::pair<int, AgentPolicyFn>> subs;  // empty: expert play
};

struct CrossplayCell {
  std::string row, col;
  double team0_mean = 0.0, team0_sd = 0.0;
  double team1_mean = 0.0, team1_sd = 0.0;
};

struct CrossplayMatrix {
  std::vector<std::string> row_labels, col_labels;
  std::vector<CrossplayCell> cells;  // row-major
  int n_seeds = 0, n_episodes = 0;

  const CrossplayCell& at(const std::string& row, const std::string& col) const {
    for (const CrossplayCell& c : cells)
      if (c.row == row && c.col == col) return c;
    throw ConfigError("no cross-play cell (" + row + ", " + col + ")");
  }
};

inline CrossplayMatrix crossplay(
    const Env& env, const ExpertProfile& experts,
    const std::vector<PolicySource>& team0_sources,
    const std::vector<PolicySource>& team1_sources, int episodes,
    std::span<const std::uint64_t> seeds,
    const std::function<void(const std::string&, const std::string&,
                             const EpisodeTrace&)>& on_trace = nullptr) {
  if (env.teams.size() != 2)
    throw ConfigError("cross-play needs an environment with two teams");
  if (team0_sources.size() < 2 || team1_sources.size() < 2)
    throw ConfigError("cross-play needs at least two sources per side");
  for (const PolicySource& src : team0_sources)
    for (const auto& [agent, fn] : src.subs)
      if (env.team_of[agent] != 0)
        throw ConfigError("source '" + src.label + "' substitutes outside team 0");
  for (const PolicySource& src : team1_sources)
    for (const auto& [agent, fn] : src.subs)
      if (env.team_of[agent] != 1)
        throw ConfigError("source '" + src.label + "' substitutes outside team 1");

  CrossplayMatrix m;
  m.n_seeds = static_cast<int>(seeds.size());
  m.n_episodes = episodes;
  for (const PolicySource& r : team0_sources) m.row_labels.push_back(r.label);
  for (const PolicySource& c : team1_sources) m.col_labels.push_back(c.label);

  for (const PolicySource& row : team0_sources) {
    for (const PolicySource& col : team1_sources) {
      std::vector<std::pair<int, AgentPolicyFn>> subs = row.subs;
      subs.insert(subs.end(), col.subs.begin(), col.subs.end());
      PolicyProfile profile =
          with_substitutions(experts, subs, row.label + "_vs_" + col.label);
      EvalReport t0, t1;
      for (std::uint64_t s : seeds) {
        auto ep = detail::episode_seeds(s, episodes);
        double m0 = 0.0, m1 = 0.0;
        for (std::uint64_t e : ep) {
          EpisodeTrace trace = run_episode(env, profile, e);
          m0 += team_metric(env, trace.outcomes, 0);
          m1 += team_metric(env, trace.outcomes, 1);
          if (on_trace) on_trace(row.label, col.label, trace);
        }
        t0.per_seed.push_back(m0 / episodes);
        t1.per_seed.push_back(m1 / episodes);
      }
      detail::fill_stats(t0);
      detail::fill_stats(t1);
      CrossplayCell cell;
      cell.row = row.label;
      cell.col = col.label;
      cell.team0_mean = t0.mean;
      cell.team0_sd = t0.sd;
      cell.team1_mean = t1.mean;
      cell.team1_sd = t1.sd;
      m.cells.push_back(std::move(cell));
    }
  }
  return m;
}

// Mean of a source's cells against all opposing sources, excluding the
// opposing expert. team=0 averages a row (the metric of team 0), team=1
// averages a column (the metric of team 1).
inline double crossplay_source_mean(const CrossplayMatrix& m, int team,
                                    const std::string& label,
                                    const std::string& expert_label = "expert") {
  double sum = 0.0;
  int n = 0;
  for (const CrossplayCell& c : m.cells) {
    if (team == 0 && c.row == label && c.col != expert_label) {
      sum += c.team0_mean;
      ++n;
    } else if (team == 1 && c.col == label && c.row != expert_label) {
      sum += c.team1_mean;
      ++n;
    }
  }
  if (n == 0) throw ConfigError("no cross-play cells to average for '" + label + "'");
  return sum / n;
}

// --- Exploitability ---
//
// Freeze one team; the opposing team best-responds, computed exactly by
// backward induction over reachable states (the frozen side is deterministic
// and the grid is finite). Utilities are the opponent team's metric, negated
// when lower is better so the responder always maximizes. Exploitability is
// the best-response value minus the incumbent expert opponent's value,
// averaged over episode seeds.

struct ExploitabilityResult {
  double value = 0.0;
  std::vector<double> per_seed;        // best response minus incumbent
  std::vector<double> best_response;   // oriented opponent metric under BR
  std::vector<double> incumbent;       // oriented opponent metric under expert play
};

namespace detail {

class BestResponseSolver {
 public:
  BestResponseSolver(const Env& env, const PolicyProfile& frozen, int opponent_team,
                     std::size_t state_cap)
      : env_(env), frozen_(frozen), opp_team_(opponent_team), cap_(state_cap) {
    for (int i = 0; i < env.n_agents; ++i)
      if (env.team_of[i] == opp_team_) opp_agents_.push_back(i);
    indicator_ = metric_is_indicator(env);
    orient_ = metric_higher_is_better(env, opp_team_) ? 1.0 : -1.0;
  }

  double value(const JointState& s) {
    if (s.timestep >= env_.cfg.horizon) return 0.0;
    std::string key = state_digest(env_, s);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;

    JointAction joint(env_.n_agents, kStay);
    for (int i = 0; i < env_.n_agents; ++i)
      if (env_.team_of[i] != opp_team_) joint[i] = frozen_.acts[i](env_, s, i);

    std::vector<int> combo(opp_agents_.size(), 0);
    double best = 0.0;
    bool first = true;
    while (true) {
      for (std::size_t k = 0; k < opp_agents_.size(); ++k)
        joint[opp_agents_[k]] = combo[k];
      StepOutcome out = step(env_, s, joint);
      double gain = orient_ * metric_step_gain(env_, out, opp_team_);
      double cont = value(out.next_state);
      double total = indicator_ ? std::max(gain, cont) : gain + cont;
      if (first || total > best) best = total;
      first = false;

      std::size_t k = 0;
      for (; k < opp_agents_.size(); ++k) {
        if (++combo[k] < env_.n_actions(opp_agents_[k])) break;
        combo[k] = 0;
      }
      if (k == opp_agents_.size()) break;
    }

    if (memo_.size() >= cap_)
      throw StateSpaceTooLarge("best-response search exceeded " +
                               std::to_string(cap_) + " memoized states");
    memo_[std::move(key)] = best;
    return best;
  }

  std::size_t states_explored() const { return memo_.size(); }

 private:
  const Env& env_;
  const PolicyProfile& frozen_;
  int opp_team_;
  std::vector<int> opp_agents_;
  bool indicator_ = false;
  double orient_ = 1.0;
  std::size_t cap_;
  std::unordered_map<std::string, double> memo_;
};

}  // namespace detail

inline ExploitabilityResult exploitability(
    const Env& env, const ExpertProfile& experts,
    const std::vector<std::pair<int, AgentPolicyFn>>& frozen_subs, int frozen_team,
    std::span<const std::uint64_t> episode_seeds, std::size_t state_cap = 2000000) {
  if (env.teams.size() != 2)
    throw ConfigError("exploitability needs an environment with two teams");
  const int opp_team = 1 - frozen_team;
  for (const auto& [agent, fn] : frozen_subs)
    if (env.team_of[agent] != frozen_team)
      throw ConfigError("frozen substitution outside team " +
                        std::to_string(frozen_team));

  PolicyProfile frozen = with_substitutions(experts, frozen_subs, "frozen");
  const double orient = metric_higher_is_better(env, opp_team) ? 1.0 : -1.0;

  ExploitabilityResult result;
  for (std::uint64_t seed : episode_seeds) {
    detail::BestResponseSolver solver(env, frozen, opp_team, state_cap);
    JointState s0 = reset(env, seed);
    double br = solver.value(s0);

    EpisodeTrace trace = run_episode(env, frozen, seed);
    double inc = orient * team_metric(env, trace.outcomes, opp_team);
    result.best_response.push_back(br);
    result.incumbent.push_back(inc);
    result.per_seed.push_back(br - inc);
  }
  double sum = 0.0;
  for (double v : result.per_seed) sum += v;
  result.value = result.per_seed.empty() ? 0.0 : sum / result.per_seed.size();
  return result;
}

// --- Feature importances ---

struct FeatureReportRow {
  int agent = 0;
  std::vector<std::string> feature_names;
  std::vector<double> importance;  // averaged across trees, sums to 1
};

inline std::vector<FeatureReportRow> feature_report(
    const std::map<int, std::vector<DecisionTreePolicy>>& trees_by_agent) {
  std::vector<FeatureReportRow> rows;
  for (const auto& [agent, trees] : trees_by_agent) {
    if (trees.empty()) throw EmptyDataset("feature report needs at least one tree");
    FeatureReportRow row;
    row.agent = agent;
    row.feature_names = trees[0].feature_names;
    row.importance.assign(trees[0].n_features, 0.0);
    for (const DecisionTreePolicy& t : trees) {
      std::vector<double> imp = feature_importance(t);
      for (std::size_t f = 0; f < imp.size(); ++f) row.importance[f] += imp[f];
    }
    for (double& v : row.importance) v /= static_cast<double>(trees.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

// --- Ablations ---
//
// Trains the joint algorithm, both its ablations (prediction module off;
// independent-style resampling), and the independent algorithm on identical
// seeds, then reports individual and joint ratios side by side. The
// individual row averages the per-agent ratios of the team.

struct AblationRow {
  std::string variant;
  std::string ratio_kind;  // "individual" or "joint"
  EvalReport report;
};

struct AblationOutcome {
  std::vector<AblationRow> rows;
  bool regression = false;  // joint mean of any ablation exceeds the full algorithm
};

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v = {"maviper", "maviper_no_prediction",
                                             "maviper_iviper_resampling", "iviper"};
  return v;
}

inline AblationOutcome ablation_suite(const Env& env, const ExpertProfile& experts,
                                      const OracleConfig& oracle_cfg,
                                      const ExtractionConfig& base,
                                      const std::vector<int>& team_agents,
                                      std::span<const std::uint64_t> train_seeds,
                                      int episodes) {
  const int team = env.team_of[team_agents[0]];
  std::map<std::string, std::vector<double>> joint_by_variant, indiv_by_variant;

  for (std::uint64_t s : train_seeds) {
    OracleConfig ocfg = oracle_cfg;
    ocfg.seed = s;
    QOracle oracle(env, experts, ocfg);
    std::vector<std::uint64_t> eval_seeds = {s};

    for (const std::string& variant : ablation_variants()) {
      ExtractionConfig cfg = base;
      cfg.seed = s;
      TrainedPolicies trained;
      if (variant == "maviper") {
        trained = maviper_train(env, experts, oracle, cfg, {team_agents});
      } else if (variant == "maviper_no_prediction") {
        cfg.prediction_module = false;
        trained = maviper_train(env, experts, oracle, cfg, {team_agents});
      } else if (variant == "maviper_iviper_resampling") {
        cfg.resampling = Resampling::IviperCentralized;
        trained = maviper_train(env, experts, oracle, cfg, {team_agents});
      } else {
        trained = iviper_train(env, experts, oracle, cfg, team_agents);
      }

      std::vector<std::pair<int, AgentPolicyFn>> subs;
      for (const auto& [agent, tree] : trained.trees)
        subs.emplace_back(agent,
                          tree_actor(std::make_shared<DecisionTreePolicy>(tree)));

      EvalReport jr = joint_ratio(env, experts, team, subs, episodes, eval_seeds);
      joint_by_variant[variant].push_back(jr.per_seed.at(0));

      double indiv = 0.0;
      for (const auto& [agent, fn] : subs) {
        EvalReport ir = individual_ratio(env, experts, team, agent, fn, episodes,
                                         eval_seeds);
        indiv += ir.per_seed.at(0);
      }
      indiv_by_variant[variant].push_back(indiv / subs.size());
    }
  }

  AblationOutcome out;
  for (const std::string& variant : ablation_variants()) {
    AblationRow ir{variant, "individual", {}};
    ir.report.metric_name = "individual_ratio";
    ir.report.n_episodes = episodes;
    ir.report.per_seed = indiv_by_variant[variant];
    detail::fill_stats(ir.report);
    AblationRow jr{variant, "joint", {}};
    jr.report.metric_name = "joint_ratio";
    jr.report.n_episodes = episodes;
    jr.report.per_seed = joint_by_variant[variant];
    detail::fill_stats(jr.report);
    out.rows.push_back(std::move(ir));
    out.rows.push_back(std::move(jr));
  }
  double full = out.rows[1].report.mean;
  for (const AblationRow& row : out.rows)
    if (row.ratio_kind == "joint" && row.variant != "maviper" &&
        row.variant != "iviper" && row.report.mean > full)
      out.regression = true;
  return out;
}

// --- CSV emission ---
//
// One row per (metric, algorithm, depth, seed), then aggregate rows with the
// seed column set to mean / sd / ci95.

struct EvalRow {
  std::string metric;
  std::string algorithm;
  int depth = 0;
  std::uint64_t seed = 0;
  double value = 0.0;
};

inline std::string eval_rows_csv(const std::vector<EvalRow>& rows) {
  std::string csv = "metric,algorithm,depth,seed,value\n";
  for (const EvalRow& r : rows)
    csv += r.metric + "," + r.algorithm + "," + std::to_string(r.depth) + "," +
           std::to_string(r.seed) + "," + detail::fmt(r.value) + "\n";

  std::vector<std::tuple<std::string, std::string, int>> groups;
  for (const EvalRow& r : rows) {
    std::tuple<std::string, std::string, int> g{r.metric, r.algorithm, r.depth};
    if (std::find(groups.begin(), groups.end(), g) == groups.end())
      groups.push_back(g);
  }
  for (const auto& [metric, algorithm, depth] : groups) {
    EvalReport rep;
    for (const EvalRow& r : rows)
      if (r.metric == metric && r.algorithm == algorithm && r.depth == depth)
        rep.per_seed.push_back(r.value);
    detail::fill_stats(rep);
    std::string prefix =
        metric + "," + algorithm + "," + std::to_string(depth) + ",";
    csv += prefix + "mean," + detail::fmt(rep.mean) + "\n";
    csv += prefix + "sd," + detail::fmt(rep.sd) + "\n";
    csv += prefix + "ci95," + detail::fmt(rep.ci95) + "\n";
  }
  return csv;
}

inline std::string crossplay_csv(const CrossplayMatrix& m,
                                 const std::string& expert_label = "expert") {
  std::string csv = "row,col,team0_mean,team0_sd,team1_mean,team1_sd\n";
  for (const CrossplayCell& c : m.cells)
    csv += c.row + "," + c.col + "," + detail::fmt(c.team0_mean) + "," +
           detail::fmt(c.team0_sd) + "," + detail::fmt(c.team1_mean) + "," +
           detail::fmt(c.team1_sd) + "\n";
  for (const std::string& row : m.row_labels)
    csv += row + ",row_mean_excluding_expert," +
           detail::fmt(crossplay_source_mean(m, 0, row, expert_label)) + ",,,\n";
  for (const std::string& col : m.col_labels)
    csv += "col_mean_excluding_expert," + col + ",,," +
           detail::fmt(crossplay_source_mean(m, 1, col, expert_label)) + ",\n";
  return csv;
}

inline std::string feature_report_csv(const std::vector<FeatureReportRow>& rows) {
  std::string csv = "agent,feature,importance\n";
  for (const FeatureReportRow& row : rows)
    for (std::size_t f = 0; f < row.importance.size(); ++f) {
      std::string name = f < row.feature_names.size() ? row.feature_names[f]
                                                      : "f" + std::to_string(f);
      csv += std::to_string(row.agent) + "," + name + "," +
             detail::fmt(row.importance[f]) + "\n";
    }
  return csv;
}

inline std::string ablation_csv(const AblationOutcome& out) {
  std::string csv = "variant,ratio,mean,sd,ci95,n_seeds,regression\n";
  for (const AblationRow& row : out.rows)
    csv += row.variant + "," + row.ratio_kind + "," + detail::fmt(row.report.mean) +
           "," + detail::fmt(row.report.sd) + "," + detail::fmt(row.report.ci95) +
           "," + std::to_string(row.report.n_seeds) + "," +
           (out.regression ? "1" : "0") + "\n";
  return csv;
}

}  // namespace mapex
