#include <catch2/catch_amalgamated.hpp>

#include <mapex/mapex.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace mapex;

namespace {

EnvConfig pd_config(int defenders, int grid, int horizon) {
  EnvConfig cfg;
  cfg.kind = EnvKind::PhysicalDeception;
  cfg.grid_size = grid;
  cfg.horizon = horizon;
  cfg.roles["defenders"] = defenders;
  return cfg;
}

EnvConfig cn_config(int agents, int grid, int horizon) {
  EnvConfig cfg;
  cfg.kind = EnvKind::CooperativeNavigation;
  cfg.grid_size = grid;
  cfg.horizon = horizon;
  cfg.roles["agents"] = agents;
  return cfg;
}

EnvConfig pp_config(int predators, int prey, int grid, int horizon) {
  EnvConfig cfg;
  cfg.kind = EnvKind::PredatorPrey;
  cfg.grid_size = grid;
  cfg.horizon = horizon;
  cfg.roles["predators"] = predators;
  cfg.roles["prey"] = prey;
  return cfg;
}

const AgentPolicyFn kStayPut = [](const Env&, const JointState&, int) {
  return kStay;
};

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// Exhaustive best response: the frozen side is deterministic, so the best
// state-feedback response equals the best open-loop action sequence. Tries
// every sequence for the opposing team and keeps the best oriented return.
double brute_force_best_response(const Env& env, const PolicyProfile& frozen,
                                 int opp_team, std::uint64_t seed) {
  std::vector<int> opp;
  for (int i = 0; i < env.n_agents; ++i)
    if (env.team_of[i] == opp_team) opp.push_back(i);
  const bool indicator = metric_is_indicator(env);
  const double orient = metric_higher_is_better(env, opp_team) ? 1.0 : -1.0;

  std::vector<int> arity;
  for (int t = 0; t < env.cfg.horizon; ++t)
    for (int a : opp) arity.push_back(env.n_actions(a));
  std::vector<int> seq(arity.size(), 0);

  const JointState start = reset(env, seed);
  double best = 0.0;
  bool first = true;
  while (true) {
    JointState s = start;
    double total = 0.0;
    std::size_t d = 0;
    for (int t = 0; t < env.cfg.horizon; ++t) {
      JointAction joint(env.n_agents, kStay);
      for (int i = 0; i < env.n_agents; ++i)
        if (env.team_of[i] != opp_team) joint[i] = frozen.acts[i](env, s, i);
      for (std::size_t k = 0; k < opp.size(); ++k) joint[opp[k]] = seq[d++];
      StepOutcome out = step(env, s, joint);
      double gain = orient * metric_step_gain(env, out, opp_team);
      total = indicator ? std::max(total, gain) : total + gain;
      s = out.next_state;
    }
    if (first || total > best) best = total;
    first = false;

    std::size_t k = 0;
    for (; k < seq.size(); ++k) {
      if (++seq[k] < arity[k]) break;
      seq[k] = 0;
    }
    if (k == seq.size()) break;
  }
  return best;
}

void check_exploitability_exhaustively(const Env& env, int frozen_team,
                                       const std::vector<std::uint64_t>& seeds) {
  ExpertProfile experts = ExpertProfile::scripted(env);
  PolicyProfile frozen = PolicyProfile::from_expert(experts, "frozen");
  const int opp = 1 - frozen_team;
  const double orient = metric_higher_is_better(env, opp) ? 1.0 : -1.0;

  ExploitabilityResult r = exploitability(env, experts, {}, frozen_team, seeds);
  REQUIRE(r.per_seed.size() == seeds.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    double br = brute_force_best_response(env, frozen, opp, seeds[i]);
    EpisodeTrace trace = run_episode(env, frozen, seeds[i]);
    double inc = orient * team_metric(env, trace.outcomes, opp);
    CHECK(r.best_response[i] == br);
    CHECK(r.incumbent[i] == inc);
    CHECK(r.per_seed[i] == br - inc);
    CHECK(r.per_seed[i] >= 0.0);
    sum += r.per_seed[i];
  }
  CHECK(r.value == sum / seeds.size());
}

}  // namespace

TEST_CASE("ratio arithmetic orients toward one means parity", "[eval]") {
  bool zero = false;
  CHECK(ratio_from_values(3.0, 2.0, true, &zero) == 1.5);
  CHECK(ratio_from_values(1.0, 4.0, true, &zero) == 0.25);
  CHECK(ratio_from_values(9.0, 2.0, true, &zero) == 4.5);  // no clamping
  CHECK(ratio_from_values(2.0, 4.0, false, &zero) == 2.0);  // lower is better
  CHECK(ratio_from_values(4.0, 2.0, false, &zero) == 0.5);
  CHECK_FALSE(zero);

  CHECK(ratio_from_values(2.0, 0.0, true, &zero) == 0.0);
  CHECK(zero);
  zero = false;
  CHECK(ratio_from_values(0.0, 5.0, false, &zero) == 0.0);
  CHECK(zero);  // lower is better divides by the value side
}

TEST_CASE("report statistics summarize per seed replicates", "[eval]") {
  EvalReport r;
  r.per_seed = {1.0, 2.0, 3.0, 4.0};
  detail::fill_stats(r);
  CHECK(r.n_seeds == 4);
  CHECK(r.mean == 2.5);
  CHECK(r.sd == std::sqrt(5.0 / 3.0));
  CHECK(r.ci95 == 1.96 * std::sqrt(5.0 / 3.0) / std::sqrt(4.0));

  EvalReport one;
  one.per_seed = {7.0};
  detail::fill_stats(one);
  CHECK(one.mean == 7.0);
  CHECK(one.sd == 0.0);
  CHECK(one.ci95 == 0.0);

  EvalReport none;
  detail::fill_stats(none);
  CHECK(none.n_seeds == 0);
  CHECK(none.mean == 0.0);

  SECTION("each seed expands into its own episode seed block") {
    auto ep = detail::episode_seeds(42, 3);
    REQUIRE(ep.size() == 3);
    for (std::uint64_t e = 0; e < 3; ++e)
      CHECK(ep[e] == seed_mix({42, seedtag::kEvalEpisode, e}));
  }
}

TEST_CASE("substituting the expert for itself scores exact parity", "[eval]") {
  Env env = make_env(pd_config(2, 4, 6));
  ExpertProfile experts = ExpertProfile::scripted(env);
  AgentPolicyFn self = [&experts](const Env& e, const JointState& s, int a) {
    return expert_act(experts, e, s, a);
  };
  std::vector<std::uint64_t> seeds = {3, 4};

  EvalReport ind = individual_ratio(env, experts, 0, 0, self, 3, seeds);
  CHECK(ind.metric_name == "individual_ratio");
  CHECK(ind.n_seeds == 2);
  CHECK(ind.n_episodes == 3);
  CHECK_FALSE(ind.absolute);
  CHECK(ind.per_seed == std::vector<double>{1.0, 1.0});
  CHECK(ind.mean == 1.0);
  CHECK(ind.sd == 0.0);
  CHECK(ind.ci95 == 0.0);

  EvalReport joint =
      joint_ratio(env, experts, 0, {{0, self}, {1, self}}, 3, seeds);
  CHECK(joint.metric_name == "joint_ratio");
  CHECK(joint.per_seed == std::vector<double>{1.0, 1.0});
}

TEST_CASE("ratios divide the oriented per seed means", "[eval]") {
  SECTION("lower is better inverts to baseline over value") {
    Env env = make_env(cn_config(1, 5, 1));
    ExpertProfile experts = ExpertProfile::scripted(env);
    PolicyProfile baseline = PolicyProfile::from_expert(experts, "expert");
    PolicyProfile swapped = with_substitutions(experts, {{0, kStayPut}}, "stay");
    std::vector<std::uint64_t> seeds = {1, 2, 3};

    EvalReport r = joint_ratio(env, experts, 0, {{0, kStayPut}}, 4, seeds);
    REQUIRE_FALSE(r.absolute);
    REQUIRE(r.per_seed.size() == 3);
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      auto ep = detail::episode_seeds(seeds[i], 4);
      double v = mean_team_metric(env, swapped, 0, ep);
      double b = mean_team_metric(env, baseline, 0, ep);
      CHECK(v > b);  // standing still leaves more distance than one greedy step
      CHECK(r.per_seed[i] == b / v);
      CHECK(r.per_seed[i] < 1.0);
    }

    EvalReport ind = individual_ratio(env, experts, 0, 0, kStayPut, 4, seeds);
    CHECK(ind.per_seed == r.per_seed);  // one-substitution joint is individual
  }
  SECTION("higher is better divides value by baseline") {
    Env env = make_env(pd_config(2, 4, 4));
    ExpertProfile experts = ExpertProfile::scripted(env);
    PolicyProfile baseline = PolicyProfile::from_expert(experts, "expert");
    std::vector<std::uint64_t> seeds = {0, 2, 5};

    EvalReport r = individual_ratio(env, experts, 1, 2, kStayPut, 4, seeds);
    REQUIRE_FALSE(r.absolute);
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      auto ep = detail::episode_seeds(seeds[i], 4);
      CHECK(mean_team_metric(env, baseline, 1, ep) > 0.0);
      CHECK(r.per_seed[i] == 0.0);  // a motionless adversary never arrives
    }
  }
}

TEST_CASE("a zero denominator switches the report to absolute metrics", "[eval]") {
  Env env = make_env(cn_config(1, 4, 8));
  ExpertProfile experts = ExpertProfile::scripted(env);
  AgentPolicyFn self = [&experts](const Env& e, const JointState& s, int a) {
    return expert_act(experts, e, s, a);
  };
  PolicyProfile baseline = PolicyProfile::from_expert(experts, "expert");
  std::vector<std::uint64_t> seeds = {1, 2};

  // Eight steps are plenty to reach the landmark, so the expert's
  // lower-is-better metric is zero and the ratio denominator vanishes.
  for (std::uint64_t s : seeds)
    REQUIRE(mean_team_metric(env, baseline, 0, detail::episode_seeds(s, 2)) == 0.0);

  EvalReport r = individual_ratio(env, experts, 0, 0, self, 2, seeds);
  CHECK(r.absolute);
  CHECK(r.per_seed == std::vector<double>{0.0, 0.0});
  CHECK(r.mean == 0.0);
}

TEST_CASE("ratio reports validate team membership and episode counts", "[eval]") {
  Env env = make_env(pd_config(2, 4, 4));
  ExpertProfile experts = ExpertProfile::scripted(env);
  std::vector<std::uint64_t> seeds = {1};
  CHECK_THROWS_AS(individual_ratio(env, experts, 0, 2, kStayPut, 2, seeds),
                  ConfigError);
  CHECK_THROWS_AS(joint_ratio(env, experts, 0, {{0, kStayPut}, {2, kStayPut}}, 2,
                              seeds),
                  ConfigError);
  CHECK_THROWS_AS(individual_ratio(env, experts, 0, 0, kStayPut, 0, seeds),
                  ConfigError);
}

TEST_CASE("cross play fills every cell on shared seeds", "[eval]") {
  Env env = make_env(pd_config(2, 4, 3));
  ExpertProfile experts = ExpertProfile::scripted(env);
  const AgentPolicyFn right = [](const Env&, const JointState&, int) { return 4; };

  std::vector<PolicySource> team0 = {
      {"expert", {}},
      {"stay", {{0, kStayPut}, {1, kStayPut}}},
      {"drift", {{0, right}, {1, right}}},
  };
  std::vector<PolicySource> team1 = {
      {"expert", {}},
      {"stay", {{2, kStayPut}}},
  };
  std::vector<std::uint64_t> seeds = {5, 6};

  int trace_calls = 0;
  auto on_trace = [&](const std::string& row, const std::string& col,
                      const EpisodeTrace& trace) {
    ++trace_calls;
    CHECK((row == "expert" || row == "stay" || row == "drift"));
    CHECK((col == "expert" || col == "stay"));
    CHECK(trace.outcomes.size() == 3);
  };
  CrossplayMatrix m = crossplay(env, experts, team0, team1, 2, seeds, on_trace);

  CHECK(m.row_labels == std::vector<std::string>{"expert", "stay", "drift"});
  CHECK(m.col_labels == std::vector<std::string>{"expert", "stay"});
  REQUIRE(m.cells.size() == 6);
  CHECK(m.n_seeds == 2);
  CHECK(m.n_episodes == 2);
  CHECK(trace_calls == 6 * 2 * 2);

  SECTION("cells reproduce direct episode accounting") {
    PolicyProfile pairing = with_substitutions(
        experts, {{0, kStayPut}, {1, kStayPut}, {2, kStayPut}}, "stay_vs_stay");
    EvalReport t0, t1;
    for (std::uint64_t s : seeds) {
      double m0 = 0.0, m1 = 0.0;
      for (std::uint64_t e : detail::episode_seeds(s, 2)) {
        EpisodeTrace trace = run_episode(env, pairing, e);
        m0 += team_metric(env, trace.outcomes, 0);
        m1 += team_metric(env, trace.outcomes, 1);
      }
      t0.per_seed.push_back(m0 / 2);
      t1.per_seed.push_back(m1 / 2);
    }
    detail::fill_stats(t0);
    detail::fill_stats(t1);
    const CrossplayCell& cell = m.at("stay", "stay");
    CHECK(cell.team0_mean == t0.mean);
    CHECK(cell.team0_sd == t0.sd);
    CHECK(cell.team1_mean == t1.mean);
    CHECK(cell.team1_sd == t1.sd);
  }
  SECTION("source means exclude the opposing expert") {
    CHECK(crossplay_source_mean(m, 0, "stay") == m.at("stay", "stay").team0_mean);
    CHECK(crossplay_source_mean(m, 0, "expert") ==
          m.at("expert", "stay").team0_mean);
    CHECK(crossplay_source_mean(m, 1, "stay") ==
          (m.at("stay", "stay").team1_mean + m.at("drift", "stay").team1_mean) /
              2.0);
    CHECK_THROWS_AS(crossplay_source_mean(m, 0, "nobody"), ConfigError);
  }
  SECTION("lookups of absent cells fail") {
    CHECK_THROWS_AS(m.at("stay", "drift"), ConfigError);
  }
  SECTION("repeat runs reproduce the matrix") {
    CrossplayMatrix again = crossplay(env, experts, team0, team1, 2, seeds);
    REQUIRE(again.cells.size() == m.cells.size());
    for (std::size_t i = 0; i < m.cells.size(); ++i) {
      CHECK(again.cells[i].team0_mean == m.cells[i].team0_mean);
      CHECK(again.cells[i].team1_mean == m.cells[i].team1_mean);
    }
  }
}

TEST_CASE("cross play validates sources and team structure", "[eval]") {
  Env env = make_env(pd_config(2, 4, 3));
  ExpertProfile experts = ExpertProfile::scripted(env);
  std::vector<PolicySource> ok = {{"expert", {}}, {"stay", {{2, kStayPut}}}};
  std::vector<PolicySource> solo = {{"expert", {}}};
  std::vector<PolicySource> wrong = {{"expert", {}}, {"bad", {{0, kStayPut}}}};
  std::vector<PolicySource> team0 = {{"expert", {}},
                                     {"stay", {{0, kStayPut}, {1, kStayPut}}}};
  std::vector<std::uint64_t> seeds = {1};

  CHECK_THROWS_AS(crossplay(env, experts, solo, ok, 1, seeds), ConfigError);
  CHECK_THROWS_AS(crossplay(env, experts, team0, solo, 1, seeds), ConfigError);
  CHECK_THROWS_AS(crossplay(env, experts, team0, wrong, 1, seeds), ConfigError);

  Env cn = make_env(cn_config(2, 4, 3));
  ExpertProfile cn_experts = ExpertProfile::scripted(cn);
  CHECK_THROWS_AS(crossplay(cn, cn_experts, team0, ok, 1, seeds), ConfigError);
}

TEST_CASE("exploitability equals exhaustive sequence search", "[eval]") {
  SECTION("deception, frozen defenders, adversary responds") {
    check_exploitability_exhaustively(make_env(pd_config(1, 3, 3)), 0, {1, 2, 3});
  }
  SECTION("deception, frozen adversary, defender responds") {
    check_exploitability_exhaustively(make_env(pd_config(1, 3, 3)), 1, {4, 5});
  }
  SECTION("deception with a two defender response team") {
    check_exploitability_exhaustively(make_env(pd_config(2, 4, 2)), 1, {6, 7});
  }
  SECTION("pursuit, frozen predator, prey responds with nine actions") {
    check_exploitability_exhaustively(make_env(pp_config(1, 1, 4, 3)), 0, {1, 2});
  }
  SECTION("pursuit, frozen prey, predator responds") {
    check_exploitability_exhaustively(make_env(pp_config(1, 1, 4, 3)), 1, {3, 4});
  }
}

TEST_CASE("best response facts on the deception game", "[eval]") {
  SECTION("a single landmark leaves nothing to exploit") {
    Env env = make_env(pd_config(1, 4, 6));
    ExpertProfile experts = ExpertProfile::scripted(env);
    auto r = exploitability(env, experts, {}, 0, std::vector<std::uint64_t>{0, 1, 2, 3, 4});
    for (double v : r.per_seed) CHECK(v == 0.0);
    CHECK(r.value == 0.0);
  }
  SECTION("a heuristic adversary is exploitable once targets are ambiguous") {
    Env env = make_env(pd_config(2, 4, 4));
    ExpertProfile experts = ExpertProfile::scripted(env);
    auto r = exploitability(env, experts, {}, 0, std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5});
    for (double v : r.per_seed) CHECK(v >= 0.0);
    CHECK(r.per_seed[0] == 0.0);  // expert adversary happens to pick the true target
    CHECK(r.per_seed[1] == 1.0);  // and here it commits to the decoy
    CHECK(r.value > 0.0);
  }
}

TEST_CASE("exploitability guards its preconditions", "[eval]") {
  Env cn = make_env(cn_config(2, 4, 3));
  ExpertProfile cn_experts = ExpertProfile::scripted(cn);
  std::vector<std::uint64_t> seeds = {1};
  CHECK_THROWS_AS(exploitability(cn, cn_experts, {}, 0, seeds), ConfigError);

  Env pd = make_env(pd_config(2, 4, 4));
  ExpertProfile experts = ExpertProfile::scripted(pd);
  CHECK_THROWS_AS(exploitability(pd, experts, {{2, kStayPut}}, 0, seeds),
                  ConfigError);
  CHECK_THROWS_AS(exploitability(pd, experts, {}, 0, seeds, 2),
                  StateSpaceTooLarge);
}

TEST_CASE("feature reports average importances across trees", "[eval]") {
  // A dataset whose only informative feature is the last of four.
  std::vector<WeightedSample> informative;
  for (int i = 0; i < 12; ++i)
    informative.push_back({{static_cast<double>(i % 3), 1.0, -2.0,
                            static_cast<double>(i)},
                           i < 6 ? 0 : 1,
                           1.0});
  TrainOptions opt;
  opt.max_depth = 3;
  DecisionTreePolicy last_only = train_decision_tree(informative, opt);

  std::vector<WeightedSample> first, second;
  for (int i = 0; i < 6; ++i) {
    first.push_back({{static_cast<double>(i), 0.0}, i < 3 ? 0 : 1, 1.0});
    second.push_back({{0.0, static_cast<double>(i)}, i < 3 ? 0 : 1, 1.0});
  }
  DecisionTreePolicy f0_tree = train_decision_tree(first, opt);
  f0_tree.feature_names = {"alpha", "beta"};
  DecisionTreePolicy f1_tree = train_decision_tree(second, opt);

  std::map<int, std::vector<DecisionTreePolicy>> by_agent;
  by_agent[0] = {last_only, last_only};
  by_agent[5] = {f0_tree, f1_tree};
  auto rows = feature_report(by_agent);

  REQUIRE(rows.size() == 2);
  CHECK(rows[0].agent == 0);
  CHECK(rows[0].importance == std::vector<double>{0.0, 0.0, 0.0, 1.0});
  CHECK(rows[1].agent == 5);
  CHECK(rows[1].importance == std::vector<double>{0.5, 0.5});
  CHECK(rows[1].feature_names == std::vector<std::string>{"alpha", "beta"});
  for (const FeatureReportRow& row : rows) {
    double sum = 0.0;
    for (double v : row.importance) sum += v;
    CHECK(sum == Catch::Approx(1.0).epsilon(1e-12));
  }

  std::map<int, std::vector<DecisionTreePolicy>> empty_trees;
  empty_trees[3] = {};
  CHECK_THROWS_AS(feature_report(empty_trees), EmptyDataset);
}

TEST_CASE("csv emitters lay out rows and aggregates", "[eval]") {
  SECTION("per seed rows then mean sd ci per group") {
    std::vector<EvalRow> rows = {{"r", "alg", 1, 0, 0.5},
                                 {"r", "alg", 1, 1, 1.5},
                                 {"x", "b", 2, 7, 2.0}};
    auto lines = split_lines(eval_rows_csv(rows));
    REQUIRE(lines.size() == 10);
    CHECK(lines[0] == "metric,algorithm,depth,seed,value");
    CHECK(lines[1] == "r,alg,1,0,0.5");
    CHECK(lines[2] == "r,alg,1,1,1.5");
    CHECK(lines[3] == "x,b,2,7,2.0");
    CHECK(lines[4] == "r,alg,1,mean,1.0");
    CHECK(lines[5] == "r,alg,1,sd," + detail::fmt(std::sqrt(0.5)));
    CHECK(lines[6] ==
          "r,alg,1,ci95," + detail::fmt(1.96 * std::sqrt(0.5) / std::sqrt(2.0)));
    CHECK(lines[7] == "x,b,2,mean,2.0");
    CHECK(lines[8] == "x,b,2,sd,0.0");
    CHECK(lines[9] == "x,b,2,ci95,0.0");
  }
  SECTION("cross play tables append exclusion means") {
    Env env = make_env(pd_config(2, 4, 3));
    ExpertProfile experts = ExpertProfile::scripted(env);
    std::vector<PolicySource> team0 = {{"expert", {}},
                                       {"stay", {{0, kStayPut}, {1, kStayPut}}}};
    std::vector<PolicySource> team1 = {{"expert", {}}, {"stay", {{2, kStayPut}}}};
    std::vector<std::uint64_t> seeds = {5};
    CrossplayMatrix m = crossplay(env, experts, team0, team1, 1, seeds);
    auto lines = split_lines(crossplay_csv(m));
    REQUIRE(lines.size() == 1 + 4 + 2 + 2);
    CHECK(lines[0] == "row,col,team0_mean,team0_sd,team1_mean,team1_sd");
    CHECK(lines[5] ==
          "expert,row_mean_excluding_expert," +
              detail::fmt(crossplay_source_mean(m, 0, "expert")) + ",,,");
    CHECK(lines[8] == "col_mean_excluding_expert,stay,,," +
                          detail::fmt(crossplay_source_mean(m, 1, "stay")) + ",");
  }
  SECTION("feature importances are one row per agent and feature") {
    FeatureReportRow row;
    row.agent = 7;
    row.feature_names = {"a", "b"};
    row.importance = {0.25, 0.75};
    auto lines = split_lines(feature_report_csv({row}));
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "agent,feature,importance");
    CHECK(lines[1] == "7,a,0.25");
    CHECK(lines[2] == "7,b,0.75");
  }
}

TEST_CASE("the ablation suite compares the variants on shared seeds", "[eval]") {
  Env env = make_env(pd_config(2, 4, 4));
  ExpertProfile experts = ExpertProfile::scripted(env);
  OracleConfig oracle_cfg;
  oracle_cfg.enumeration_cap = 32;
  oracle_cfg.mc_samples = 4;
  ExtractionConfig base;
  base.iterations = 1;
  base.rollouts_per_iter = 1;
  base.max_depth = 2;
  base.eval_episodes_for_selection = 2;
  base.max_samples = 50;
  std::vector<std::uint64_t> train_seeds = {1, 2};

  AblationOutcome out =
      ablation_suite(env, experts, oracle_cfg, base, {0, 1}, train_seeds, 2);

  REQUIRE(out.rows.size() == 8);
  const auto& variants = ablation_variants();
  REQUIRE(variants == std::vector<std::string>{"maviper", "maviper_no_prediction",
                                               "maviper_iviper_resampling",
                                               "iviper"});
  for (std::size_t v = 0; v < variants.size(); ++v) {
    CHECK(out.rows[2 * v].variant == variants[v]);
    CHECK(out.rows[2 * v].ratio_kind == "individual");
    CHECK(out.rows[2 * v].report.metric_name == "individual_ratio");
    CHECK(out.rows[2 * v + 1].variant == variants[v]);
    CHECK(out.rows[2 * v + 1].ratio_kind == "joint");
    CHECK(out.rows[2 * v + 1].report.n_seeds == 2);
    CHECK(out.rows[2 * v + 1].report.n_episodes == 2);
  }

  // The regression flag restates a comparison of the reported means.
  double full = out.rows[1].report.mean;
  bool expect = out.rows[3].report.mean > full || out.rows[5].report.mean > full;
  CHECK(out.regression == expect);

  auto lines = split_lines(ablation_csv(out));
  REQUIRE(lines.size() == 9);
  CHECK(lines[0] == "variant,ratio,mean,sd,ci95,n_seeds,regression");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    CHECK(lines[i].substr(lines[i].size() - 1) == (out.regression ? "1" : "0"));
    CHECK(lines[i].find(",2,") != std::string::npos);  // n_seeds column
  }
}
