#include <catch2/catch_amalgamated.hpp>

#include <mapex/mapex.hpp>

#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace mapex;

namespace {

EnvConfig pd_config(int defenders, int grid = 5, int horizon = 25) {
  EnvConfig cfg;
  cfg.kind = EnvKind::PhysicalDeception;
  cfg.grid_size = grid;
  cfg.horizon = horizon;
  cfg.roles["defenders"] = defenders;
  return cfg;
}

EnvConfig cn_config(int agents, int grid = 5, int horizon = 25) {
  EnvConfig cfg;
  cfg.kind = EnvKind::CooperativeNavigation;
  cfg.grid_size = grid;
  cfg.horizon = horizon;
  cfg.roles["agents"] = agents;
  return cfg;
}

EnvConfig pp_config(int predators, int prey, int grid = 5, int horizon = 25) {
  EnvConfig cfg;
  cfg.kind = EnvKind::PredatorPrey;
  cfg.grid_size = grid;
  cfg.horizon = horizon;
  cfg.roles["predators"] = predators;
  cfg.roles["prey"] = prey;
  return cfg;
}

bool same_state(const JointState& a, const JointState& b) {
  return a.positions == b.positions && a.velocities == b.velocities &&
         a.true_target_index == b.true_target_index && a.timestep == b.timestep;
}

// Hand-assembled state; positions = agents then landmarks.
JointState craft(const Env& env, std::vector<Cell> agents,
                 std::vector<Cell> landmarks, int true_target = -1,
                 int timestep = 0) {
  JointState s;
  s.positions = std::move(agents);
  s.positions.insert(s.positions.end(), landmarks.begin(), landmarks.end());
  if (env.cfg.kind == EnvKind::PredatorPrey)
    s.velocities.assign(env.n_agents, Cell{0, 0});
  s.true_target_index = true_target;
  s.timestep = timestep;
  return s;
}

// Uniform-random actions to the horizon, recording every outcome.
std::vector<StepOutcome> random_trace(const Env& env, std::uint64_t seed) {
  auto rng = make_rng({seed, 0x7e57ULL});
  JointState s = reset(env, seed);
  std::vector<StepOutcome> trace;
  while (s.timestep < env.cfg.horizon) {
    JointAction a(env.n_agents);
    for (int i = 0; i < env.n_agents; ++i)
      a[i] = static_cast<int>(bounded(rng, env.n_actions(i)));
    StepOutcome out = step(env, s, a);
    s = out.next_state;
    trace.push_back(std::move(out));
  }
  return trace;
}

}  // namespace

TEST_CASE("reset places entities on distinct cells with landmarks off the border",
          "[env]") {
  Env env = make_env(pd_config(2));
  JointState s = reset(env, 7);

  REQUIRE(env.n_agents == 3);   // two defenders and the adversary
  REQUIRE(env.n_landmarks == 2);
  REQUIRE(s.positions.size() == 5);
  std::set<std::pair<int, int>> cells;
  for (const Cell& c : s.positions) {
    CHECK(in_grid(env, c));
    cells.insert({c.row, c.col});
  }
  CHECK(cells.size() == 5);
  for (int l = 0; l < env.n_landmarks; ++l) {
    Cell lm = landmark_pos(env, s, l);
    CHECK(lm.row >= 1);
    CHECK(lm.row <= env.cfg.grid_size - 2);
    CHECK(lm.col >= 1);
    CHECK(lm.col <= env.cfg.grid_size - 2);
  }
  CHECK(s.true_target_index >= 0);
  CHECK(s.true_target_index < env.n_landmarks);
  CHECK(s.timestep == 0);

  SECTION("the same seed reproduces the same state") {
    CHECK(same_state(s, reset(env, 7)));
  }
  SECTION("different seeds vary the layout") {
    int distinct = 1;
    for (std::uint64_t e = 0; e < 10; ++e)
      if (!same_state(s, reset(env, e))) ++distinct;
    CHECK(distinct > 1);
  }
  SECTION("predator prey starts at rest and off the landmarks") {
    Env pp = make_env(pp_config(2, 2));
    JointState t = reset(pp, 3);
    REQUIRE(t.velocities.size() == 4);
    for (const Cell& v : t.velocities) CHECK(v == Cell{0, 0});
    for (int i = 0; i < pp.n_agents; ++i)
      for (int l = 0; l < pp.n_landmarks; ++l)
        CHECK_FALSE(t.positions[i] == landmark_pos(pp, t, l));
  }
}

TEST_CASE("configurations that cannot be placed are rejected", "[env]") {
  // A 3x3 grid has a single interior cell, so two blocking landmarks
  // cannot be placed even though 8 entities would fit on 9 cells.
  CHECK_THROWS_AS(make_env(pp_config(2, 2, 3)), ConfigError);
  CHECK_NOTHROW(make_env(pd_config(1, 3)));
  CHECK_NOTHROW(make_env(cn_config(1, 3)));
  CHECK_THROWS_AS(make_env(cn_config(8, 3)), ConfigError);

  EnvConfig tiny = pd_config(1, 2);
  CHECK_THROWS_AS(make_env(tiny), ConfigError);
  EnvConfig no_time = pd_config(1);
  no_time.horizon = 0;
  CHECK_THROWS_AS(make_env(no_time), ConfigError);
  EnvConfig bad_gamma = pd_config(1);
  bad_gamma.discount = 0.0;
  CHECK_THROWS_AS(make_env(bad_gamma), ConfigError);
  bad_gamma.discount = 1.0;
  CHECK_NOTHROW(make_env(bad_gamma));
}

TEST_CASE("stay actions keep every position fixed", "[env]") {
  Env env = make_env(pd_config(2));
  JointState s = reset(env, 1);
  StepOutcome out = step(env, s, {kStay, kStay, kStay});
  for (std::size_t i = 0; i < s.positions.size(); ++i)
    CHECK(out.next_state.positions[i] == s.positions[i]);
  CHECK(out.next_state.timestep == s.timestep + 1);
}

TEST_CASE("moves off the grid or into blocking landmarks are cancelled", "[env]") {
  SECTION("grid edges clamp") {
    Env env = make_env(pd_config(1));
    JointState s = craft(env, {{0, 0}, {4, 4}}, {{2, 2}}, 0);
    StepOutcome out = step(env, s, {1 /*up*/, 2 /*down*/});
    CHECK(out.next_state.positions[0] == Cell{0, 0});
    CHECK(out.next_state.positions[1] == Cell{4, 4});
  }
  SECTION("landmarks do not block movers outside predator prey") {
    Env env = make_env(pd_config(1));
    JointState s = craft(env, {{2, 1}, {4, 4}}, {{2, 2}}, 0);
    StepOutcome out = step(env, s, {4 /*right*/, kStay});
    CHECK(out.next_state.positions[0] == Cell{2, 2});
  }
  SECTION("predator prey landmarks block, and two-cell moves leap them") {
    Env env = make_env(pp_config(1, 1));
    JointState s = craft(env, {{1, 2}, {1, 0}}, {{1, 3}, {1, 1}});
    // Predator walks into the landmark and is cancelled; the prey's two-cell
    // move lands beyond the other landmark and is legal.
    StepOutcome out = step(env, s, {4 /*right*/, 8 /*right2*/});
    CHECK(out.next_state.positions[0] == Cell{1, 2});
    CHECK(out.next_state.positions[1] == Cell{1, 2});
    CHECK(out.next_state.velocities[0] == Cell{0, 0});
    CHECK(out.next_state.velocities[1] == Cell{0, 2});
  }
}

TEST_CASE("simultaneous moves may share a cell and emit collision events", "[env]") {
  Env env = make_env(cn_config(2));
  JointState s = craft(env, {{2, 1}, {2, 3}}, {{1, 1}, {3, 3}});
  StepOutcome out = step(env, s, {4 /*right*/, 3 /*left*/});

  REQUIRE(out.events.size() == 1);
  CHECK(out.events[0] == Event{EventKind::Collision, 0, 1});
  // Shared reward: both landmarks are 2 away from the shared cell, plus the
  // collision penalty.
  CHECK(out.rewards[0] == -5.0);
  CHECK(out.rewards[1] == -5.0);
}

TEST_CASE("coverage and adversary events fire within the epsilon radius", "[env]") {
  SECTION("exact coverage at epsilon zero") {
    Env env = make_env(pd_config(2));
    JointState s = craft(env, {{1, 2}, {0, 0}, {4, 4}}, {{1, 1}, {3, 3}}, 0);
    StepOutcome out = step(env, s, {3 /*left*/, kStay, kStay});
    REQUIRE(out.events.size() == 1);
    CHECK(out.events[0] == Event{EventKind::TargetCovered, 0, -1});
    // Only one target covered: defenders earn just the adversary's distance.
    CHECK(out.rewards[0] == 6.0);
    CHECK(out.rewards[1] == 6.0);
    CHECK(out.rewards[2] == -6.0);
  }
  SECTION("epsilon one widens every radius and orders events canonically") {
    EnvConfig cfg = pd_config(2);
    cfg.epsilon_cells = 1;
    Env env = make_env(cfg);
    JointState s = craft(env, {{1, 2}, {3, 2}, {3, 1}}, {{2, 1}, {2, 3}}, 0);
    StepOutcome out = step(env, s, {2 /*down*/, 1 /*up*/, kStay});
    // Both defenders land on (2,2), one cell from each target; the adversary
    // sits one cell from the true target.
    std::vector<Event> expected = {
        {EventKind::TargetCovered, 0, -1},
        {EventKind::TargetCovered, 1, -1},
        {EventKind::AdversaryReachedTrue, -1, -1},
        {EventKind::Collision, 0, 1},
    };
    CHECK(out.events == expected);
    CHECK(out.rewards[0] == 2.0);   // distance 1 plus the full-coverage bonus
    CHECK(out.rewards[1] == 2.0);
    CHECK(out.rewards[2] == 4.0);   // -1 distance plus the arrival bonus
  }
}

TEST_CASE("predator touches are rewarded symmetrically", "[env]") {
  Env env = make_env(pp_config(1, 1));
  JointState s = craft(env, {{1, 1}, {1, 2}}, {{2, 3}, {3, 1}});
  StepOutcome out = step(env, s, {4 /*right*/, kStay});
  std::vector<Event> expected = {
      {EventKind::Collision, 0, 1},
      {EventKind::PredatorTouch, 0, 1},
  };
  CHECK(out.events == expected);
  CHECK(out.rewards[0] == 10.0);
  CHECK(out.rewards[1] == -10.0);
}

TEST_CASE("stepping past the horizon or with bad actions is rejected", "[env]") {
  Env env = make_env(pd_config(1, 5, 2));
  JointState s = reset(env, 0);
  s = step(env, s, {kStay, kStay}).next_state;
  s = step(env, s, {kStay, kStay}).next_state;
  CHECK_THROWS_AS(step(env, s, {kStay, kStay}), EpisodeOver);

  JointState fresh = reset(env, 0);
  CHECK_THROWS_AS(step(env, fresh, {kStay}), ConfigError);
  CHECK_THROWS_AS(step(env, fresh, {5, kStay}), ConfigError);
  CHECK_THROWS_AS(step(env, fresh, {-1, kStay}), ConfigError);

  Env pp = make_env(pp_config(1, 1));
  JointState t = reset(pp, 0);
  CHECK_NOTHROW(step(pp, t, {kStay, 8}));      // prey two-cell move
  CHECK_THROWS_AS(step(pp, t, {8, kStay}), ConfigError);  // predator cannot
}

TEST_CASE("observations are relative offsets with the true target shown only to defenders",
          "[env]") {
  Env env = make_env(pd_config(2));
  JointState s = craft(env, {{2, 2}, {0, 1}, {4, 0}}, {{2, 2}, {1, 3}}, 1);

  Observation d0 = observe(env, s, 0);
  Observation expected_d0 = {0, 0, -1, 1, -2, -1, 2, -2, -1, 1};
  CHECK(d0 == expected_d0);

  Observation adv = observe(env, s, 2);
  Observation expected_adv = {-2, 2, -3, 3, -2, 2, -4, 1};
  CHECK(adv == expected_adv);

  auto d0_names = observation_feature_names(env, 0);
  auto adv_names = observation_feature_names(env, 2);
  REQUIRE(d0_names.size() == d0.size());
  REQUIRE(adv_names.size() == adv.size());
  CHECK(d0_names[d0_names.size() - 2] == "true_target_drow");
  CHECK(d0_names.back() == "true_target_dcol");
  for (const std::string& n : adv_names) CHECK(n.find("true_target") == std::string::npos);
}

TEST_CASE("predator prey observations binarize everything beyond self state", "[env]") {
  SECTION("signs of positive deltas read plus one") {
    Env env = make_env(pp_config(1, 1));
    JointState s = craft(env, {{0, 0}, {3, 1}}, {{1, 3}, {3, 3}});
    s.velocities[1] = {1, 0};
    Observation o = observe(env, s, 0);
    REQUIRE(o.size() == 12);
    // Own position and velocity are raw.
    CHECK(o[0] == 0);
    CHECK(o[1] == 0);
    CHECK(o[2] == 0);
    CHECK(o[3] == 0);
    // The prey sits below and to the right.
    CHECK(o[8] == 1);
    CHECK(o[9] == 1);
    // Prey velocity sign relative to own.
    CHECK(o[10] == 1);
    CHECK(o[11] == 0);
  }
  SECTION("binarized features stay in the sign range over rollouts") {
    Env env = make_env(pp_config(2, 2));
    auto rng = make_rng({99});
    JointState s = reset(env, 42);
    for (int t = 0; t < env.cfg.horizon; ++t) {
      for (int i = 0; i < env.n_agents; ++i) {
        Observation o = observe(env, s, i);
        std::size_t want = env.agent_roles[i] == Role::Prey ? 20 : 22;
        REQUIRE(o.size() == want);
        REQUIRE(observation_feature_names(env, i).size() == want);
        CHECK(o[0] == s.positions[i].row);
        CHECK(o[1] == s.positions[i].col);
        CHECK(o[2] == s.velocities[i].row);
        CHECK(o[3] == s.velocities[i].col);
        for (std::size_t f = first_binarized_feature(env); f < o.size(); ++f) {
          CHECK(o[f] >= -1.0);
          CHECK(o[f] <= 1.0);
          CHECK(o[f] == static_cast<int>(o[f]));
        }
      }
      JointAction a(env.n_agents);
      for (int i = 0; i < env.n_agents; ++i)
        a[i] = static_cast<int>(bounded(rng, env.n_actions(i)));
      s = step(env, s, a).next_state;
    }
  }
}

TEST_CASE("velocities record the last actual move", "[env]") {
  Env env = make_env(pp_config(1, 1));
  JointState s = craft(env, {{2, 2}, {0, 0}}, {{1, 3}, {3, 3}});
  StepOutcome out = step(env, s, {4 /*right*/, 1 /*up, clamped*/});
  CHECK(out.next_state.velocities[0] == Cell{0, 1});
  CHECK(out.next_state.velocities[1] == Cell{0, 0});
}

TEST_CASE("team metrics summarize complete traces", "[env]") {
  SECTION("navigation distance is zero when every target is covered at the end") {
    Env env = make_env(cn_config(2, 5, 2));
    JointState s = craft(env, {{1, 1}, {3, 3}}, {{1, 1}, {3, 3}});
    std::vector<StepOutcome> trace;
    trace.push_back(step(env, s, {kStay, kStay}));
    trace.push_back(step(env, trace.back().next_state, {kStay, kStay}));
    CHECK(team_metric(env, trace, 0) == 0.0);
    CHECK_FALSE(metric_higher_is_better(env, 0));
  }
  SECTION("deception success is an indicator of some fully covered timestep") {
    Env env = make_env(pd_config(2, 4, 3));
    JointState s = craft(env, {{1, 1}, {2, 2}, {0, 3}}, {{1, 1}, {2, 2}}, 0);
    std::vector<StepOutcome> trace;
    trace.push_back(step(env, s, {kStay, kStay, 3}));
    trace.push_back(step(env, trace.back().next_state, {1, kStay, 3}));
    trace.push_back(step(env, trace.back().next_state, {kStay, kStay, 2}));
    CHECK(team_metric(env, trace, 0) == 1.0);  // covered at the first step only
    CHECK(team_metric(env, trace, 1) == 1.0);  // adversary arrives at the last
    CHECK(metric_higher_is_better(env, 0));
    CHECK(metric_higher_is_better(env, 1));
  }
  SECTION("touch counts accumulate") {
    Env env = make_env(pp_config(1, 1, 5, 3));
    JointState s = craft(env, {{1, 1}, {1, 2}}, {{2, 3}, {3, 1}});
    std::vector<StepOutcome> trace;
    trace.push_back(step(env, s, {4, kStay}));
    trace.push_back(step(env, trace.back().next_state, {kStay, kStay}));
    trace.push_back(step(env, trace.back().next_state, {kStay, kStay}));
    CHECK(team_metric(env, trace, 0) == 3.0);
    CHECK(team_metric(env, trace, 1) == 3.0);
    CHECK(metric_higher_is_better(env, 0));
    CHECK_FALSE(metric_higher_is_better(env, 1));
  }
  SECTION("short traces are rejected") {
    Env env = make_env(pd_config(1, 5, 4));
    auto trace = random_trace(env, 5);
    trace.pop_back();
    CHECK_THROWS_AS(team_metric(env, trace, 0), IncompleteTrace);
  }
  SECTION("metric ranges hold on random rollouts") {
    Env pd = make_env(pd_config(2, 5, 10));
    Env cn = make_env(cn_config(3, 5, 10));
    Env pp = make_env(pp_config(2, 1, 5, 10));
    for (std::uint64_t e = 0; e < 5; ++e) {
      auto tpd = random_trace(pd, e);
      double d0 = team_metric(pd, tpd, 0), d1 = team_metric(pd, tpd, 1);
      CHECK((d0 == 0.0 || d0 == 1.0));
      CHECK((d1 == 0.0 || d1 == 1.0));
      CHECK(team_metric(cn, random_trace(cn, e), 0) >= 0.0);
      double touches = team_metric(pp, random_trace(pp, e), 0);
      CHECK(touches >= 0.0);
      CHECK(touches == static_cast<int>(touches));
    }
  }
}

TEST_CASE("episode traces serialize one record per step", "[env]") {
  Env env = make_env(pd_config(2, 5, 25));
  ExpertProfile experts = ExpertProfile::scripted(env);
  PolicyProfile profile = PolicyProfile::from_expert(experts);
  EpisodeTrace trace = run_episode(env, profile, 11);
  REQUIRE(trace.outcomes.size() == 25);
  REQUIRE(trace.states.size() == 25);

  std::string jsonl = trace_to_jsonl(env, trace);
  std::vector<std::string> lines;
  std::stringstream ss(jsonl);
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  REQUIRE(lines.size() == 25);

  nlohmann::json first = nlohmann::json::parse(lines[0]);
  CHECK(first.at("t").get<int>() == 0);
  CHECK(first.at("actions").size() == 3);
  CHECK(first.at("rewards").size() == 3);
  CHECK(first.at("positions").size() == 5);
  CHECK(first.at("events").is_array());

  // Bit-identical reruns.
  CHECK(trace_to_jsonl(env, run_episode(env, profile, 11)) == jsonl);
}
