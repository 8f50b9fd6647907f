// Command-line driver: train policies, evaluate them against the scripted
// experts, run cross-play and exploitability protocols, compare ablations,
// and export trees. One process per command; every output lands in a run
// directory named by config digest plus timestamp, with a manifest written
// before any results.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <mapex/mapex.hpp>

namespace fs = std::filesystem;
using namespace mapex;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
}

fs::path artifact_root(const Config& cfg) {
  std::string out_dir = cfg.get_str("run.out_dir");
  if (!out_dir.empty()) return out_dir;
  if (const char* env = std::getenv("MAPEX_ARTIFACT_ROOT")) return env;
  return "artifacts";
}

std::string timestamp_utc() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%S", &tm);
  return buf;
}

fs::path make_run_dir(const Config& cfg) {
  fs::path root = artifact_root(cfg);
  std::string base = cfg.digest() + "_" + timestamp_utc();
  fs::path dir = root / base;
  for (int k = 2; fs::exists(dir); ++k) dir = root / (base + "_" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

std::vector<std::vector<int>> extraction_teams(const Env& env, int extract_team) {
  if (extract_team >= 0) {
    if (extract_team >= static_cast<int>(env.teams.size()))
      throw ConfigError("extract_team " + std::to_string(extract_team) +
                        " does not exist");
    return {env.teams[extract_team]};
  }
  return env.teams;
}

std::vector<int> extraction_agents(const Env& env, int extract_team) {
  std::vector<int> agents;
  for (const std::vector<int>& team : extraction_teams(env, extract_team))
    agents.insert(agents.end(), team.begin(), team.end());
  std::sort(agents.begin(), agents.end());
  return agents;
}

void add_artifact(const fs::path& run_dir, const std::string& rel,
                  const std::string& bytes, RunManifest& manifest) {
  write_file(run_dir / rel, bytes);
  manifest.outputs.push_back(rel);
  manifest.checksums[rel] = checksum_hex(bytes);
}

void save_manifest(const fs::path& run_dir, const RunManifest& manifest) {
  write_file(run_dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
}

// --- train ---

int cmd_train(const Config& cfg) {
  Env env = make_env(env_config_from(cfg));
  ExpertProfile experts = ExpertProfile::scripted(env);
  const std::string algorithm = cfg.get_str("run.algorithm");
  const auto seeds = cfg.get_seeds("run.seeds");
  const int extract_team = cfg.get_int("extraction.extract_team");

  auto t0 = std::chrono::steady_clock::now();
  fs::path run_dir = make_run_dir(cfg);
  RunManifest manifest;
  manifest.config_digest = cfg.digest();
  manifest.algorithm = algorithm;
  manifest.environment = cfg.get_str("env.kind");
  manifest.depth = cfg.get_int("extraction.max_depth");
  manifest.seeds = seeds;
  save_manifest(run_dir, manifest);
  write_file(run_dir / "config.canonical", cfg.canonical());

  std::string progress;
  for (std::uint64_t s : seeds) {
    const std::string seed_dir = "seed_" + std::to_string(s);
    TrainedPolicies trained;
    if (algorithm == "fitted_q") {
      FqiConfig fcfg = fqi_config_from(cfg);
      fcfg.seed = s;
      auto policies = fitted_q_train(env, fcfg, extraction_agents(env, extract_team));
      for (const auto& [agent, policy] : policies) {
        add_artifact(run_dir,
                     seed_dir + "/agent_" + std::to_string(agent) + ".fqi.json",
                     serialize_fqi(policy), manifest);
        progress += "seed=" + std::to_string(s) + " " +
                    mapex::detail::progress_line(1, agent, 0.0, fcfg.n_samples,
                                                 false, true) +
                    "\n";
      }
      continue;
    }

    if (algorithm == "imitation") {
      ImitationConfig icfg = imitation_config_from(cfg);
      icfg.seed = s;
      trained = imitation_dt_train(env, experts, icfg,
                                   extraction_agents(env, extract_team));
    } else {
      ExtractionConfig xcfg = extraction_config_from(cfg);
      xcfg.seed = s;
      OracleConfig ocfg = oracle_config_from(cfg);
      ocfg.seed = s;
      QOracle oracle(env, experts, ocfg);
      if (algorithm == "maviper") {
        trained = maviper_train(env, experts, oracle, xcfg,
                                extraction_teams(env, extract_team));
      } else if (algorithm == "iviper") {
        trained = iviper_train(env, experts, oracle, xcfg,
                               extraction_agents(env, extract_team));
      } else {  // viper
        trained = viper_train(env, experts, oracle, xcfg);
      }
    }

    for (const auto& [agent, tree] : trained.trees) {
      const std::string base = seed_dir + "/agent_" + std::to_string(agent);
      add_artifact(run_dir, base + ".tree.json", serialize_tree(tree), manifest);
      add_artifact(run_dir, base + ".tree.dot", tree_to_dot(tree), manifest);
    }
    for (const std::string& line : trained.progress)
      progress += "seed=" + std::to_string(s) + " " + line + "\n";
  }

  add_artifact(run_dir, "progress.log", progress, manifest);
  manifest.status = "complete";
  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_manifest(run_dir, manifest);
  std::cout << run_dir.string() << "\n";
  return 0;
}

// --- artifact loading ---

struct LoadedRun {
  fs::path dir;
  Config cfg = Config::defaults();
  RunManifest manifest;
  std::map<std::uint64_t, std::map<int, DecisionTreePolicy>> trees;
  std::map<std::uint64_t, std::map<int, FqiPolicy>> fqi;
};

LoadedRun load_run(const fs::path& dir) {
  LoadedRun run;
  run.dir = dir;
  run.manifest =
      manifest_from_json(nlohmann::json::parse(read_file(dir / "manifest.json")));
  if (run.manifest.status != "complete")
    throw ManifestMismatch("run '" + dir.string() + "' is not complete");
  run.cfg = Config::from_canonical(read_file(dir / "config.canonical"));
  if (run.cfg.digest() != run.manifest.config_digest)
    throw ManifestMismatch("config digest mismatch in '" + dir.string() + "'");
  for (const auto& [rel, sum] : run.manifest.checksums) {
    std::string bytes = read_file(dir / rel);
    if (checksum_hex(bytes) != sum)
      throw ManifestMismatch("artifact '" + rel + "' fails its checksum");
  }
  for (std::uint64_t s : run.manifest.seeds) {
    const std::string prefix = "seed_" + std::to_string(s) + "/agent_";
    for (const std::string& rel : run.manifest.outputs) {
      if (rel.rfind(prefix, 0) != 0) continue;
      std::string tail = rel.substr(prefix.size());
      std::size_t dot = tail.find('.');
      if (dot == std::string::npos) continue;
      int agent = std::stoi(tail.substr(0, dot));
      std::string kind = tail.substr(dot);
      if (kind == ".tree.json")
        run.trees[s][agent] = deserialize_tree(read_file(dir / rel));
      else if (kind == ".fqi.json")
        run.fqi[s][agent] = deserialize_fqi(read_file(dir / rel));
    }
  }
  return run;
}

std::map<int, AgentPolicyFn> actors_for(const LoadedRun& run, std::uint64_t seed) {
  std::map<int, AgentPolicyFn> actors;
  auto t = run.trees.find(seed);
  if (t != run.trees.end())
    for (const auto& [agent, tree] : t->second)
      actors[agent] = tree_actor(std::make_shared<DecisionTreePolicy>(tree));
  auto f = run.fqi.find(seed);
  if (f != run.fqi.end())
    for (const auto& [agent, policy] : f->second)
      actors[agent] = fqi_actor(std::make_shared<FqiPolicy>(policy));
  if (actors.empty())
    throw ManifestMismatch("no policies stored for seed " + std::to_string(seed));
  return actors;
}

Config overridden(Config cfg, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) cfg.apply_override(s);
  return cfg;
}

// --- evaluate ---

int cmd_evaluate(const fs::path& artifacts, const std::vector<std::string>& sets,
                 bool dump_traces) {
  LoadedRun run = load_run(artifacts);
  Config cfg = overridden(run.cfg, sets);
  Env env = make_env(env_config_from(cfg));
  ExpertProfile experts = ExpertProfile::scripted(env);
  const int episodes = cfg.get_int("eval.episodes");

  std::vector<EvalRow> rows;
  for (std::uint64_t s : run.manifest.seeds) {
    auto actors = actors_for(run, s);
    std::map<int, std::vector<std::pair<int, AgentPolicyFn>>> by_team;
    for (const auto& [agent, fn] : actors)
      by_team[env.team_of[agent]].emplace_back(agent, fn);

    std::vector<std::uint64_t> seed_span = {s};
    for (const auto& [team, subs] : by_team) {
      EvalReport jr = joint_ratio(env, experts, team, subs, episodes, seed_span);
      std::string jname = "joint_ratio_team" + std::to_string(team) +
                          (jr.absolute ? "_absolute" : "");
      rows.push_back({jname, run.manifest.algorithm, run.manifest.depth, s,
                      jr.per_seed.at(0)});
      for (const auto& [agent, fn] : subs) {
        EvalReport ir = individual_ratio(env, experts, team, agent, fn, episodes,
                                         seed_span);
        std::string iname = "individual_ratio_agent" + std::to_string(agent) +
                            (ir.absolute ? "_absolute" : "");
        rows.push_back({iname, run.manifest.algorithm, run.manifest.depth, s,
                        ir.per_seed.at(0)});
      }
    }

    if (dump_traces) {
      std::vector<std::pair<int, AgentPolicyFn>> all_subs;
      for (const auto& [agent, fn] : actors) all_subs.emplace_back(agent, fn);
      PolicyProfile profile =
          with_substitutions(experts, all_subs, run.manifest.algorithm);
      std::string jsonl;
      for (std::uint64_t e : mapex::detail::episode_seeds(s, episodes))
        jsonl += trace_to_jsonl(env, run_episode(env, profile, e));
      write_file(artifacts / ("traces_seed_" + std::to_string(s) + ".jsonl"), jsonl);
    }
  }

  fs::path out = artifacts / "evaluate.csv";
  write_file(out, eval_rows_csv(rows));
  std::cout << out.string() << "\n";
  return 0;
}

// --- crossplay ---

int cmd_crossplay(const std::vector<fs::path>& dirs,
                  const std::vector<std::string>& sets) {
  if (dirs.empty()) throw ConfigError("cross-play needs at least one artifact dir");
  std::vector<LoadedRun> runs;
  for (const fs::path& d : dirs) runs.push_back(load_run(d));
  for (const LoadedRun& r : runs)
    for (const auto& [key, value] : r.cfg.values())
      if (key.rfind("env.", 0) == 0 && value != runs[0].cfg.get_str(key))
        throw ConfigError("artifact runs disagree on '" + key + "'");
  for (const LoadedRun& r : runs)
    if (r.manifest.seeds != runs[0].manifest.seeds)
      throw ConfigError("artifact runs disagree on the training seed list");

  Config cfg = overridden(runs[0].cfg, sets);
  Env env = make_env(env_config_from(cfg));
  if (env.teams.size() != 2)
    throw ConfigError("cross-play needs an environment with two teams");
  ExpertProfile experts = ExpertProfile::scripted(env);
  const int episodes = cfg.get_int("eval.episodes");
  const auto seeds = runs[0].manifest.seeds;

  std::vector<std::string> labels;
  for (const LoadedRun& r : runs) {
    std::string label = r.manifest.algorithm;
    int k = 2;
    while (std::find(labels.begin(), labels.end(), label) != labels.end())
      label = r.manifest.algorithm + "_" + std::to_string(k++);
    labels.push_back(label);
  }

  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>>
      cell_values;
  std::vector<std::string> row_labels, col_labels;
  for (std::uint64_t s : seeds) {
    std::vector<PolicySource> team0 = {{"expert", {}}};
    std::vector<PolicySource> team1 = {{"expert", {}}};
    for (std::size_t r = 0; r < runs.size(); ++r) {
      auto actors = actors_for(runs[r], s);
      for (int team = 0; team < 2; ++team) {
        std::vector<std::pair<int, AgentPolicyFn>> subs;
        bool complete = true;
        for (int agent : env.teams[team]) {
          auto it = actors.find(agent);
          if (it == actors.end()) {
            complete = false;
            break;
          }
          subs.emplace_back(agent, it->second);
        }
        if (!complete) continue;
        (team == 0 ? team0 : team1).push_back({labels[r], subs});
      }
    }
    std::vector<std::uint64_t> seed_span = {s};
    CrossplayMatrix m = crossplay(env, experts, team0, team1, episodes, seed_span);
    row_labels = m.row_labels;
    col_labels = m.col_labels;
    for (const CrossplayCell& c : m.cells) {
      auto& entry = cell_values[{c.row, c.col}];
      entry.first.push_back(c.team0_mean);
      entry.second.push_back(c.team1_mean);
    }
  }

  CrossplayMatrix final_m;
  final_m.row_labels = row_labels;
  final_m.col_labels = col_labels;
  final_m.n_seeds = static_cast<int>(seeds.size());
  final_m.n_episodes = episodes;
  for (const std::string& row : row_labels) {
    for (const std::string& col : col_labels) {
      const auto& entry = cell_values.at({row, col});
      EvalReport t0, t1;
      t0.per_seed = entry.first;
      t1.per_seed = entry.second;
      mapex::detail::fill_stats(t0);
      mapex::detail::fill_stats(t1);
      final_m.cells.push_back(
          {row, col, t0.mean, t0.sd, t1.mean, t1.sd});
    }
  }

  fs::path out = dirs[0] / "crossplay.csv";
  write_file(out, crossplay_csv(final_m));
  std::cout << out.string() << "\n";
  return 0;
}

// --- exploitability ---

int cmd_exploitability(const fs::path& artifacts, const std::vector<std::string>& sets,
                       int frozen_team) {
  LoadedRun run = load_run(artifacts);
  Config cfg = overridden(run.cfg, sets);
  Env env = make_env(env_config_from(cfg));
  if (env.teams.size() != 2)
    throw ConfigError("exploitability needs an environment with two teams");
  ExpertProfile experts = ExpertProfile::scripted(env);
  const int episodes = cfg.get_int("eval.episodes");
  const std::size_t cap = static_cast<std::size_t>(cfg.get_int("eval.state_cap"));

  std::vector<EvalRow> rows;
  for (std::uint64_t s : run.manifest.seeds) {
    auto actors = actors_for(run, s);
    for (int team = 0; team < 2; ++team) {
      if (frozen_team >= 0 && team != frozen_team) continue;
      std::vector<std::pair<int, AgentPolicyFn>> subs;
      bool complete = true;
      for (int agent : env.teams[team]) {
        auto it = actors.find(agent);
        if (it == actors.end()) {
          complete = false;
          break;
        }
        subs.emplace_back(agent, it->second);
      }
      if (!complete) continue;
      auto ep = mapex::detail::episode_seeds(s, episodes);
      ExploitabilityResult r = exploitability(env, experts, subs, team, ep, cap);
      rows.push_back({"exploitability_team" + std::to_string(team),
                      run.manifest.algorithm, run.manifest.depth, s, r.value});
    }
  }
  if (rows.empty())
    throw ConfigError("no team with complete policy coverage to freeze");

  fs::path out = artifacts / "exploitability.csv";
  write_file(out, eval_rows_csv(rows));
  std::cout << out.string() << "\n";
  return 0;
}

// --- ablate ---

int cmd_ablate(const Config& cfg) {
  Env env = make_env(env_config_from(cfg));
  ExpertProfile experts = ExpertProfile::scripted(env);
  int team = cfg.get_int("extraction.extract_team");
  if (team < 0) team = 0;
  if (team >= static_cast<int>(env.teams.size()))
    throw ConfigError("extract_team " + std::to_string(team) + " does not exist");

  auto t0 = std::chrono::steady_clock::now();
  fs::path run_dir = make_run_dir(cfg);
  RunManifest manifest;
  manifest.config_digest = cfg.digest();
  manifest.algorithm = "ablate";
  manifest.environment = cfg.get_str("env.kind");
  manifest.depth = cfg.get_int("extraction.max_depth");
  manifest.seeds = cfg.get_seeds("run.seeds");
  save_manifest(run_dir, manifest);
  write_file(run_dir / "config.canonical", cfg.canonical());

  // One manifest per variant; all must agree on seeds, environment and depth
  // before any comparison is emitted.
  std::vector<RunManifest> variant_manifests;
  for (const std::string& variant : ablation_variants()) {
    Config vcfg = cfg;
    if (variant == "maviper_no_prediction")
      vcfg.set("extraction.prediction_module", "0");
    else if (variant == "maviper_iviper_resampling")
      vcfg.set("extraction.resampling", "iviper_centralized");
    else if (variant == "iviper")
      vcfg.set("run.algorithm", "iviper");
    RunManifest vm;
    vm.status = "complete";
    vm.config_digest = vcfg.digest();
    vm.algorithm = variant;
    vm.environment = vcfg.get_str("env.kind");
    vm.depth = vcfg.get_int("extraction.max_depth");
    vm.seeds = vcfg.get_seeds("run.seeds");
    write_file(run_dir / ("variants/" + variant + "/manifest.json"),
               manifest_to_json(vm).dump(2) + "\n");
    write_file(run_dir / ("variants/" + variant + "/config.canonical"),
               vcfg.canonical());
    variant_manifests.push_back(std::move(vm));
  }
  for (const RunManifest& vm : variant_manifests) {
    if (vm.seeds != variant_manifests[0].seeds)
      throw ManifestMismatch("ablation variants disagree on seeds");
    if (vm.environment != variant_manifests[0].environment)
      throw ManifestMismatch("ablation variants disagree on environment");
    if (vm.depth != variant_manifests[0].depth)
      throw ManifestMismatch("ablation variants disagree on depth");
  }

  AblationOutcome out =
      ablation_suite(env, experts, oracle_config_from(cfg),
                     extraction_config_from(cfg), env.teams[team],
                     cfg.get_seeds("run.seeds"), cfg.get_int("eval.episodes"));
  add_artifact(run_dir, "ablation.csv", ablation_csv(out), manifest);
  manifest.status = "complete";
  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_manifest(run_dir, manifest);
  std::cout << run_dir.string() << "\n";
  return 0;
}

// --- export-tree ---

int cmd_export_tree(const fs::path& file, const std::string& format) {
  DecisionTreePolicy tree = deserialize_tree(read_file(file));
  if (format == "json")
    std::cout << serialize_tree(tree);
  else
    std::cout << tree_to_dot(tree);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decision-tree policy extraction for multi-agent grid worlds"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::string> artifact_dirs;
  bool dump_traces = false;
  int frozen_team = -1;
  std::string tree_file, format = "dot";

  CLI::App* train = app.add_subcommand("train", "train policies per the config");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--set", sets, "override section.key=value");

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "performance ratios for a trained run");
  evaluate->add_option("--artifacts", artifact_dirs, "trained run directory")
      ->required();
  evaluate->add_option("--set", sets, "override section.key=value");
  evaluate->add_flag("--dump-traces", dump_traces, "write episode traces as JSONL");

  CLI::App* cross = app.add_subcommand("crossplay", "all-pairs team evaluation");
  cross->add_option("--artifacts", artifact_dirs, "trained run directories")
      ->required();
  cross->add_option("--set", sets, "override section.key=value");

  CLI::App* exploit =
      app.add_subcommand("exploitability", "exact best-response gap");
  exploit->add_option("--artifacts", artifact_dirs, "trained run directory")
      ->required();
  exploit->add_option("--set", sets, "override section.key=value");
  exploit->add_option("--team", frozen_team, "freeze only this team id");

  CLI::App* ablate = app.add_subcommand("ablate", "joint-training ablation suite");
  ablate->add_option("--config", config_path, "config file")->required();
  ablate->add_option("--set", sets, "override section.key=value");

  CLI::App* export_tree = app.add_subcommand("export-tree", "print a stored tree");
  export_tree->add_option("--tree", tree_file, "tree JSON file")->required();
  export_tree->add_option("--format", format, "json or dot")
      ->check(CLI::IsMember({"json", "dot"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) {
      Config cfg = Config::from_file(config_path);
      for (const std::string& s : sets) cfg.apply_override(s);
      return cmd_train(cfg);
    }
    if (evaluate->parsed()) return cmd_evaluate(artifact_dirs.at(0), sets, dump_traces);
    if (cross->parsed()) {
      std::vector<fs::path> dirs(artifact_dirs.begin(), artifact_dirs.end());
      return cmd_crossplay(dirs, sets);
    }
    if (exploit->parsed())
      return cmd_exploitability(artifact_dirs.at(0), sets, frozen_team);
    if (ablate->parsed()) {
      Config cfg = Config::from_file(config_path);
      for (const std::string& s : sets) cfg.apply_override(s);
      return cmd_ablate(cfg);
    }
    if (export_tree->parsed()) return cmd_export_tree(tree_file, format);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
