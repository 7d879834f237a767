// agentrl: run toy agentic-RL experiments, evaluate checkpoints, curate
// instances, simulate the async scheduler, report crucial forks, and serve
// environments over stdio.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "agentrl/curator.hpp"
#include "agentrl/experiment.hpp"
#include "agentrl/resampler.hpp"
#include "agentrl/scheduler.hpp"
#include "agentrl/sim_env.hpp"

using namespace agentrl;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitEmpty = 2;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path + " is not valid JSON: " + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig cfg = load_experiment_config(path);
  apply_env_overrides(cfg);
  return cfg;
}

SchedulerConfig scheduler_config_from_json(const json& j) {
  SchedulerConfig c;
  c.total_gpus = j.value("total_gpus", c.total_gpus);
  c.async_ratio = j.value("async_ratio", c.async_ratio);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.train_duration = j.value("train_duration", c.train_duration);
  c.sync_duration = j.value("sync_duration", c.sync_duration);
  c.train_gpus = j.value("train_gpus", c.train_gpus);
  c.shrink_gpus = j.value("shrink_gpus", c.shrink_gpus);
  c.migration_stretch = j.value("migration_stretch", c.migration_stretch);
  c.transition_cost = j.value("transition_cost", c.transition_cost);
  const std::string mode = j.value("mode", std::string("static_split"));
  if (mode == "static_split")
    c.mode = SchedulerMode::static_split;
  else if (mode == "multiplexed")
    c.mode = SchedulerMode::multiplexed;
  else
    throw std::invalid_argument("unknown scheduler mode: " + mode);
  if (j.contains("rollout_latency")) {
    const json& l = j["rollout_latency"];
    c.rollout_latency.body = l.value("body", c.rollout_latency.body);
    c.rollout_latency.body_jitter = l.value("body_jitter", c.rollout_latency.body_jitter);
    c.rollout_latency.tail_prob = l.value("tail_prob", c.rollout_latency.tail_prob);
    c.rollout_latency.tail = l.value("tail", c.rollout_latency.tail);
  }
  return c;
}

int cmd_run(const std::string& config_path) {
  ExperimentConfig cfg = load_config(config_path);
  if (cfg.output_dir.empty()) throw std::invalid_argument("output_dir must be set for a run");
  ExperimentResult r = run_experiment(cfg);
  std::optional<MetricsSummary> s = emit_metrics(cfg.output_dir);
  std::cout << "run: " << r.records.size() << " steps written to " << cfg.output_dir << '\n';
  if (s) std::cout << to_json(*s).dump(2) << '\n';
  return kExitOk;
}

int cmd_summarize(const std::string& run_dir) {
  std::optional<MetricsSummary> s = emit_metrics(run_dir);
  if (!s) {
    std::cout << "{}\n";
    return kExitEmpty;
  }
  std::cout << to_json(*s).dump(2) << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint, int episodes, std::uint64_t seed) {
  ExperimentConfig cfg = load_config(config_path);
  validate(cfg);
  ToyPolicy policy = load_checkpoint(checkpoint);
  const FeatureLayout layout = layout_for(cfg);
  if (policy.feature_dim() != layout.dim() ||
      policy.vocab_size() != static_cast<std::size_t>(cfg.envs.front().vocab_size))
    throw std::invalid_argument("checkpoint shape does not match the environment suite");
  std::vector<double> per_task = evaluate_policy(policy, cfg, episodes, seed);
  json out{{"checkpoint_version", policy.version()}, {"episodes", episodes}, {"per_task", json::array()}};
  double sum = 0.0;
  for (std::size_t t = 0; t < per_task.size(); ++t) {
    out["per_task"].push_back({{"env", cfg.envs[t].name}, {"test_success", per_task[t]}});
    sum += per_task[t];
  }
  out["test_success"] = sum / static_cast<double>(per_task.size());
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_curate(const std::string& specs_path, const std::string& manifest_path,
               const std::vector<std::uint64_t>& evaluator_seeds, double evaluator_scale, int episodes,
               std::size_t target, const CuratorConfig& ccfg, std::uint64_t seed) {
  json specs_json = read_json_file(specs_path);
  if (!specs_json.is_array()) throw std::invalid_argument("spec file must hold a JSON array of env specs");
  std::vector<InstanceRecord> records;
  for (const json& sj : specs_json) {
    EnvSpec spec = env_spec_from_json(sj);
    validate(spec);
    const FeatureLayout layout{1, effective_max_turns(spec), ccfg.turn_length};
    std::vector<Evaluator> evaluators;
    evaluators.push_back({"uniform", ToyPolicy(layout.dim(), static_cast<std::size_t>(spec.vocab_size)), {}});
    for (std::uint64_t s : evaluator_seeds)
      evaluators.push_back({"random_" + std::to_string(s),
                            ToyPolicy::random(layout.dim(), static_cast<std::size_t>(spec.vocab_size),
                                              evaluator_scale, s),
                            {}});
    records.push_back(estimate_difficulty(spec, evaluators, episodes, seed, ccfg));
  }
  write_manifest(manifest_path, records);
  std::vector<InstanceRecord> selected = select_training_set(records, target);
  std::cout << "curate: " << records.size() << " instances, " << selected.size() << " selected\n";
  for (const InstanceRecord& r : selected)
    std::cout << r.id() << ' ' << r.env_spec.name << ' ' << r.mean_pass_rate() << '\n';
  return kExitOk;
}

int cmd_schedule_sim(const std::string& config_path, std::uint64_t seed, int steps,
                     const std::string& events_path) {
  SchedulerConfig cfg = scheduler_config_from_json(read_json_file(config_path));
  SimulationResult r = run_simulation(cfg, seed, steps);
  if (!events_path.empty()) {
    std::ofstream out(events_path);
    if (!out) throw std::runtime_error("cannot write " + events_path);
    write_event_log(out, r.events);
  }
  std::cout << metrics_text(r.metrics);
  return kExitOk;
}

int cmd_fork_report(const std::string& config_path, const std::string& checkpoint,
                    const std::string& expert_path, int n, double threshold, std::int64_t timestamp,
                    const std::string& out_path, std::uint64_t seed) {
  ExperimentConfig cfg = load_config(config_path);
  validate(cfg);
  std::vector<Trajectory> trajs = read_trajectories(expert_path);
  if (trajs.empty()) throw std::invalid_argument("expert file holds no trajectory");
  ExpertTrajectory expert = make_expert(trajs.front(), cfg.rl.positive_reward_cutoff);
  const int slot = expert.base.task_slot;
  if (slot < 0 || static_cast<std::size_t>(slot) >= cfg.envs.size())
    throw std::invalid_argument("expert task slot outside the environment suite");
  ToyPolicy policy = load_checkpoint(checkpoint);
  const FeatureLayout layout = layout_for(cfg);
  if (policy.feature_dim() != layout.dim())
    throw std::invalid_argument("checkpoint shape does not match the environment suite");
  SamplerVariant sampler(policy, cfg.sampler);
  RolloutContext ctx{policy, sampler, layout, cfg.turn_length};
  SimEnv env(cfg.envs[static_cast<std::size_t>(slot)]);
  std::vector<PrefixProbe> probes = probe_prefixes(expert, env, ctx, n, seed);
  if (!out_path.empty()) write_fork_report(out_path, probes, timestamp);
  for (const PrefixProbe& p : probes) std::cout << fork_report_line(p, timestamp) << '\n';
  if (auto f = find_crucial_fork(probes, threshold))
    std::cout << "crucial fork: chunk " << f->chunk_index << " (" << f->success_rate_before << " -> "
              << f->success_rate_after << ")\n";
  else
    std::cout << "crucial fork: none above threshold\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toy agentic RL: chunk-level policy optimisation, resampling and scheduling"};
  app.require_subcommand(1);

  std::string config, checkpoint, run_dir, out_path, specs, expert;
  std::uint64_t seed = 0;
  int episodes = 256, steps = 10, n = 64;
  double threshold = 0.0, evaluator_scale = 1.0;
  std::int64_t timestamp = 0;
  std::size_t target = 100;
  std::vector<std::uint64_t> evaluator_seeds;
  CuratorConfig ccfg;

  auto* run = app.add_subcommand("run", "Run a training experiment from a JSON config");
  run->add_option("config", config, "Experiment config")->required()->check(CLI::ExistingFile);

  auto* summarize = app.add_subcommand("summarize", "Aggregate a run directory's metrics");
  summarize->add_option("run_dir", run_dir, "Run directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a config's environment suite");
  eval->add_option("--config", config, "Experiment config naming the env suite")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", checkpoint, "Policy checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes, "Episodes per task")->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed, "Evaluation seed");

  auto* curate = app.add_subcommand("curate", "Estimate pass rates and write an instance manifest");
  curate->add_option("--specs", specs, "JSON array of env specs")->required()->check(CLI::ExistingFile);
  curate->add_option("--manifest", out_path, "Manifest output (JSONL)")->required();
  curate->add_option("--evaluator-seed", evaluator_seeds, "Extra random-policy evaluator seeds");
  curate->add_option("--evaluator-scale", evaluator_scale, "Parameter scale of random evaluators");
  curate->add_option("--episodes", episodes, "Rollouts per evaluator")->check(CLI::PositiveNumber);
  curate->add_option("--target", target, "Number of instances to select");
  curate->add_option("--band-low", ccfg.band_low, "Pass rate at or below which an instance is impossible");
  curate->add_option("--band-high", ccfg.band_high, "Pass rate at or above which an instance is trivial");
  curate->add_option("--turn-length", ccfg.turn_length, "Tokens per turn")->check(CLI::PositiveNumber);
  curate->add_option("--seed", seed, "Rollout seed");

  auto* sched = app.add_subcommand("schedule-sim", "Simulate asynchronous rollout/training scheduling");
  sched->add_option("config", config, "Scheduler config (JSON)")->required()->check(CLI::ExistingFile);
  sched->add_option("--steps", steps, "Training steps to simulate")->check(CLI::PositiveNumber);
  sched->add_option("--seed", seed, "Latency seed");
  sched->add_option("--events", out_path, "Event log output (JSONL)");

  auto* fork = app.add_subcommand("fork-report", "Probe resampling success from every expert prefix");
  fork->add_option("--config", config, "Experiment config naming the env suite")->required()->check(CLI::ExistingFile);
  fork->add_option("--checkpoint", checkpoint, "Policy checkpoint")->required()->check(CLI::ExistingFile);
  fork->add_option("--expert", expert, "Expert trajectory (JSONL, first line used)")->required()->check(CLI::ExistingFile);
  fork->add_option("-n,--samples", n, "Rollouts per prefix")->check(CLI::PositiveNumber);
  fork->add_option("--threshold", threshold, "Minimum success-rate jump for a crucial fork");
  fork->add_option("--timestamp", timestamp, "Logical timestamp recorded in the report");
  fork->add_option("--out", out_path, "Report output (JSONL)");
  fork->add_option("--seed", seed, "Rollout seed");

  auto* server = app.add_subcommand("env-server", "Serve environments over stdin/stdout (JSON lines)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config);
    if (*summarize) return cmd_summarize(run_dir);
    if (*eval) return cmd_eval(config, checkpoint, episodes, seed);
    if (*curate)
      return cmd_curate(specs, out_path, evaluator_seeds, evaluator_scale, episodes, target, ccfg, seed);
    if (*sched) return cmd_schedule_sim(config, seed, steps, out_path);
    if (*fork) return cmd_fork_report(config, checkpoint, expert, n, threshold, timestamp, out_path, seed);
    if (*server) {
      EnvRegistry registry;
      serve(registry, std::cin, std::cout);
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "agentrl: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
