#pragma once

// Reproducible training runs over a suite of toy environments: rollout (with
// optional expert-prefix resampling), filtering, gradient, plain gradient
// ascent, and periodic evaluation from the initial state.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "agentrl/chunk_rl.hpp"
#include "agentrl/masked_sft.hpp"
#include "agentrl/policy.hpp"
#include "agentrl/resampler.hpp"
#include "agentrl/sim_env.hpp"

namespace agentrl {

enum class Objective { masked_sft, baseline_rl, chunk_rl, ipa };
enum class ResamplingStrategy { none, sequential_rollback, parallel_init };

std::string_view to_string(Objective o);
std::string_view to_string(ResamplingStrategy s);

struct ResamplingConfig {
  ResamplingStrategy strategy = ResamplingStrategy::none;
  double mastery_threshold = 0.8;
  int anchor_count = 4;
  AnchorRule anchors;
  int expert_search_budget = 100000;
  int expert_refresh_every = 0;  // 0 keeps the initial expert
  int retry_budget = 8;
};

struct ExperimentConfig {
  std::vector<EnvSpec> envs;
  std::uint64_t seed = 0;
  std::uint64_t policy_init_seed = 0;
  double policy_init_scale = 0.0;
  int turn_length = 1;
  double learning_rate = 0.5;
  int steps = 100;
  int batch_size = 16;  // rollouts per task per step
  int eval_every = 10;
  int eval_episodes = 64;
  int staleness = 0;    // rollouts come from the policy this many updates back
  Objective objective = Objective::chunk_rl;
  RlConfig rl;
  SftMaskConfig sft;
  SamplerConfig sampler;
  ResamplingConfig resampling;
  std::string output_dir;
};

// Throws std::invalid_argument on the first invalid field.
void validate(const ExperimentConfig& cfg);
FeatureLayout layout_for(const ExperimentConfig& cfg);

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);
// AGENTRL_OUTPUT_DIR and AGENTRL_SEED override the corresponding fields.
void apply_env_overrides(ExperimentConfig& cfg);

struct StepRecord {
  int step = 0;
  double train_success = 0.0;
  std::vector<double> train_success_per_task;
  std::optional<double> test_success;
  std::vector<double> test_success_per_task;
  double grad_norm = 0.0;
  std::vector<std::vector<int>> prefixes;  // per task, prefix of each anchor in use
  std::size_t discarded = 0;
  std::size_t dropped_slots = 0;
  int policy_version = 0;
};

nlohmann::json to_json(const StepRecord& r);
StepRecord step_record_from_json(const nlohmann::json& j);

struct ExperimentResult {
  std::vector<StepRecord> records;
  ToyPolicy final_policy;
  std::vector<int> expert_search_attempts;  // per task, -1 when no expert was sought
};

// Runs the training loop. When cfg.output_dir is non-empty, writes config.json,
// metrics.jsonl (one line per step, flushed as written) and policy.ckpt there.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Success rate of `episodes` rollouts from the initial state of each task.
std::vector<double> evaluate_policy(const ToyPolicy& policy, const ExperimentConfig& cfg,
                                    int episodes, std::uint64_t seed);

struct MetricsSummary {
  std::size_t steps = 0;
  double mean_train_success = 0.0;
  double mean_test_success = 0.0;
  double max_test_success = 0.0;
  double final_test_success = 0.0;
  double final_min_task_test_success = 0.0;
  double grad_norm_mean = 0.0;
  double grad_norm_variance = 0.0;
  std::size_t total_discarded = 0;
};

// Returns std::nullopt when the run has no metric rows.
std::optional<MetricsSummary> summarize(const std::vector<StepRecord>& records);
std::vector<StepRecord> read_metrics(const std::string& run_dir);
// Aggregates run_dir/metrics.jsonl and writes run_dir/summary.json. Throws if
// the run directory or its metrics file is missing.
std::optional<MetricsSummary> emit_metrics(const std::string& run_dir);
nlohmann::json to_json(const MetricsSummary& s);

double population_variance(const std::vector<double>& xs);

}  // namespace agentrl
