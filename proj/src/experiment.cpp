#include "agentrl/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "agentrl/rng.hpp"
#include "agentrl/scoring.hpp"

namespace agentrl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::masked_sft: return "masked_sft";
    case Objective::baseline_rl: return "baseline_rl";
    case Objective::chunk_rl: return "chunk_rl";
    case Objective::ipa: return "ipa";
  }
  return "?";
}

std::string_view to_string(ResamplingStrategy s) {
  switch (s) {
    case ResamplingStrategy::none: return "none";
    case ResamplingStrategy::sequential_rollback: return "sequential_rollback";
    case ResamplingStrategy::parallel_init: return "parallel_init";
  }
  return "?";
}

namespace {

Objective objective_from_string(const std::string& s) {
  for (Objective o : {Objective::masked_sft, Objective::baseline_rl, Objective::chunk_rl, Objective::ipa})
    if (to_string(o) == s) return o;
  throw std::invalid_argument("unknown objective: " + s);
}

ResamplingStrategy strategy_from_string(const std::string& s) {
  for (ResamplingStrategy r : {ResamplingStrategy::none, ResamplingStrategy::sequential_rollback,
                               ResamplingStrategy::parallel_init})
    if (to_string(r) == s) return r;
  throw std::invalid_argument("unknown resampling strategy: " + s);
}

std::string_view placement_name(AnchorPlacement p) {
  switch (p) {
    case AnchorPlacement::uniform: return "uniform";
    case AnchorPlacement::random: return "random";
    case AnchorPlacement::explicit_list: return "explicit";
  }
  return "?";
}

AnchorPlacement placement_from_string(const std::string& s) {
  for (AnchorPlacement p : {AnchorPlacement::uniform, AnchorPlacement::random, AnchorPlacement::explicit_list})
    if (placement_name(p) == s) return p;
  throw std::invalid_argument("unknown anchor placement: " + s);
}

std::string_view rule_name(RelevanceRule r) {
  switch (r) {
    case RelevanceRule::all_relevant: return "all_relevant";
    case RelevanceRule::tool_proximity: return "tool_proximity";
    case RelevanceRule::recorded: return "recorded";
  }
  return "?";
}

RelevanceRule rule_from_string(const std::string& s) {
  for (RelevanceRule r : {RelevanceRule::all_relevant, RelevanceRule::tool_proximity, RelevanceRule::recorded})
    if (rule_name(r) == s) return r;
  throw std::invalid_argument("unknown relevance rule: " + s);
}

int max_turns_of(const std::vector<EnvSpec>& envs) {
  int m = 1;
  for (const EnvSpec& e : envs) m = std::max(m, effective_max_turns(e));
  return m;
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
  if (cfg.envs.empty()) throw std::invalid_argument("envs: at least one environment required");
  for (const EnvSpec& e : cfg.envs) {
    try {
      validate(e);
    } catch (const EnvError& err) {
      throw std::invalid_argument(std::string("envs: ") + err.what());
    }
    if (e.vocab_size != cfg.envs.front().vocab_size)
      throw std::invalid_argument("envs: all environments must share one vocabulary size");
  }
  if (cfg.turn_length < 1) throw std::invalid_argument("turn_length must be >= 1");
  if (cfg.policy_init_scale < 0.0) throw std::invalid_argument("policy_init_scale must be >= 0");
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (cfg.steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (cfg.eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
  if (cfg.eval_episodes < 1) throw std::invalid_argument("eval_episodes must be >= 1");
  if (cfg.staleness < 0) throw std::invalid_argument("staleness must be >= 0");
  if (cfg.sampler.perturbation_scale < 0.0)
    throw std::invalid_argument("sampler.perturbation_scale must be >= 0");
  if (cfg.sampler.rounding_bits && (*cfg.sampler.rounding_bits < 0 || *cfg.sampler.rounding_bits > 52))
    throw std::invalid_argument("sampler.rounding_bits must be in [0, 52]");
  validate(cfg.rl);
  validate(cfg.sft);
  const ResamplingConfig& r = cfg.resampling;
  if (r.retry_budget < 1) throw std::invalid_argument("resampling.retry_budget must be >= 1");
  if (r.strategy != ResamplingStrategy::none) {
    if (!(r.mastery_threshold > 0.0 && r.mastery_threshold <= 1.0))
      throw std::invalid_argument("resampling.mastery_threshold must be in (0, 1]");
    if (r.expert_search_budget < 1)
      throw std::invalid_argument("resampling.expert_search_budget must be >= 1");
    if (r.expert_refresh_every < 0)
      throw std::invalid_argument("resampling.expert_refresh_every must be >= 0");
    for (const EnvSpec& e : cfg.envs)
      if (e.noise.kind != NoiseKind::none)
        throw std::invalid_argument("resampling requires deterministic environments (" + e.name + ")");
  }
  if (r.strategy == ResamplingStrategy::parallel_init) {
    if (r.anchor_count < 1) throw std::invalid_argument("resampling.anchor_count must be >= 1");
    if (cfg.batch_size % r.anchor_count != 0)
      throw std::invalid_argument("batch_size must be a multiple of resampling.anchor_count");
    for (const EnvSpec& e : cfg.envs) {
      if (r.anchor_count > e.chunk_count)
        throw std::invalid_argument("resampling.anchor_count exceeds the chunk count of " + e.name);
      choose_anchors(e.chunk_count, r.anchor_count, r.anchors);  // throws on a bad explicit list
    }
  }
}

FeatureLayout layout_for(const ExperimentConfig& cfg) {
  return FeatureLayout{static_cast<int>(cfg.envs.size()), max_turns_of(cfg.envs), cfg.turn_length};
}

json to_json(const ExperimentConfig& cfg) {
  json envs = json::array();
  for (const EnvSpec& e : cfg.envs) envs.push_back(to_json(e));
  json sampler{{"perturbation_scale", cfg.sampler.perturbation_scale},
               {"perturbation_seed", cfg.sampler.perturbation_seed}};
  sampler["rounding_bits"] = cfg.sampler.rounding_bits ? json(*cfg.sampler.rounding_bits) : json(nullptr);
  const ResamplingConfig& r = cfg.resampling;
  return json{
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir},
      {"envs", envs},
      {"policy", {{"init_seed", cfg.policy_init_seed}, {"init_scale", cfg.policy_init_scale},
                  {"turn_length", cfg.turn_length}}},
      {"training", {{"objective", to_string(cfg.objective)}, {"learning_rate", cfg.learning_rate},
                    {"steps", cfg.steps}, {"batch_size", cfg.batch_size}, {"eval_every", cfg.eval_every},
                    {"eval_episodes", cfg.eval_episodes}, {"staleness", cfg.staleness}}},
      {"rl", {{"gamma", cfg.rl.gamma}, {"mismatch_threshold", cfg.rl.mismatch_threshold},
              {"clip_low", cfg.rl.clip_low}, {"clip_high", cfg.rl.clip_high},
              {"lambda_il", cfg.rl.lambda_il}, {"lambda_rl", cfg.rl.lambda_rl},
              {"positive_reward_cutoff", cfg.rl.positive_reward_cutoff}}},
      {"sft", {{"epsilon", cfg.sft.epsilon}, {"relevance_rule", rule_name(cfg.sft.relevance_rule)},
               {"window", cfg.sft.window}}},
      {"sampler", sampler},
      {"resampling", {{"strategy", to_string(r.strategy)}, {"mastery_threshold", r.mastery_threshold},
                      {"anchor_count", r.anchor_count}, {"placement", placement_name(r.anchors.placement)},
                      {"anchor_seed", r.anchors.seed}, {"anchors", r.anchors.explicit_anchors},
                      {"expert_search_budget", r.expert_search_budget},
                      {"expert_refresh_every", r.expert_refresh_every}, {"retry_budget", r.retry_budget}}},
  };
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  cfg.seed = j.value("seed", cfg.seed);
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  if (!j.contains("envs") || !j["envs"].is_array()) throw std::invalid_argument("envs: array required");
  for (const json& e : j["envs"]) {
    try {
      cfg.envs.push_back(env_spec_from_json(e));
    } catch (const std::exception& err) {
      throw std::invalid_argument(std::string("envs: ") + err.what());
    }
  }
  if (j.contains("policy")) {
    const json& p = j["policy"];
    cfg.policy_init_seed = p.value("init_seed", cfg.policy_init_seed);
    cfg.policy_init_scale = p.value("init_scale", cfg.policy_init_scale);
    cfg.turn_length = p.value("turn_length", cfg.turn_length);
  }
  if (j.contains("training")) {
    const json& t = j["training"];
    if (t.contains("objective")) cfg.objective = objective_from_string(t["objective"].get<std::string>());
    cfg.learning_rate = t.value("learning_rate", cfg.learning_rate);
    cfg.steps = t.value("steps", cfg.steps);
    cfg.batch_size = t.value("batch_size", cfg.batch_size);
    cfg.eval_every = t.value("eval_every", cfg.eval_every);
    cfg.eval_episodes = t.value("eval_episodes", cfg.eval_episodes);
    cfg.staleness = t.value("staleness", cfg.staleness);
  }
  if (j.contains("rl")) {
    const json& r = j["rl"];
    cfg.rl.gamma = r.value("gamma", cfg.rl.gamma);
    cfg.rl.mismatch_threshold = r.value("mismatch_threshold", cfg.rl.mismatch_threshold);
    cfg.rl.clip_low = r.value("clip_low", cfg.rl.clip_low);
    cfg.rl.clip_high = r.value("clip_high", cfg.rl.clip_high);
    cfg.rl.lambda_il = r.value("lambda_il", cfg.rl.lambda_il);
    cfg.rl.lambda_rl = r.value("lambda_rl", cfg.rl.lambda_rl);
    cfg.rl.positive_reward_cutoff = r.value("positive_reward_cutoff", cfg.rl.positive_reward_cutoff);
  }
  if (j.contains("sft")) {
    const json& s = j["sft"];
    cfg.sft.epsilon = s.value("epsilon", cfg.sft.epsilon);
    if (s.contains("relevance_rule")) cfg.sft.relevance_rule = rule_from_string(s["relevance_rule"]);
    cfg.sft.window = s.value("window", cfg.sft.window);
  }
  if (j.contains("sampler")) {
    const json& s = j["sampler"];
    cfg.sampler.perturbation_scale = s.value("perturbation_scale", cfg.sampler.perturbation_scale);
    cfg.sampler.perturbation_seed = s.value("perturbation_seed", cfg.sampler.perturbation_seed);
    if (s.contains("rounding_bits") && !s["rounding_bits"].is_null())
      cfg.sampler.rounding_bits = s["rounding_bits"].get<int>();
  }
  if (j.contains("resampling")) {
    const json& r = j["resampling"];
    ResamplingConfig& rc = cfg.resampling;
    if (r.contains("strategy")) rc.strategy = strategy_from_string(r["strategy"]);
    rc.mastery_threshold = r.value("mastery_threshold", rc.mastery_threshold);
    rc.anchor_count = r.value("anchor_count", rc.anchor_count);
    if (r.contains("placement")) rc.anchors.placement = placement_from_string(r["placement"]);
    rc.anchors.seed = r.value("anchor_seed", rc.anchors.seed);
    if (r.contains("anchors")) rc.anchors.explicit_anchors = r["anchors"].get<std::vector<int>>();
    rc.expert_search_budget = r.value("expert_search_budget", rc.expert_search_budget);
    rc.expert_refresh_every = r.value("expert_refresh_every", rc.expert_refresh_every);
    rc.retry_budget = r.value("retry_budget", rc.retry_budget);
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path + " is not valid JSON: " + e.what());
  }
  try {
    return experiment_config_from_json(j);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
}

void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* dir = std::getenv("AGENTRL_OUTPUT_DIR"); dir && *dir) cfg.output_dir = dir;
  if (const char* seed = std::getenv("AGENTRL_SEED"); seed && *seed) {
    try {
      std::size_t used = 0;
      cfg.seed = std::stoull(seed, &used);
      if (used != std::string(seed).size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string("AGENTRL_SEED is not an unsigned integer: ") + seed);
    }
  }
}

json to_json(const StepRecord& r) {
  json j{{"step", r.step},
         {"train_success", r.train_success},
         {"train_success_per_task", r.train_success_per_task},
         {"grad_norm", r.grad_norm},
         {"prefixes", r.prefixes},
         {"discarded", r.discarded},
         {"dropped_slots", r.dropped_slots},
         {"policy_version", r.policy_version}};
  j["test_success"] = r.test_success ? json(*r.test_success) : json(nullptr);
  j["test_success_per_task"] = r.test_success_per_task;
  return j;
}

StepRecord step_record_from_json(const json& j) {
  StepRecord r;
  r.step = j.at("step").get<int>();
  r.train_success = j.at("train_success").get<double>();
  r.train_success_per_task = j.at("train_success_per_task").get<std::vector<double>>();
  if (!j.at("test_success").is_null()) r.test_success = j["test_success"].get<double>();
  r.test_success_per_task = j.at("test_success_per_task").get<std::vector<double>>();
  r.grad_norm = j.at("grad_norm").get<double>();
  r.prefixes = j.at("prefixes").get<std::vector<std::vector<int>>>();
  r.discarded = j.at("discarded").get<std::size_t>();
  r.dropped_slots = j.at("dropped_slots").get<std::size_t>();
  r.policy_version = j.at("policy_version").get<int>();
  return r;
}

std::vector<double> evaluate_policy(const ToyPolicy& policy, const ExperimentConfig& cfg, int episodes,
                                    std::uint64_t seed) {
  const FeatureLayout layout = layout_for(cfg);
  const SamplerVariant sampler(policy, cfg.sampler);
  const RolloutContext ctx{policy, sampler, layout, cfg.turn_length};
  std::vector<double> out;
  for (std::size_t t = 0; t < cfg.envs.size(); ++t) {
    SimEnv env(cfg.envs[t]);
    int ok = 0;
    for (int i = 0; i < episodes; ++i) {
      Trajectory traj = rollout(env, ctx, static_cast<int>(t), rng::derive({seed, t, static_cast<std::uint64_t>(i)}));
      ok += traj.final_reward > cfg.rl.positive_reward_cutoff ? 1 : 0;
    }
    out.push_back(static_cast<double>(ok) / episodes);
  }
  return out;
}

namespace {

enum : std::uint64_t { kExpertStream = 11, kTrainStream = 12, kEvalStream = 13 };

struct TaskState {
  std::unique_ptr<SimEnv> env;
  std::optional<ExpertTrajectory> expert;
  std::optional<RollbackSchedule> schedule;
};

class Runner {
 public:
  explicit Runner(const ExperimentConfig& cfg)
      : cfg_(cfg),
        layout_(layout_for(cfg)),
        policy_(ToyPolicy::random(layout_.dim(), static_cast<std::size_t>(cfg.envs.front().vocab_size),
                                  cfg.policy_init_scale, cfg.policy_init_seed)) {
    history_.push_back(policy_);
    for (const EnvSpec& e : cfg.envs) {
      TaskState t;
      t.env = std::make_unique<SimEnv>(e);
      tasks_.push_back(std::move(t));
    }
  }

  ExperimentResult run(std::ostream* metrics_out) {
    ExperimentResult result{{}, policy_, std::vector<int>(tasks_.size(), -1)};
    if (cfg_.resampling.strategy != ResamplingStrategy::none) seek_experts(result.expert_search_attempts);
    for (int step = 0; step < cfg_.steps; ++step) {
      StepRecord rec = train_step(step);
      if ((step + 1) % cfg_.eval_every == 0 || step + 1 == cfg_.steps) {
        rec.test_success_per_task = evaluate_policy(
            policy_, cfg_, cfg_.eval_episodes, rng::derive({cfg_.seed, kEvalStream, static_cast<std::uint64_t>(step)}));
        rec.test_success = mean(rec.test_success_per_task);
      }
      if (metrics_out) {
        *metrics_out << to_json(rec).dump() << '\n';
        metrics_out->flush();
      }
      result.records.push_back(std::move(rec));
    }
    result.final_policy = policy_;
    return result;
  }

 private:
  void seek_experts(std::vector<int>& attempts) {
    const SamplerVariant sampler(policy_, cfg_.sampler);
    const RolloutContext ctx{policy_, sampler, layout_, cfg_.turn_length};
    for (std::size_t t = 0; t < tasks_.size(); ++t) {
      int used = 0;
      tasks_[t].expert = search_expert(*tasks_[t].env, ctx, static_cast<int>(t),
                                       cfg_.resampling.expert_search_budget,
                                       rng::derive({cfg_.seed, kExpertStream, t}), &used);
      attempts[t] = used;
      if (tasks_[t].expert && cfg_.resampling.strategy == ResamplingStrategy::sequential_rollback)
        tasks_[t].schedule.emplace(tasks_[t].expert->chunk_count(), cfg_.resampling.mastery_threshold);
    }
  }

  // Prefix length used by each batch slot of task t at this step.
  std::vector<int> slot_prefixes(std::size_t t, int step) const {
    std::vector<int> out(static_cast<std::size_t>(cfg_.batch_size), 0);
    const TaskState& task = tasks_[t];
    if (!task.expert) return out;
    if (cfg_.resampling.strategy == ResamplingStrategy::sequential_rollback) {
      std::fill(out.begin(), out.end(), task.schedule->current());
    } else if (cfg_.resampling.strategy == ResamplingStrategy::parallel_init) {
      AnchorRule rule = cfg_.resampling.anchors;
      if (rule.placement == AnchorPlacement::random)
        rule.seed = rng::derive({rule.seed, cfg_.seed, t, static_cast<std::uint64_t>(step)});
      const std::vector<int> anchors =
          choose_anchors(task.expert->chunk_count(), cfg_.resampling.anchor_count, rule);
      const int per_anchor = cfg_.batch_size / cfg_.resampling.anchor_count;
      for (int s = 0; s < cfg_.batch_size; ++s) out[static_cast<std::size_t>(s)] = anchors[s / per_anchor];
    }
    return out;
  }

  int imitation_chunks_for(int prefix, int chunk_count) const {
    return prefix > 0 ? std::min(prefix + 1, chunk_count) : 0;
  }

  StepRecord train_step(int step) {
    StepRecord rec;
    rec.step = step;
    const ToyPolicy& behaviour =
        history_[static_cast<std::size_t>(std::max(0, static_cast<int>(history_.size()) - 1 - cfg_.staleness))];
    const SamplerVariant sampler(behaviour, cfg_.sampler);
    const RolloutContext ctx{behaviour, sampler, layout_, cfg_.turn_length};

    std::vector<IpaSample> samples;
    std::vector<Trajectory> batch;
    std::vector<std::size_t> sample_task;
    for (std::size_t t = 0; t < tasks_.size(); ++t) {
      TaskState& task = tasks_[t];
      const std::vector<int> prefixes = slot_prefixes(t, step);
      std::vector<int> distinct = prefixes;
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      rec.prefixes.push_back(distinct);

      const ExpertTrajectory* expert = task.expert ? &*task.expert : nullptr;
      BatchAssembly got = assemble_batch(
          prefixes.size(), cfg_.resampling.retry_budget, [&](std::size_t slot, int attempt) {
            return rollout(*task.env, ctx, static_cast<int>(t),
                           rng::derive({cfg_.seed, kTrainStream, static_cast<std::uint64_t>(step), t, slot,
                                        static_cast<std::uint64_t>(attempt)}),
                           expert, prefixes[slot]);
          });
      rec.discarded += got.rejected;
      rec.dropped_slots += got.dropped_slots;

      int ok = 0;
      for (std::size_t i = 0; i < got.accepted.size(); ++i) {
        Trajectory traj = with_trainer_logprobs(std::move(got.accepted[i]), policy_, layout_);
        ok += is_positive(traj, cfg_.rl) ? 1 : 0;
        const int p = prefixes[got.accepted_slots[i]];
        if (cfg_.objective == Objective::ipa) {
          const int k = expert ? expert->chunk_count() : 0;
          samples.push_back(IpaSample{expert ? &expert->base : nullptr, imitation_chunks_for(p, k), traj});
        }
        batch.push_back(std::move(traj));
        sample_task.push_back(t);
      }
      const double rate = got.accepted.empty() ? 0.0 : static_cast<double>(ok) / got.accepted.size();
      rec.train_success_per_task.push_back(rate);
      if (task.schedule) task.schedule->observe(rate);
    }
    rec.train_success = mean(rec.train_success_per_task);

    ParamMatrix grad = gradient(batch, samples);
    rec.grad_norm = grad.norm();
    const double direction = cfg_.objective == Objective::masked_sft ? -1.0 : 1.0;
    policy_ = policy_.updated(grad, direction * cfg_.learning_rate);
    history_.push_back(policy_);
    if (history_.size() > static_cast<std::size_t>(cfg_.staleness) + 1) history_.erase(history_.begin());
    rec.policy_version = policy_.version();

    refresh_experts(step, batch, sample_task);
    return rec;
  }

  ParamMatrix gradient(const std::vector<Trajectory>& batch, const std::vector<IpaSample>& samples) const {
    ParamMatrix zero(policy_.feature_dim(), policy_.vocab_size());
    if (batch.empty()) return zero;
    switch (cfg_.objective) {
      case Objective::masked_sft: {
        // Descent direction of the masked NLL over the successful trajectories.
        std::size_t n = 0;
        for (const Trajectory& t : batch) {
          if (!is_positive(t, cfg_.rl)) continue;
          zero += sft_loss_grad(t, policy_, layout_, cfg_.sft);
          ++n;
        }
        if (n > 0) zero *= 1.0 / static_cast<double>(n);
        return zero;
      }
      case Objective::baseline_rl: return baseline_gradient(batch, policy_, layout_, cfg_.rl);
      case Objective::chunk_rl: return chunk_rl_gradient(batch, policy_, layout_, cfg_.rl);
      case Objective::ipa: return ipa_batch_gradient(samples, policy_, layout_, cfg_.rl);
    }
    return zero;
  }

  void refresh_experts(int step, const std::vector<Trajectory>& batch, const std::vector<std::size_t>& task_of) {
    const int every = cfg_.resampling.expert_refresh_every;
    if (every <= 0 || (step + 1) % every != 0) return;
    for (std::size_t t = 0; t < tasks_.size(); ++t) {
      if (!tasks_[t].expert) continue;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (task_of[i] != t || batch[i].prefix_chunks != 0 || !is_positive(batch[i], cfg_.rl)) continue;
        tasks_[t].expert = make_expert(batch[i], cfg_.rl.positive_reward_cutoff);
        break;
      }
    }
  }

  const ExperimentConfig& cfg_;
  FeatureLayout layout_;
  ToyPolicy policy_;
  std::vector<ToyPolicy> history_;
  std::vector<TaskState> tasks_;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  Runner runner(cfg);
  if (cfg.output_dir.empty()) return runner.run(nullptr);

  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  {
    std::ofstream echo(dir / "config.json");
    if (!echo) throw std::runtime_error("cannot write " + (dir / "config.json").string());
    echo << to_json(cfg).dump(2) << '\n';
  }
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.jsonl").string());
  ExperimentResult result = runner.run(&metrics);
  save_checkpoint((dir / "policy.ckpt").string(), result.final_policy);
  return result;
}

double population_variance(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size());
}

std::optional<MetricsSummary> summarize(const std::vector<StepRecord>& records) {
  if (records.empty()) return std::nullopt;
  MetricsSummary s;
  s.steps = records.size();
  std::vector<double> train, test, norms;
  for (const StepRecord& r : records) {
    train.push_back(r.train_success);
    norms.push_back(r.grad_norm);
    s.total_discarded += r.discarded;
    if (r.test_success) {
      test.push_back(*r.test_success);
      s.final_test_success = *r.test_success;
      s.final_min_task_test_success =
          r.test_success_per_task.empty()
              ? 0.0
              : *std::min_element(r.test_success_per_task.begin(), r.test_success_per_task.end());
    }
  }
  s.mean_train_success = mean(train);
  s.mean_test_success = mean(test);
  s.max_test_success = test.empty() ? 0.0 : *std::max_element(test.begin(), test.end());
  s.grad_norm_mean = mean(norms);
  s.grad_norm_variance = population_variance(norms);
  return s;
}

std::vector<StepRecord> read_metrics(const std::string& run_dir) {
  const fs::path dir(run_dir);
  if (!fs::is_directory(dir)) throw std::runtime_error("run directory not found: " + run_dir);
  std::ifstream in(dir / "metrics.jsonl");
  if (!in) throw std::runtime_error("metrics file not found in " + run_dir);
  std::vector<StepRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(step_record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw MalformedInput("metrics line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

json to_json(const MetricsSummary& s) {
  return json{{"steps", s.steps},
              {"mean_train_success", s.mean_train_success},
              {"mean_test_success", s.mean_test_success},
              {"max_test_success", s.max_test_success},
              {"final_test_success", s.final_test_success},
              {"final_min_task_test_success", s.final_min_task_test_success},
              {"grad_norm_mean", s.grad_norm_mean},
              {"grad_norm_variance", s.grad_norm_variance},
              {"total_discarded", s.total_discarded}};
}

std::optional<MetricsSummary> emit_metrics(const std::string& run_dir) {
  std::optional<MetricsSummary> s = summarize(read_metrics(run_dir));
  std::ofstream out(fs::path(run_dir) / "summary.json");
  if (!out) throw std::runtime_error("cannot write summary in " + run_dir);
  out << (s ? to_json(*s) : json{{"steps", 0}}).dump(2) << '\n';
  return s;
}

}  // namespace agentrl
