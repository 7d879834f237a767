#include "agentrl/resampler.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "agentrl/rng.hpp"

namespace agentrl {

ExpertTrajectory make_expert(Trajectory traj, double positive_cutoff) {
  validate(traj);
  if (!(traj.final_reward > positive_cutoff))
    throw std::invalid_argument("expert trajectory must be successful");
  if (traj.filtered_reason != FilterReason::none)
    throw std::invalid_argument("expert trajectory must pass filtering");
  ExpertTrajectory e;
  e.chunks = segment_into_chunks(traj);
  e.refresh_version = traj.policy_version;
  traj.prefix_chunks = 0;
  e.base = std::move(traj);
  return e;
}

namespace {

Token score_token(const RolloutContext& ctx, std::span<const double> x, int id) {
  Token t;
  t.id = id;
  t.trainer_old_logprob = ctx.trainer_old.logprob(x, id);
  t.trainer_logprob = t.trainer_old_logprob;
  t.sampler_logprob = ctx.sampler.logprob(x, id);
  return t;
}

void note_fault(Trajectory& traj, FilterReason fault) {
  if (traj.filtered_reason == FilterReason::none) traj.filtered_reason = fault;
}

}  // namespace

Trajectory rollout(Environment& env, const RolloutContext& ctx, int task_slot, std::uint64_t seed,
                   const ExpertTrajectory* expert, int prefix_chunks) {
  if (ctx.turn_length < 1) throw std::invalid_argument("turn_length must be >= 1");
  if (prefix_chunks < 0) throw std::invalid_argument("negative prefix length");
  if (prefix_chunks > 0) {
    if (!expert) throw std::invalid_argument("prefix replay requires an expert trajectory");
    if (prefix_chunks >= expert->chunk_count())
      throw std::invalid_argument("prefix must leave at least one chunk to sample");
    if (!env.deterministic()) throw EnvError("prefix replay refused: environment is not deterministic");
    if (expert->base.task_slot != task_slot) throw std::invalid_argument("expert belongs to another task");
  }

  Trajectory traj;
  traj.task_slot = task_slot;
  traj.policy_version = ctx.trainer_old.version();
  traj.prefix_chunks = prefix_chunks;
  env.reset(rng::derive({seed, 1}));

  std::size_t turn_idx = 0;
  bool terminal = false;

  if (prefix_chunks > 0) {
    const Chunk& last = expert->chunks[prefix_chunks - 1];
    for (std::size_t k = 0; k <= last.last_turn; ++k, ++turn_idx) {
      const Turn& et = expert->base.turns[k];
      Turn turn;
      std::vector<int> ids;
      for (std::size_t i = 0; i < et.tokens.size(); ++i) {
        std::vector<double> x = ctx.layout.features(task_slot, k, i);
        turn.tokens.push_back(score_token(ctx, x, et.tokens[i].id));
        ids.push_back(et.tokens[i].id);
      }
      StepResult r = env.step(ids);
      if (r.observation != et.observation || r.terminal)
        throw EnvError("prefix replay diverged from the expert at turn " + std::to_string(k + 1) +
                       " (nondeterminism detected)");
      turn.ends_with_tool_call = !r.terminal;
      turn.error_flag = r.error_flag;
      turn.observation = r.observation;
      if (r.fault != FilterReason::none) note_fault(traj, r.fault);
      traj.turns.push_back(std::move(turn));
    }
  }

  rng::Stream draws(rng::derive({seed, 2}));
  while (!terminal) {
    Turn turn;
    std::vector<int> ids;
    for (int i = 0; i < ctx.turn_length; ++i) {
      std::vector<double> x = ctx.layout.features(task_slot, turn_idx, static_cast<std::size_t>(i));
      int a = ctx.sampler.sample_action(x, draws.next());
      turn.tokens.push_back(score_token(ctx, x, a));
      ids.push_back(a);
    }
    StepResult r = env.step(ids);
    terminal = r.terminal;
    turn.ends_with_tool_call = !r.terminal;
    turn.error_flag = r.error_flag;
    turn.observation = r.terminal ? std::string{} : r.observation;
    if (r.fault != FilterReason::none) note_fault(traj, r.fault);
    if (r.terminal) traj.final_reward = r.reward;
    traj.turns.push_back(std::move(turn));
    ++turn_idx;
  }
  return traj;
}

FilterDecision filter_trajectory(const Trajectory& traj) {
  if (traj.filtered_reason == FilterReason::none) return {true, FilterReason::none};
  return {false, traj.filtered_reason};
}

BatchAssembly assemble_batch(std::size_t slots, int retry_budget,
                             const std::function<Trajectory(std::size_t, int)>& attempt) {
  if (retry_budget < 1) throw std::invalid_argument("retry budget must be >= 1");
  BatchAssembly out;
  for (std::size_t s = 0; s < slots; ++s) {
    bool filled = false;
    for (int a = 0; a < retry_budget && !filled; ++a) {
      Trajectory t = attempt(s, a);
      if (filter_trajectory(t).accept) {
        out.accepted.push_back(std::move(t));
        out.accepted_slots.push_back(s);
        filled = true;
      } else {
        ++out.rejected;
      }
    }
    if (!filled) ++out.dropped_slots;
  }
  return out;
}

namespace {

double success_fraction(std::span<const Trajectory> trajs) {
  if (trajs.empty()) return 0.0;
  std::size_t ok = 0;
  for (const Trajectory& t : trajs) ok += t.final_reward > 0.0 ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(trajs.size());
}

}  // namespace

ResampleResult resample_from_prefix(const ExpertTrajectory& expert, int prefix_chunks,
                                    Environment& env, const RolloutContext& ctx, int n,
                                    std::uint64_t seed) {
  if (prefix_chunks < 0 || prefix_chunks >= expert.chunk_count())
    throw std::invalid_argument("prefix_chunks must be in [0, K)");
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (prefix_chunks > 0 && !env.deterministic())
    throw EnvError("prefix replay refused: environment is not deterministic");
  ResampleResult out;
  out.trajectories.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.trajectories.push_back(rollout(env, ctx, expert.base.task_slot,
                                       rng::derive({seed, static_cast<std::uint64_t>(i)}), &expert,
                                       prefix_chunks));
  }
  out.success_rate = success_fraction(out.trajectories);
  return out;
}

std::vector<PrefixProbe> probe_prefixes(const ExpertTrajectory& expert, Environment& env,
                                        const RolloutContext& ctx, int n_per_prefix,
                                        std::uint64_t seed) {
  if (n_per_prefix < 1) throw std::invalid_argument("n_per_prefix must be >= 1");
  const int K = expert.chunk_count();
  std::vector<PrefixProbe> probes;
  for (int p = 0; p < K; ++p) {
    ResampleResult r = resample_from_prefix(expert, p, env, ctx, n_per_prefix,
                                            rng::derive({seed, static_cast<std::uint64_t>(p)}));
    probes.push_back({p, r.success_rate, n_per_prefix});
  }
  // The full prefix replays the expert verbatim; confirm its outcome once.
  env.reset(0);
  StepResult last;
  for (const Turn& t : expert.base.turns) {
    std::vector<int> ids;
    for (const Token& tok : t.tokens) ids.push_back(tok.id);
    last = env.step(ids);
  }
  probes.push_back({K, last.reward > 0.0 ? 1.0 : 0.0, 1});
  return probes;
}

std::optional<ForkEstimate> find_crucial_fork(std::span<const PrefixProbe> probes,
                                              double drop_threshold) {
  std::optional<ForkEstimate> best;
  for (std::size_t f = 1; f < probes.size(); ++f) {
    const double before = probes[f - 1].success_rate;
    const double after = probes[f].success_rate;
    const double drop = after - before;
    if (drop > 0.0 && drop >= drop_threshold) {
      best = ForkEstimate{probes[f].prefix_chunks, before, after,
                          std::min(probes[f - 1].sample_count, probes[f].sample_count)};
    }
  }
  return best;
}

std::optional<ForkEstimate> detect_crucial_fork(const ExpertTrajectory& expert, Environment& env,
                                                const RolloutContext& ctx, int n_per_prefix,
                                                double drop_threshold, std::uint64_t seed) {
  std::vector<PrefixProbe> probes = probe_prefixes(expert, env, ctx, n_per_prefix, seed);
  std::optional<ForkEstimate> f = find_crucial_fork(probes, drop_threshold);
  if (f) f->sample_count = n_per_prefix;
  return f;
}

std::string fork_report_line(const PrefixProbe& probe, std::int64_t timestamp) {
  return nlohmann::json{{"prefix_chunks", probe.prefix_chunks},
                        {"success_rate", probe.success_rate},
                        {"sample_count", probe.sample_count},
                        {"timestamp", timestamp}}
      .dump();
}

void write_fork_report(const std::string& path, std::span<const PrefixProbe> probes,
                       std::int64_t timestamp) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const PrefixProbe& p : probes) out << fork_report_line(p, timestamp) << '\n';
}

RollbackSchedule::RollbackSchedule(int chunk_count, double mastery_threshold)
    : prefix_(std::max(0, chunk_count - 1)), mastery_(mastery_threshold) {
  if (chunk_count < 1) throw std::invalid_argument("chunk_count must be >= 1");
  if (!(mastery_threshold > 0.0 && mastery_threshold <= 1.0))
    throw std::invalid_argument("mastery threshold must be in (0, 1]");
}

int RollbackSchedule::observe(double success_rate) {
  if (!finished_ && success_rate >= mastery_) {
    if (prefix_ > 0)
      --prefix_;
    else
      finished_ = true;
  }
  return prefix_;
}

void RollbackSchedule::reset_to(int chunk_count) {
  prefix_ = std::max(0, chunk_count - 1);
  finished_ = false;
}

std::vector<int> sequential_rollback_schedule(
    const ExpertTrajectory& expert, Environment& env,
    const std::function<RolloutContext(int)>& policy_stream, double mastery_threshold,
    int n_per_round, int steps, std::uint64_t seed) {
  RollbackSchedule sched(expert.chunk_count(), mastery_threshold);
  std::vector<int> visited;
  for (int round = 0; round < steps && !sched.finished(); ++round) {
    visited.push_back(sched.current());
    const RolloutContext ctx = policy_stream(round);
    ResampleResult r = resample_from_prefix(expert, sched.current(), env, ctx, n_per_round,
                                            rng::derive({seed, static_cast<std::uint64_t>(round)}));
    sched.observe(r.success_rate);
  }
  return visited;
}

std::vector<int> choose_anchors(int chunk_count, int anchor_count, const AnchorRule& rule) {
  if (anchor_count < 1 || anchor_count > chunk_count)
    throw std::invalid_argument("anchor_count must be in [1, K]");
  std::vector<int> out;
  switch (rule.placement) {
    case AnchorPlacement::uniform:
      for (int i = 0; i < anchor_count; ++i)
        out.push_back(static_cast<int>((2L * i + 1) * chunk_count / (2L * anchor_count)));
      break;
    case AnchorPlacement::random: {
      std::vector<int> all(static_cast<std::size_t>(chunk_count));
      std::iota(all.begin(), all.end(), 0);
      rng::Stream s(rule.seed);
      for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[s.below(i)]);
      out.assign(all.begin(), all.begin() + anchor_count);
      std::sort(out.begin(), out.end());
      break;
    }
    case AnchorPlacement::explicit_list:
      if (static_cast<int>(rule.explicit_anchors.size()) != anchor_count)
        throw std::invalid_argument("explicit anchor list length differs from anchor_count");
      for (int a : rule.explicit_anchors)
        if (a < 0 || a >= chunk_count) throw std::invalid_argument("anchor outside [0, K)");
      out = rule.explicit_anchors;
      break;
  }
  return out;
}

std::vector<Trajectory> parallel_init_batch(const ExpertTrajectory& expert,
                                            std::span<const int> anchors, int rollouts_per_anchor,
                                            Environment& env, const RolloutContext& ctx,
                                            std::uint64_t seed) {
  if (rollouts_per_anchor < 1) throw std::invalid_argument("rollouts_per_anchor must be >= 1");
  std::vector<Trajectory> out;
  out.reserve(anchors.size() * static_cast<std::size_t>(rollouts_per_anchor));
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    for (int i = 0; i < rollouts_per_anchor; ++i) {
      out.push_back(rollout(env, ctx, expert.base.task_slot,
                            rng::derive({seed, a, static_cast<std::uint64_t>(i)}), &expert, anchors[a]));
    }
  }
  return out;
}

std::optional<ExpertTrajectory> search_expert(Environment& env, const RolloutContext& ctx,
                                              int task_slot, int budget, std::uint64_t seed,
                                              int* attempts_used) {
  for (int i = 0; i < budget; ++i) {
    Trajectory t = rollout(env, ctx, task_slot, rng::derive({seed, static_cast<std::uint64_t>(i)}));
    if (t.final_reward > 0.0 && t.filtered_reason == FilterReason::none) {
      if (attempts_used) *attempts_used = i + 1;
      return make_expert(std::move(t));
    }
  }
  if (attempts_used) *attempts_used = budget;
  return std::nullopt;
}

}  // namespace agentrl
