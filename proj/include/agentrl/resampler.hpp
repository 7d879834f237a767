#pragma once

/**
 * Rollout collection, dynamic trajectory filtering, and chunk-level
 * initialized resampling from expert trajectories.
 *
 * A resampled rollout replays the first p chunks of an expert trajectory
 * against the environment, then lets the sampler policy continue. Prefix replay
 * is only allowed on deterministic environments and is checked turn by turn
 * against the observations recorded on the expert.
 */

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agentrl/policy.hpp"
#include "agentrl/sim_env.hpp"
#include "agentrl/trajectory.hpp"

namespace agentrl {

// Policies in force while collecting rollouts. trainer_old is the trainer's
// view of the rollout version; the sampler emulates the inference engine.
struct RolloutContext {
  const ToyPolicy& trainer_old;
  const SamplerVariant& sampler;
  const FeatureLayout& layout;
  int turn_length = 1;
};

struct ExpertTrajectory {
  Trajectory base;
  std::vector<Chunk> chunks;
  int refresh_version = 0;

  int chunk_count() const { return static_cast<int>(chunks.size()); }
};

// Throws std::invalid_argument unless the trajectory is successful and clean.
ExpertTrajectory make_expert(Trajectory traj, double positive_cutoff = 0.0);

// One episode. With an expert and prefix_chunks > 0 the first chunks are
// replayed verbatim; the rest is sampled.
Trajectory rollout(Environment& env, const RolloutContext& ctx, int task_slot, std::uint64_t seed,
                   const ExpertTrajectory* expert = nullptr, int prefix_chunks = 0);

struct FilterDecision {
  bool accept = true;
  FilterReason reason = FilterReason::none;
};

FilterDecision filter_trajectory(const Trajectory& traj);

struct BatchAssembly {
  std::vector<Trajectory> accepted;
  std::vector<std::size_t> accepted_slots;
  std::size_t rejected = 0;
  std::size_t dropped_slots = 0;
};

// Fills `slots` rollouts; a rejected rollout is replaced by a fresh attempt from
// the same initial state until accepted or `retry_budget` attempts are spent,
// after which the slot is dropped.
BatchAssembly assemble_batch(std::size_t slots, int retry_budget,
                             const std::function<Trajectory(std::size_t slot, int attempt)>& attempt);

struct ResampleResult {
  std::vector<Trajectory> trajectories;
  double success_rate = 0.0;
};

ResampleResult resample_from_prefix(const ExpertTrajectory& expert, int prefix_chunks,
                                    Environment& env, const RolloutContext& ctx, int n,
                                    std::uint64_t seed);

struct ForkEstimate {
  int chunk_index = 0;
  double success_rate_before = 0.0;
  double success_rate_after = 0.0;
  int sample_count = 0;
};

struct PrefixProbe {
  int prefix_chunks = 0;
  double success_rate = 0.0;
  int sample_count = 0;
};

// Success rate from every prefix 0..K. Prefix K is the full expert replay.
std::vector<PrefixProbe> probe_prefixes(const ExpertTrajectory& expert, Environment& env,
                                        const RolloutContext& ctx, int n_per_prefix,
                                        std::uint64_t seed);

// Largest f with a positive drop rate(f) - rate(f-1) that is >= drop_threshold.
std::optional<ForkEstimate> find_crucial_fork(std::span<const PrefixProbe> probes,
                                              double drop_threshold);
std::optional<ForkEstimate> detect_crucial_fork(const ExpertTrajectory& expert, Environment& env,
                                                const RolloutContext& ctx, int n_per_prefix,
                                                double drop_threshold, std::uint64_t seed);

// Fork-report lines: prefix length, success rate, sample count, logical timestamp.
void write_fork_report(const std::string& path, std::span<const PrefixProbe> probes,
                       std::int64_t timestamp);
std::string fork_report_line(const PrefixProbe& probe, std::int64_t timestamp);

// Curriculum over expert prefixes. Starts at K-1 and steps back one chunk each
// time the success rate from the current prefix reaches the mastery threshold.
class RollbackSchedule {
 public:
  RollbackSchedule(int chunk_count, double mastery_threshold);

  int current() const { return prefix_; }
  bool finished() const { return finished_; }
  // Reports the success rate observed from current(); returns the next prefix.
  int observe(double success_rate);
  void reset_to(int chunk_count);

 private:
  int prefix_;
  double mastery_;
  bool finished_ = false;
};

// Drives a RollbackSchedule for `steps` rounds, probing each round with
// n rollouts under policy_stream(round). Returns the visited prefixes.
std::vector<int> sequential_rollback_schedule(
    const ExpertTrajectory& expert, Environment& env,
    const std::function<RolloutContext(int round)>& policy_stream, double mastery_threshold,
    int n_per_round, int steps, std::uint64_t seed);

enum class AnchorPlacement { uniform, random, explicit_list };

struct AnchorRule {
  AnchorPlacement placement = AnchorPlacement::uniform;
  std::uint64_t seed = 0;
  std::vector<int> explicit_anchors;
};

// Prefix lengths in [0, K-1]. Uniform places anchor i at
// floor((2i + 1) K / (2 n)), the midpoints of n equal bins.
std::vector<int> choose_anchors(int chunk_count, int anchor_count, const AnchorRule& rule);

std::vector<Trajectory> parallel_init_batch(const ExpertTrajectory& expert,
                                            std::span<const int> anchors, int rollouts_per_anchor,
                                            Environment& env, const RolloutContext& ctx,
                                            std::uint64_t seed);

// Self-sampling: first successful rollout from the initial state within budget.
std::optional<ExpertTrajectory> search_expert(Environment& env, const RolloutContext& ctx,
                                              int task_slot, int budget, std::uint64_t seed,
                                              int* attempts_used = nullptr);

}  // namespace agentrl
