#pragma once

/**
 * Discrete-event model of asynchronous RL training.
 *
 * Rollout GPUs produce samples into a buffer (one sample per GPU at a time,
 * latency drawn from a long-tailed distribution). The trainer blocks until it
 * holds batch_size samples whose generating version is within async_ratio of
 * its current version, discarding stale ones, trains, then pauses rollout for a
 * weight sync that advances the rollout version.
 *
 * Rollout admission keeps at most (async_ratio + 1) * batch_size samples
 * outstanding and never starts a sample that would already be stale when the
 * trainer next consumes; with async_ratio = 0 this is fully synchronous.
 *
 * In multiplexed mode every GPU rolls out while the trainer waits. When a
 * batch is ready, shrink_gpus GPUs are taken for training and their in-flight
 * samples are queued for the remaining rollout GPUs with their remaining
 * work (scaled by migration_stretch). The GPUs return when training ends.
 *
 * Time is integer simulated units. Training cost is given as GPU-time, so a
 * step on g GPUs lasts ceil(train_duration / g).
 */

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace agentrl {

struct LatencyModel {
  std::int64_t body = 10;
  std::int64_t body_jitter = 0;  // uniform in [body - jitter, body + jitter]
  double tail_prob = 0.0;
  std::int64_t tail = 100;
};

enum class SchedulerMode { static_split, multiplexed };

struct SchedulerConfig {
  int total_gpus = 2;
  int async_ratio = 1;
  int batch_size = 4;
  LatencyModel rollout_latency;
  std::int64_t train_duration = 10;  // GPU-time per training step
  std::int64_t sync_duration = 0;
  SchedulerMode mode = SchedulerMode::static_split;
  int train_gpus = 1;   // static_split
  int shrink_gpus = 1;  // multiplexed
  double migration_stretch = 1.0;
  std::int64_t transition_cost = 0;
};

void validate(const SchedulerConfig& cfg);

struct SchedulerEvent {
  std::int64_t time = 0;
  std::string type;
  int gpu = -1;
  std::int64_t sample = -1;
  int version = -1;          // generating version of the sample, or trainer version
  int trainer_version = -1;  // trainer version at the time of the event

  friend bool operator==(const SchedulerEvent&, const SchedulerEvent&) = default;
};

struct SchedulerMetrics {
  double gpu_busy_fraction = 0.0;
  std::int64_t discarded_samples = 0;
  int steps_completed = 0;
  std::int64_t makespan = 0;
  std::int64_t produced_samples = 0;
  std::int64_t consumed_samples = 0;
  std::int64_t buffered_at_end = 0;
  std::int64_t busy_gpu_time = 0;
};

struct SimulationResult {
  SchedulerMetrics metrics;
  std::vector<SchedulerEvent> events;
};

struct SampleBufferEntry {
  std::int64_t sample_id = 0;
  int generating_version = 0;
  std::int64_t completion_time = 0;
};

enum class Staleness { keep, discard };

// keep iff current_version - generating_version <= async_ratio. Throws
// std::invalid_argument if the sample is from a future version.
Staleness staleness_check(const SampleBufferEntry& entry, int current_version, int async_ratio);

SimulationResult run_simulation(const SchedulerConfig& cfg, std::uint64_t seed, int n_steps);

std::string event_line(const SchedulerEvent& e);
void write_event_log(std::ostream& out, const std::vector<SchedulerEvent>& events);
std::string metrics_text(const SchedulerMetrics& m);

}  // namespace agentrl
