#include "agentrl/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "agentrl/rng.hpp"

namespace agentrl {

void validate(const SchedulerConfig& cfg) {
  if (cfg.total_gpus < 1) throw std::invalid_argument("total_gpus must be positive");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (cfg.async_ratio < 0) throw std::invalid_argument("async_ratio must be non-negative");
  if (cfg.train_duration < 1) throw std::invalid_argument("train_duration must be positive");
  if (cfg.sync_duration < 0 || cfg.transition_cost < 0)
    throw std::invalid_argument("sync and transition costs must be non-negative");
  if (cfg.rollout_latency.body < 1 || cfg.rollout_latency.tail < 1)
    throw std::invalid_argument("latencies must be positive");
  if (cfg.rollout_latency.body_jitter < 0 || cfg.rollout_latency.body_jitter >= cfg.rollout_latency.body)
    throw std::invalid_argument("body_jitter must be in [0, body)");
  if (cfg.rollout_latency.tail_prob < 0.0 || cfg.rollout_latency.tail_prob > 1.0)
    throw std::invalid_argument("tail_prob outside [0, 1]");
  if (!(cfg.migration_stretch > 0.0)) throw std::invalid_argument("migration_stretch must be positive");
  if (cfg.mode == SchedulerMode::static_split) {
    if (cfg.train_gpus < 1 || cfg.train_gpus >= cfg.total_gpus)
      throw std::invalid_argument("static split needs 1 <= train_gpus < total_gpus");
  } else {
    if (cfg.shrink_gpus < 1 || cfg.shrink_gpus >= cfg.total_gpus)
      throw std::invalid_argument("multiplexing needs 1 <= shrink_gpus < total_gpus");
  }
}

Staleness staleness_check(const SampleBufferEntry& entry, int current_version, int async_ratio) {
  if (current_version < entry.generating_version)
    throw std::invalid_argument("sample generated by a future policy version");
  return current_version - entry.generating_version <= async_ratio ? Staleness::keep : Staleness::discard;
}

namespace {

constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();

struct Sample {
  std::int64_t id = 0;
  int version = 0;
  std::int64_t remaining = 0;
  std::int64_t completed_at = 0;
};

enum class TrainerState { waiting, training, syncing };

class Simulator {
 public:
  Simulator(const SchedulerConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    const int rollout_gpus =
        cfg_.mode == SchedulerMode::static_split ? cfg_.total_gpus - cfg_.train_gpus : cfg_.total_gpus;
    gpus_.resize(static_cast<std::size_t>(cfg_.total_gpus));
    for (int g = 0; g < cfg_.total_gpus; ++g) gpus_[g].rollout = g < rollout_gpus;
  }

  SimulationResult run(int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
    settle();
    while (steps_ < n_steps) {
      const std::int64_t next = next_event_time();
      if (next == kNever) throw std::logic_error("scheduler deadlock");
      advance(next);
      process_events(n_steps);
      if (steps_ >= n_steps) break;
      settle();
    }
    SimulationResult out;
    out.metrics.steps_completed = steps_;
    out.metrics.makespan = now_;
    out.metrics.discarded_samples = discarded_;
    out.metrics.produced_samples = produced_;
    out.metrics.consumed_samples = consumed_;
    out.metrics.buffered_at_end = static_cast<std::int64_t>(buffer_.size() + pending_.size());
    out.metrics.busy_gpu_time = busy_;
    out.metrics.gpu_busy_fraction =
        now_ > 0 ? static_cast<double>(busy_) / (static_cast<double>(cfg_.total_gpus) * now_) : 0.0;
    out.events = std::move(events_);
    return out;
  }

 private:
  struct Gpu {
    bool rollout = false;
    std::optional<Sample> running;
  };

  void log(const char* type, int gpu, std::int64_t sample, int version) {
    events_.push_back(SchedulerEvent{now_, type, gpu, sample, version, version_});
  }

  std::int64_t draw_latency() {
    const LatencyModel& m = cfg_.rollout_latency;
    std::int64_t body = m.body;
    if (m.body_jitter > 0)
      body += static_cast<std::int64_t>(rng_.below(static_cast<std::uint64_t>(2 * m.body_jitter + 1))) -
              m.body_jitter;
    if (m.tail_prob > 0.0 && rng_.bernoulli(m.tail_prob)) return m.tail;
    return body;
  }

  bool rollout_paused() const { return trainer_ == TrainerState::syncing && cfg_.sync_duration > 0; }

  std::int64_t next_event_time() const {
    std::int64_t t = kNever;
    if (!rollout_paused())
      for (const Gpu& g : gpus_)
        if (g.running) t = std::min(t, now_ + g.running->remaining);
    if (trainer_ != TrainerState::waiting) t = std::min(t, trainer_until_);
    return t;
  }

  void advance(std::int64_t t) {
    const std::int64_t dt = t - now_;
    if (!rollout_paused()) {
      for (Gpu& g : gpus_) {
        if (!g.running) continue;
        g.running->remaining -= dt;
        busy_ += dt;
      }
    }
    now_ = t;
  }

  void process_events(int n_steps) {
    for (std::size_t g = 0; g < gpus_.size(); ++g) {
      Gpu& gpu = gpus_[g];
      if (gpu.running && gpu.running->remaining <= 0) {
        log("complete", static_cast<int>(g), gpu.running->id, gpu.running->version);
        gpu.running->completed_at = now_;
        buffer_.push_back(*gpu.running);
        ++produced_;
        gpu.running.reset();
      }
    }
    if (trainer_ == TrainerState::training && now_ >= trainer_until_) {
      ++version_;
      ++steps_;
      log("train_end", -1, -1, version_);
      if (steps_ >= n_steps) return;
      if (cfg_.mode == SchedulerMode::multiplexed) {
        for (int g : lent_gpus_) {
          gpus_[g].rollout = true;
          log("expand", g, -1, version_);
        }
        lent_gpus_.clear();
      }
      trainer_ = TrainerState::syncing;
      trainer_until_ = now_ + cfg_.sync_duration;
      log("sync_start", -1, -1, version_);
    }
    if (trainer_ == TrainerState::syncing && now_ >= trainer_until_) {
      rollout_version_ = version_;
      trainer_ = TrainerState::waiting;
      log("sync_end", -1, -1, version_);
    }
  }

  int next_consume_version() const {
    return trainer_ == TrainerState::waiting ? version_ : version_ + 1;
  }

  std::int64_t outstanding() const {
    std::int64_t n = static_cast<std::int64_t>(buffer_.size() + pending_.size() + migrated_.size());
    for (const Gpu& g : gpus_) n += g.running ? 1 : 0;
    return n;
  }

  // Trainer claims buffered samples and starts a step once a batch is ready;
  // free rollout GPUs pick up migrated work first, then new samples.
  void settle() {
    if (trainer_ == TrainerState::waiting) {
      while (!buffer_.empty() && static_cast<int>(pending_.size()) < cfg_.batch_size) {
        Sample s = buffer_.front();
        buffer_.pop_front();
        SampleBufferEntry entry{s.id, s.version, s.completed_at};
        if (staleness_check(entry, version_, cfg_.async_ratio) == Staleness::keep) {
          pending_.push_back(s);
        } else {
          ++discarded_;
          log("discard", -1, s.id, s.version);
        }
      }
      if (static_cast<int>(pending_.size()) == cfg_.batch_size) start_training();
    }
    if (rollout_paused()) return;
    for (std::size_t g = 0; g < gpus_.size(); ++g) {
      Gpu& gpu = gpus_[g];
      if (!gpu.rollout || gpu.running) continue;
      if (!migrated_.empty()) {
        gpu.running = migrated_.front();
        migrated_.pop_front();
        log("resume", static_cast<int>(g), gpu.running->id, gpu.running->version);
        continue;
      }
      if (outstanding() >= static_cast<std::int64_t>(cfg_.async_ratio + 1) * cfg_.batch_size) continue;
      if (next_consume_version() - rollout_version_ > cfg_.async_ratio) continue;
      gpu.running = Sample{next_sample_++, rollout_version_, draw_latency()};
      log("start", static_cast<int>(g), gpu.running->id, gpu.running->version);
    }
  }

  void start_training() {
    for (const Sample& s : pending_) {
      ++consumed_;
      log("consume", -1, s.id, s.version);
    }
    pending_.clear();
    int train_gpus = cfg_.train_gpus;
    std::int64_t overhead = 0;
    if (cfg_.mode == SchedulerMode::multiplexed) {
      train_gpus = cfg_.shrink_gpus;
      overhead = cfg_.transition_cost;
      // Take the highest-numbered GPUs; their in-flight samples migrate.
      for (int g = cfg_.total_gpus - 1; g >= 0 && static_cast<int>(lent_gpus_.size()) < cfg_.shrink_gpus; --g) {
        Gpu& gpu = gpus_[g];
        if (gpu.running) {
          Sample s = *gpu.running;
          s.remaining = std::max<std::int64_t>(
              1, static_cast<std::int64_t>(std::ceil(static_cast<double>(s.remaining) * cfg_.migration_stretch)));
          migrated_.push_back(s);
          log("migrate", g, s.id, s.version);
          gpu.running.reset();
        }
        gpu.rollout = false;
        lent_gpus_.push_back(g);
        log("shrink", g, -1, version_);
      }
    }
    const std::int64_t duration = (cfg_.train_duration + train_gpus - 1) / train_gpus;
    busy_ += duration * train_gpus;
    trainer_ = TrainerState::training;
    trainer_until_ = now_ + overhead + duration;
    log("train_start", -1, -1, version_);
  }

  const SchedulerConfig& cfg_;
  rng::Stream rng_;
  std::vector<Gpu> gpus_;
  std::deque<Sample> buffer_;
  std::vector<Sample> pending_;
  std::deque<Sample> migrated_;
  std::vector<int> lent_gpus_;
  std::vector<SchedulerEvent> events_;
  TrainerState trainer_ = TrainerState::waiting;
  std::int64_t trainer_until_ = 0;
  std::int64_t now_ = 0;
  std::int64_t busy_ = 0;
  std::int64_t next_sample_ = 0;
  std::int64_t produced_ = 0;
  std::int64_t consumed_ = 0;
  std::int64_t discarded_ = 0;
  int version_ = 0;
  int rollout_version_ = 0;
  int steps_ = 0;
};

}  // namespace

SimulationResult run_simulation(const SchedulerConfig& cfg, std::uint64_t seed, int n_steps) {
  validate(cfg);
  return Simulator(cfg, seed).run(n_steps);
}

std::string event_line(const SchedulerEvent& e) {
  return nlohmann::json{{"time", e.time},       {"event", e.type},   {"gpu", e.gpu},
                        {"sample", e.sample},   {"version", e.version},
                        {"trainer_version", e.trainer_version}}
      .dump();
}

void write_event_log(std::ostream& out, const std::vector<SchedulerEvent>& events) {
  for (const SchedulerEvent& e : events) out << event_line(e) << '\n';
}

std::string metrics_text(const SchedulerMetrics& m) {
  std::ostringstream out;
  out.precision(17);
  out << "gpu_busy_fraction " << m.gpu_busy_fraction << '\n'
      << "discarded_samples " << m.discarded_samples << '\n'
      << "steps_completed " << m.steps_completed << '\n'
      << "makespan " << m.makespan << '\n'
      << "produced_samples " << m.produced_samples << '\n'
      << "consumed_samples " << m.consumed_samples << '\n'
      << "buffered_at_end " << m.buffered_at_end << '\n'
      << "busy_gpu_time " << m.busy_gpu_time << '\n';
  return out.str();
}

}  // namespace agentrl
