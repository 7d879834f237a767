#pragma once

/**
 * Deterministic multi-turn tool environments with planted crucial forks.
 *
 * An episode has K agent turns. Turns 1..K-1 end with a tool call and turn K
 * is the final answer. The last token of a turn is its tool action. At a fork
 * turn the action must fall in that fork's correct set; the terminal reward is
 * 1 iff every fork was passed. Correct sets never appear in observations.
 *
 * Lifecycle follows the make / reset / step / close contract, in-process via
 * EnvRegistry and out-of-process via a line-delimited JSON protocol.
 */

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "agentrl/rng.hpp"
#include "agentrl/trajectory.hpp"

namespace agentrl {

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Fork {
  int chunk = 1;  // 1-based turn index
  std::vector<int> correct;

  friend bool operator==(const Fork&, const Fork&) = default;
};

enum class NoiseKind { none, api_failure, nondeterministic };

struct NoiseMode {
  NoiseKind kind = NoiseKind::none;
  double prob = 0.0;

  friend bool operator==(const NoiseMode&, const NoiseMode&) = default;
};

struct EnvSpec {
  std::string name;
  int chunk_count = 1;
  int vocab_size = 2;
  std::vector<Fork> forks;
  NoiseMode noise;
  int max_turns = 0;  // 0 means chunk_count
  // Consecutive identical tool actions tolerated before the episode is tagged
  // illegal_tool_repeat; 0 disables the check.
  int illegal_repeat_limit = 0;

  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

// Throws EnvError describing the first violated invariant.
void validate(const EnvSpec& spec);
int effective_max_turns(const EnvSpec& spec);
const Fork* find_fork(const EnvSpec& spec, int chunk);

// Success probability of a uniformly random policy: prod |correct| / vocab.
double random_policy_success(const EnvSpec& spec);

nlohmann::json to_json(const EnvSpec& spec);
EnvSpec env_spec_from_json(const nlohmann::json& j);
// FNV-1a over the canonical JSON encoding, as 16 hex digits.
std::string spec_hash(const EnvSpec& spec);

struct StepResult {
  std::string observation;
  bool terminal = false;
  double reward = 0.0;
  bool error_flag = false;
  FilterReason fault = FilterReason::none;
};

// Minimal environment interface used by rollout drivers.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::string reset(std::uint64_t seed) = 0;
  virtual StepResult step(std::span<const int> action_tokens) = 0;
  virtual bool deterministic() const = 0;
  virtual int vocab_size() const = 0;
};

struct EnvState {
  std::uint64_t instance_id = 0;
  int turn_index = 0;
  std::map<int, bool> fork_record;
  bool terminated = false;
  bool determinism_flag = true;
};

class SimEnv final : public Environment {
 public:
  explicit SimEnv(EnvSpec spec, std::uint64_t instance_id = 0);

  std::string reset(std::uint64_t seed) override;
  StepResult step(std::span<const int> action_tokens) override;
  bool deterministic() const override { return state_.determinism_flag; }
  int vocab_size() const override { return spec_.vocab_size; }

  const EnvSpec& spec() const { return spec_; }
  const EnvState& state() const { return state_; }

 private:
  EnvSpec spec_;
  EnvState state_;
  rng::Stream noise_{0};
  int last_action_ = -1;
  int repeat_run_ = 0;
  bool repeat_violation_ = false;
};

// Thread-safe registry of environment instances keyed by id.
class EnvRegistry {
 public:
  std::uint64_t make(const EnvSpec& spec);
  std::string reset(std::uint64_t id, std::uint64_t seed);
  StepResult step(std::uint64_t id, std::span<const int> action_tokens);
  void close(std::uint64_t id);
  EnvState state(std::uint64_t id) const;
  std::size_t open_count() const;

 private:
  struct Slot {
    std::mutex mu;
    SimEnv env;
    explicit Slot(SimEnv e) : env(std::move(e)) {}
  };
  std::shared_ptr<Slot> find(std::uint64_t id) const;

  mutable std::mutex mu_;
  std::map<std::uint64_t, std::shared_ptr<Slot>> slots_;
  std::uint64_t next_id_ = 1;
};

// One request of the stdio protocol: {"verb", "instance_id", "payload"}.
nlohmann::json handle_request(EnvRegistry& registry, const nlohmann::json& request);
// Serves requests line by line until end of input. Returns requests handled.
std::size_t serve(EnvRegistry& registry, std::istream& in, std::ostream& out);

}  // namespace agentrl
