#pragma once

/**
 * Trajectory data model for multi-turn agent rollouts.
 *
 * A trajectory is an ordered list of agent turns. Each turn carries the
 * agent-emitted tokens (environment observations are stored per turn as opaque
 * bytes and never enter the token sequence). Every token records three
 * log-probabilities captured at rollout time:
 *
 *   - trainer_logprob      log pi_theta(token | history)      (current trainer)
 *   - trainer_old_logprob  log pi_theta_old(token | history)  (trainer, rollout version)
 *   - sampler_logprob      log mu_theta_old(token | history)  (inference engine)
 *
 * Chunks are the action unit used for credit assignment: a chunk is the
 * contiguous token span from one environment interaction to the next. Every
 * tool-calling turn closes a chunk; trailing non-tool turns (the final answer)
 * form the terminal chunk.
 */

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace agentrl {

class MalformedInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Token {
  int id = 0;
  double trainer_logprob = 0.0;
  double trainer_old_logprob = 0.0;
  double sampler_logprob = 0.0;

  friend bool operator==(const Token&, const Token&) = default;
};

struct Turn {
  std::vector<Token> tokens;
  bool ends_with_tool_call = false;
  bool error_flag = false;
  bool relevance_flag = true;
  std::string observation;

  friend bool operator==(const Turn&, const Turn&) = default;
};

enum class FilterReason { none, api_failure, nondeterministic_tool, illegal_tool_repeat };

std::string_view to_string(FilterReason r);
FilterReason filter_reason_from_string(std::string_view s);

struct Trajectory {
  std::vector<Turn> turns;
  double final_reward = 0.0;
  int policy_version = 0;
  FilterReason filtered_reason = FilterReason::none;
  // Index of the task (environment) inside the suite that produced this
  // trajectory; selects the feature block of the policy.
  int task_slot = 0;
  // Number of leading chunks replayed from an expert trajectory rather than
  // sampled by the policy. Those tokens are context, not actions, and are
  // excluded from RL gradients.
  int prefix_chunks = 0;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// Half-open token range [begin, end) into the flattened token sequence.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct Chunk {
  int index = 1;  // 1-based, k in 1..K
  TokenSpan token_span;
  bool terminal = false;
  // Turns [first_turn, last_turn] contribute to this chunk.
  std::size_t first_turn = 0;
  std::size_t last_turn = 0;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

// Throws MalformedInput when a turn or token invariant is violated.
void validate(const Trajectory& traj);

std::vector<Token> flatten_tokens(const Trajectory& traj);
std::size_t token_count(const Trajectory& traj);

// Throws MalformedInput for an empty trajectory.
std::vector<Chunk> segment_into_chunks(const Trajectory& traj);

// Position of a flattened token: owning turn and offset within that turn.
struct TokenPosition {
  std::size_t turn = 0;
  std::size_t offset = 0;
};
std::vector<TokenPosition> token_positions(const Trajectory& traj);

// Index of the first flattened token that is a policy action (i.e. not part of
// a replayed expert prefix).
std::size_t first_action_token(const Trajectory& traj, std::span<const Chunk> chunks);

// Line-delimited serialization. One trajectory per line; doubles are written
// with round-trip precision.
std::string to_json_line(const Trajectory& traj);
Trajectory trajectory_from_json_line(std::string_view line);
void write_trajectories(const std::string& path, std::span<const Trajectory> trajs);
std::vector<Trajectory> read_trajectories(const std::string& path);

}  // namespace agentrl
