#pragma once

// Random trajectory and policy generators shared by the unit and acceptance
// tests.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "agentrl/policy.hpp"
#include "agentrl/rng.hpp"
#include "agentrl/trajectory.hpp"

namespace fixtures {

using agentrl::Token;
using agentrl::Trajectory;
using agentrl::Turn;

inline double log_uniform_prob(agentrl::rng::Stream& s) { return std::log(0.05 + 0.95 * s.uniform()); }

struct TrajectoryShape {
  int min_turns = 1;
  int max_turns = 4;
  int max_tokens_per_turn = 3;
  int vocab = 3;
  double tool_call_prob = 0.6;
  // log-ratio spread of trainer/old and old/sampler around each other
  double ratio_spread = 1.0;
};

inline Token random_token(agentrl::rng::Stream& s, const TrajectoryShape& shape) {
  Token t;
  t.id = static_cast<int>(s.below(static_cast<std::uint64_t>(shape.vocab)));
  t.trainer_old_logprob = log_uniform_prob(s);
  t.sampler_logprob = std::min(0.0, t.trainer_old_logprob + shape.ratio_spread * (2.0 * s.uniform() - 1.0));
  t.trainer_logprob = std::min(0.0, t.trainer_old_logprob + shape.ratio_spread * (2.0 * s.uniform() - 1.0));
  return t;
}

inline Trajectory random_trajectory(std::uint64_t seed, const TrajectoryShape& shape = {}) {
  agentrl::rng::Stream s(seed);
  Trajectory traj;
  const int n_turns = shape.min_turns +
                      static_cast<int>(s.below(static_cast<std::uint64_t>(shape.max_turns - shape.min_turns + 1)));
  for (int k = 0; k < n_turns; ++k) {
    Turn turn;
    const int n_tok = 1 + static_cast<int>(s.below(static_cast<std::uint64_t>(shape.max_tokens_per_turn)));
    for (int i = 0; i < n_tok; ++i) turn.tokens.push_back(random_token(s, shape));
    turn.ends_with_tool_call = s.bernoulli(shape.tool_call_prob);
    if (turn.ends_with_tool_call) turn.observation = "obs" + std::to_string(k);
    turn.error_flag = s.bernoulli(0.2);
    turn.relevance_flag = s.bernoulli(0.7);
    traj.turns.push_back(std::move(turn));
  }
  traj.final_reward = s.bernoulli(0.5) ? 1.0 : 0.0;
  return traj;
}

// Trajectory with fixed turn sizes; tool calls after every listed turn index.
inline Trajectory shaped_trajectory(const std::vector<int>& tokens_per_turn, const std::vector<bool>& tool_calls,
                                    double reward = 1.0) {
  Trajectory traj;
  for (std::size_t k = 0; k < tokens_per_turn.size(); ++k) {
    Turn turn;
    for (int i = 0; i < tokens_per_turn[k]; ++i) turn.tokens.push_back(Token{0, -0.5, -0.5, -0.5});
    turn.ends_with_tool_call = tool_calls[k];
    if (turn.ends_with_tool_call) turn.observation = "o";
    traj.turns.push_back(std::move(turn));
  }
  traj.final_reward = reward;
  return traj;
}

inline agentrl::FeatureLayout layout_for(const Trajectory& t, int slots = 1) {
  std::size_t widest = 1;
  for (const Turn& turn : t.turns) widest = std::max(widest, turn.tokens.size());
  return agentrl::FeatureLayout{slots, static_cast<int>(t.turns.size()), static_cast<int>(widest)};
}

}  // namespace fixtures
