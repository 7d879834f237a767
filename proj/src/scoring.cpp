#include "agentrl/scoring.hpp"

namespace agentrl {

std::vector<double> token_features(const FeatureLayout& layout, const Trajectory& traj,
                                   const TokenPosition& pos) {
  return layout.features(traj.task_slot, pos.turn, pos.offset);
}

std::vector<double> policy_logprobs(const Trajectory& traj, const ToyPolicy& policy,
                                    const FeatureLayout& layout) {
  std::vector<double> out;
  out.reserve(token_count(traj));
  for (const TokenPosition& pos : token_positions(traj)) {
    out.push_back(policy.logprob(token_features(layout, traj, pos),
                                 traj.turns[pos.turn].tokens[pos.offset].id));
  }
  return out;
}

void accumulate_span_grad(const Trajectory& traj, std::span<const TokenPosition> positions,
                          TokenSpan span, const ToyPolicy& policy, const FeatureLayout& layout,
                          double weight, ParamMatrix& acc) {
  if (weight == 0.0) return;
  for (std::size_t t = span.begin; t < span.end; ++t) {
    const TokenPosition& pos = positions[t];
    policy.accumulate_logprob_grad(token_features(layout, traj, pos),
                                   traj.turns[pos.turn].tokens[pos.offset].id, weight, acc);
  }
}

double span_logprob(const Trajectory& traj, std::span<const TokenPosition> positions,
                    TokenSpan span, const ToyPolicy& policy, const FeatureLayout& layout) {
  double s = 0.0;
  for (std::size_t t = span.begin; t < span.end; ++t) {
    const TokenPosition& pos = positions[t];
    s += policy.logprob(token_features(layout, traj, pos), traj.turns[pos.turn].tokens[pos.offset].id);
  }
  return s;
}

Trajectory with_trainer_logprobs(Trajectory traj, const ToyPolicy& policy,
                                 const FeatureLayout& layout) {
  for (std::size_t k = 0; k < traj.turns.size(); ++k) {
    for (std::size_t i = 0; i < traj.turns[k].tokens.size(); ++i) {
      Token& tok = traj.turns[k].tokens[i];
      tok.trainer_logprob = policy.logprob(token_features(layout, traj, {k, i}), tok.id);
    }
  }
  return traj;
}

}  // namespace agentrl
