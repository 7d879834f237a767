#pragma once

// Re-evaluating stored trajectories under a policy: per-token state features,
// current log-probabilities, and weighted log-likelihood gradients.

#include <span>
#include <vector>

#include "agentrl/policy.hpp"
#include "agentrl/trajectory.hpp"

namespace agentrl {

std::vector<double> token_features(const FeatureLayout& layout, const Trajectory& traj,
                                   const TokenPosition& pos);

// log pi(token | history) for every flattened token.
std::vector<double> policy_logprobs(const Trajectory& traj, const ToyPolicy& policy,
                                    const FeatureLayout& layout);

// acc += sum_{t in [begin, end)} weight * grad log pi(token_t)
void accumulate_span_grad(const Trajectory& traj, std::span<const TokenPosition> positions,
                          TokenSpan span, const ToyPolicy& policy, const FeatureLayout& layout,
                          double weight, ParamMatrix& acc);

// sum_{t in [begin, end)} log pi(token_t)
double span_logprob(const Trajectory& traj, std::span<const TokenPosition> positions,
                    TokenSpan span, const ToyPolicy& policy, const FeatureLayout& layout);

// Copy of traj whose trainer_logprob fields are re-evaluated under policy.
Trajectory with_trainer_logprobs(Trajectory traj, const ToyPolicy& policy,
                                 const FeatureLayout& layout);

}  // namespace agentrl
