#pragma once

// Dynamically masked supervised fine-tuning objective.
//
// Each turn k gets a gate m_k = (1 - Err(k)) * Rel(k). The loss is the masked
// negative log-likelihood normalised by the number of unmasked tokens:
//
//   L = -(sum_k m_k sum_{t in turn k} log pi(t)) / (sum_k m_k |turn k| + eps)

#include <vector>

#include "agentrl/policy.hpp"
#include "agentrl/trajectory.hpp"

namespace agentrl {

enum class RelevanceRule {
  all_relevant,
  // Turns within `window` turns (either side) of a tool-calling turn.
  tool_proximity,
  // Use the relevance flag recorded on each turn.
  recorded,
};

struct SftMaskConfig {
  double epsilon = 1e-8;
  RelevanceRule relevance_rule = RelevanceRule::all_relevant;
  int window = 1;
};

void validate(const SftMaskConfig& cfg);

std::vector<int> relevance_mask(const Trajectory& traj, const SftMaskConfig& cfg);
std::vector<int> turn_masks(const Trajectory& traj, const SftMaskConfig& cfg);

double sft_loss(const Trajectory& traj, const ToyPolicy& policy, const FeatureLayout& layout,
                const SftMaskConfig& cfg);
ParamMatrix sft_loss_grad(const Trajectory& traj, const ToyPolicy& policy,
                          const FeatureLayout& layout, const SftMaskConfig& cfg);

}  // namespace agentrl
