#include "agentrl/masked_sft.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>

#include "agentrl/scoring.hpp"

namespace agentrl {

void validate(const SftMaskConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("SFT epsilon must be positive");
  if (cfg.window < 0) throw std::invalid_argument("relevance window must be non-negative");
}

std::vector<int> relevance_mask(const Trajectory& traj, const SftMaskConfig& cfg) {
  const std::size_t n = traj.turns.size();
  std::vector<int> rel(n, 0);
  switch (cfg.relevance_rule) {
    case RelevanceRule::all_relevant:
      std::fill(rel.begin(), rel.end(), 1);
      break;
    case RelevanceRule::recorded:
      for (std::size_t k = 0; k < n; ++k) rel[k] = traj.turns[k].relevance_flag ? 1 : 0;
      break;
    case RelevanceRule::tool_proximity:
      for (std::size_t j = 0; j < n; ++j) {
        if (!traj.turns[j].ends_with_tool_call) continue;
        for (std::size_t k = 0; k < n; ++k) {
          long d = static_cast<long>(k) - static_cast<long>(j);
          if (std::labs(d) <= cfg.window) rel[k] = 1;
        }
      }
      break;
  }
  return rel;
}

std::vector<int> turn_masks(const Trajectory& traj, const SftMaskConfig& cfg) {
  std::vector<int> m = relevance_mask(traj, cfg);
  for (std::size_t k = 0; k < m.size(); ++k)
    if (traj.turns[k].error_flag) m[k] = 0;
  return m;
}

namespace {

struct TurnSpans {
  std::vector<TokenSpan> spans;
  std::vector<TokenPosition> positions;
};

TurnSpans turn_spans(const Trajectory& traj) {
  TurnSpans out;
  std::size_t cursor = 0;
  for (const Turn& t : traj.turns) {
    out.spans.push_back({cursor, cursor + t.tokens.size()});
    cursor += t.tokens.size();
  }
  out.positions = token_positions(traj);
  return out;
}

double normaliser(const Trajectory& traj, const std::vector<int>& masks, double eps) {
  double n = 0.0;
  for (std::size_t k = 0; k < masks.size(); ++k)
    if (masks[k]) n += static_cast<double>(traj.turns[k].tokens.size());
  return n + eps;
}

}  // namespace

double sft_loss(const Trajectory& traj, const ToyPolicy& policy, const FeatureLayout& layout,
                const SftMaskConfig& cfg) {
  validate(cfg);
  const std::vector<int> masks = turn_masks(traj, cfg);
  const TurnSpans ts = turn_spans(traj);
  double num = 0.0;
  for (std::size_t k = 0; k < masks.size(); ++k)
    if (masks[k]) num += span_logprob(traj, ts.positions, ts.spans[k], policy, layout);
  if (num == 0.0) return 0.0;
  return -num / normaliser(traj, masks, cfg.epsilon);
}

ParamMatrix sft_loss_grad(const Trajectory& traj, const ToyPolicy& policy,
                          const FeatureLayout& layout, const SftMaskConfig& cfg) {
  validate(cfg);
  const std::vector<int> masks = turn_masks(traj, cfg);
  const TurnSpans ts = turn_spans(traj);
  ParamMatrix g(policy.feature_dim(), policy.vocab_size());
  const double w = -1.0 / normaliser(traj, masks, cfg.epsilon);
  for (std::size_t k = 0; k < masks.size(); ++k)
    if (masks[k]) accumulate_span_grad(traj, ts.positions, ts.spans[k], policy, layout, w, g);
  return g;
}

}  // namespace agentrl
