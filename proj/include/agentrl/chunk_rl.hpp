#pragma once

/**
 * Off-policy REINFORCE objectives.
 *
 * Baseline (token level):
 *   positive trajectories:   R * sum_t m_t grad log pi(t)
 *   other trajectories:      clip(rho, lo, hi) * R * sum_t m_t grad log pi(t)
 * with rho the geometric mean of pi_theta / pi_theta_old over the trajectory
 * and m_t = 1[pi_theta_old(t) / mu(t) <= H].
 *
 * Chunk level: the same split, but the return, ratio and mask are per chunk:
 *   G_k = gamma^(K - k) * R_final, rho_c = geometric mean over the chunk,
 *   m_c = 1[geometric mean of pi_theta_old / mu over the chunk <= H].
 *
 * IPA adds a return-weighted imitation term on the first f expert chunks to the
 * chunk-level update on the resampled part of a rollout.
 *
 * All gradients are ascent directions for the expected reward, averaged
 * uniformly over the batch. Ratios, masks and returns are computed from the
 * log-probabilities stored on the trajectory; only grad log pi is evaluated
 * under the policy. The *_surrogate functions return the scalar whose gradient
 * is the corresponding estimator (weights held fixed).
 */

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "agentrl/policy.hpp"
#include "agentrl/trajectory.hpp"

namespace agentrl {

struct RlConfig {
  double gamma = 0.95;
  double mismatch_threshold = 2.0;
  double clip_low = 0.0;
  double clip_high = 1.0;
  double lambda_il = 1.0;
  double lambda_rl = 1.0;
  double positive_reward_cutoff = 0.0;
};

void validate(const RlConfig& cfg);

struct ChunkCredit {
  int chunk_index = 1;
  double discounted_return = 0.0;
  double chunk_is_ratio = 1.0;
  int chunk_mask = 1;
};

// exp(mean(new - old)). Throws std::invalid_argument on empty or unequal input.
double geometric_is_ratio(std::span<const double> logprobs_new, std::span<const double> logprobs_old);

double clip_ratio(double rho, double low, double high);

// 1 iff pi_old / mu <= H (inclusive).
int token_mismatch_mask(double trainer_old_logprob, double sampler_logprob, double threshold);

// 1 iff the geometric mean of pi_old / mu over the chunk is <= H (inclusive).
int chunk_mismatch_mask(const Chunk& chunk, const Trajectory& traj, double threshold);

// Geometric-mean pi_theta / pi_theta_old over the chunk.
double chunk_is_ratio(const Chunk& chunk, const Trajectory& traj);

// G_k = gamma^(K - k) * R_final for each chunk.
std::vector<double> chunk_returns(const Trajectory& traj, std::span<const Chunk> chunks, double gamma);

std::vector<ChunkCredit> chunk_credits(const Trajectory& traj, std::span<const Chunk> chunks,
                                       const RlConfig& cfg);

bool is_positive(const Trajectory& traj, const RlConfig& cfg);

// Whole-trajectory geometric IS ratio over the policy-sampled tokens.
double trajectory_is_ratio(const Trajectory& traj);

ParamMatrix baseline_gradient(std::span<const Trajectory> batch, const ToyPolicy& policy,
                              const FeatureLayout& layout, const RlConfig& cfg);
double baseline_surrogate(std::span<const Trajectory> batch, const ToyPolicy& policy,
                          const FeatureLayout& layout, const RlConfig& cfg);

ParamMatrix chunk_rl_gradient(std::span<const Trajectory> batch, const ToyPolicy& policy,
                              const FeatureLayout& layout, const RlConfig& cfg);
ParamMatrix chunk_rl_gradient(std::span<const Trajectory> batch,
                              std::span<const std::vector<Chunk>> chunks_per_traj,
                              const ToyPolicy& policy, const FeatureLayout& layout,
                              const RlConfig& cfg);
double chunk_rl_surrogate(std::span<const Trajectory> batch, const ToyPolicy& policy,
                          const FeatureLayout& layout, const RlConfig& cfg);

// sum_{k <= imitation_chunks} G*_k grad log pi(c*_k); no lambda applied.
ParamMatrix imitation_gradient(const Trajectory& expert, int imitation_chunks,
                               const ToyPolicy& policy, const FeatureLayout& layout,
                               const RlConfig& cfg);
double imitation_surrogate(const Trajectory& expert, int imitation_chunks, const ToyPolicy& policy,
                           const FeatureLayout& layout, const RlConfig& cfg);

// lambda_IL * imitation(expert, 1..imitation_chunks)
//   + lambda_RL * chunk-level update on chunks > resampled.prefix_chunks.
// The resampled rollout's replayed prefix must match the expert chunk for
// chunk; otherwise MalformedInput is thrown.
ParamMatrix ipa_loss_gradient(const Trajectory& expert, int imitation_chunks,
                              const Trajectory& resampled, const ToyPolicy& policy,
                              const FeatureLayout& layout, const RlConfig& cfg);
double ipa_surrogate(const Trajectory& expert, int imitation_chunks, const Trajectory& resampled,
                     const ToyPolicy& policy, const FeatureLayout& layout, const RlConfig& cfg);

struct IpaSample {
  const Trajectory* expert = nullptr;  // may be null when no expert is in use
  int imitation_chunks = 0;
  Trajectory rollout;
};

// Batch average of per-sample IPA gradients.
ParamMatrix ipa_batch_gradient(std::span<const IpaSample> batch, const ToyPolicy& policy,
                               const FeatureLayout& layout, const RlConfig& cfg);

void check_prefix_coherence(const Trajectory& expert, const Trajectory& resampled);

// Debug dump: parameter-shaped gradient followed by per-chunk credit tables.
void write_gradient_dump(std::ostream& out, const ParamMatrix& grad,
                         std::span<const Trajectory> batch, const RlConfig& cfg);

}  // namespace agentrl
