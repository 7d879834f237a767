#include "agentrl/chunk_rl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "agentrl/scoring.hpp"

namespace agentrl {

void validate(const RlConfig& cfg) {
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0, 1]");
  if (!(cfg.mismatch_threshold > 0.0)) throw std::invalid_argument("mismatch threshold must be positive");
  if (!(cfg.clip_low <= cfg.clip_high)) throw std::invalid_argument("clip_low must not exceed clip_high");
  if (cfg.lambda_il < 0.0 || cfg.lambda_rl < 0.0) throw std::invalid_argument("lambdas must be non-negative");
}

double geometric_is_ratio(std::span<const double> logprobs_new, std::span<const double> logprobs_old) {
  if (logprobs_new.size() != logprobs_old.size())
    throw std::invalid_argument("geometric_is_ratio: length mismatch");
  if (logprobs_new.empty()) throw std::invalid_argument("geometric_is_ratio: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < logprobs_new.size(); ++i) s += logprobs_new[i] - logprobs_old[i];
  return std::exp(s / static_cast<double>(logprobs_new.size()));
}

double clip_ratio(double rho, double low, double high) { return std::clamp(rho, low, high); }

int token_mismatch_mask(double trainer_old_logprob, double sampler_logprob, double threshold) {
  return (trainer_old_logprob - sampler_logprob) <= std::log(threshold) ? 1 : 0;
}

namespace {

// Mean over the chunk of (a - b) for the chosen pair of stored log-probabilities.
template <typename Proj>
double chunk_mean_log_ratio(const Chunk& chunk, const Trajectory& traj, Proj proj) {
  if (chunk.token_span.size() == 0) throw MalformedInput("empty chunk");
  std::size_t t = 0;
  double s = 0.0;
  for (const Turn& turn : traj.turns) {
    for (const Token& tok : turn.tokens) {
      if (t >= chunk.token_span.begin && t < chunk.token_span.end) s += proj(tok);
      ++t;
    }
  }
  if (chunk.token_span.end > t) throw MalformedInput("chunk span exceeds trajectory");
  return s / static_cast<double>(chunk.token_span.size());
}

}  // namespace

int chunk_mismatch_mask(const Chunk& chunk, const Trajectory& traj, double threshold) {
  double m = chunk_mean_log_ratio(chunk, traj, [](const Token& t) {
    return t.trainer_old_logprob - t.sampler_logprob;
  });
  return m <= std::log(threshold) ? 1 : 0;
}

double chunk_is_ratio(const Chunk& chunk, const Trajectory& traj) {
  return std::exp(chunk_mean_log_ratio(chunk, traj, [](const Token& t) {
    return t.trainer_logprob - t.trainer_old_logprob;
  }));
}

std::vector<double> chunk_returns(const Trajectory& traj, std::span<const Chunk> chunks, double gamma) {
  // Built backwards from the terminal chunk so that G_k = gamma * G_{k+1}
  // holds term by term.
  const int K = static_cast<int>(chunks.size());
  std::vector<double> by_distance(chunks.size() + 1);
  by_distance[0] = traj.final_reward;
  for (std::size_t d = 1; d < by_distance.size(); ++d) by_distance[d] = gamma * by_distance[d - 1];
  std::vector<double> g(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const int d = K - chunks[i].index;
    if (d < 0 || d >= K) throw MalformedInput("chunk index outside 1..K");
    g[i] = by_distance[static_cast<std::size_t>(d)];
  }
  return g;
}

std::vector<ChunkCredit> chunk_credits(const Trajectory& traj, std::span<const Chunk> chunks,
                                       const RlConfig& cfg) {
  std::vector<double> g = chunk_returns(traj, chunks, cfg.gamma);
  std::vector<ChunkCredit> out;
  out.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    out.push_back(ChunkCredit{chunks[i].index, g[i], chunk_is_ratio(chunks[i], traj),
                              chunk_mismatch_mask(chunks[i], traj, cfg.mismatch_threshold)});
  }
  return out;
}

bool is_positive(const Trajectory& traj, const RlConfig& cfg) {
  return traj.final_reward > cfg.positive_reward_cutoff;
}

double trajectory_is_ratio(const Trajectory& traj) {
  const std::vector<Chunk> chunks = segment_into_chunks(traj);
  const std::vector<Token> tokens = flatten_tokens(traj);
  const std::size_t first = first_action_token(traj, chunks);
  std::vector<double> lp_new, lp_old;
  for (std::size_t t = first; t < tokens.size(); ++t) {
    lp_new.push_back(tokens[t].trainer_logprob);
    lp_old.push_back(tokens[t].trainer_old_logprob);
  }
  return geometric_is_ratio(lp_new, lp_old);
}

namespace {

// Per-token weights of the baseline estimator for one trajectory (zero for
// prefix tokens and masked tokens).
std::vector<double> baseline_token_weights(const Trajectory& traj, const RlConfig& cfg) {
  validate(traj);
  const std::vector<Chunk> chunks = segment_into_chunks(traj);
  const std::vector<Token> tokens = flatten_tokens(traj);
  const std::size_t first = first_action_token(traj, chunks);
  std::vector<double> w(tokens.size(), 0.0);
  if (first >= tokens.size()) return w;
  double scale = traj.final_reward;
  if (!is_positive(traj, cfg))
    scale *= clip_ratio(trajectory_is_ratio(traj), cfg.clip_low, cfg.clip_high);
  for (std::size_t t = first; t < tokens.size(); ++t) {
    w[t] = scale * token_mismatch_mask(tokens[t].trainer_old_logprob, tokens[t].sampler_logprob,
                                       cfg.mismatch_threshold);
  }
  return w;
}

// Per-chunk weights of the chunk-level estimator; chunks inside the replayed
// prefix get weight zero.
std::vector<double> chunk_weights(const Trajectory& traj, std::span<const Chunk> chunks,
                                  const RlConfig& cfg) {
  const std::vector<ChunkCredit> credits = chunk_credits(traj, chunks, cfg);
  const bool positive = is_positive(traj, cfg);
  std::vector<double> w(chunks.size(), 0.0);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (chunks[i].index <= traj.prefix_chunks) continue;
    const ChunkCredit& c = credits[i];
    double v = c.discounted_return * c.chunk_mask;
    if (!positive) v *= clip_ratio(c.chunk_is_ratio, cfg.clip_low, cfg.clip_high);
    w[i] = v;
  }
  return w;
}

void check_batch(std::span<const Trajectory> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
}

}  // namespace

ParamMatrix baseline_gradient(std::span<const Trajectory> batch, const ToyPolicy& policy,
                              const FeatureLayout& layout, const RlConfig& cfg) {
  validate(cfg);
  check_batch(batch);
  ParamMatrix g(policy.feature_dim(), policy.vocab_size());
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const Trajectory& traj : batch) {
    const std::vector<double> w = baseline_token_weights(traj, cfg);
    const std::vector<TokenPosition> pos = token_positions(traj);
    for (std::size_t t = 0; t < w.size(); ++t)
      accumulate_span_grad(traj, pos, {t, t + 1}, policy, layout, w[t] * inv_b, g);
  }
  return g;
}

double baseline_surrogate(std::span<const Trajectory> batch, const ToyPolicy& policy,
                          const FeatureLayout& layout, const RlConfig& cfg) {
  validate(cfg);
  check_batch(batch);
  double s = 0.0;
  for (const Trajectory& traj : batch) {
    const std::vector<double> w = baseline_token_weights(traj, cfg);
    const std::vector<double> lp = policy_logprobs(traj, policy, layout);
    for (std::size_t t = 0; t < w.size(); ++t) s += w[t] * lp[t];
  }
  return s / static_cast<double>(batch.size());
}

ParamMatrix chunk_rl_gradient(std::span<const Trajectory> batch,
                              std::span<const std::vector<Chunk>> chunks_per_traj,
                              const ToyPolicy& policy, const FeatureLayout& layout,
                              const RlConfig& cfg) {
  validate(cfg);
  check_batch(batch);
  if (chunks_per_traj.size() != batch.size())
    throw std::invalid_argument("one segmentation per trajectory required");
  ParamMatrix g(policy.feature_dim(), policy.vocab_size());
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Trajectory& traj = batch[i];
    validate(traj);
    const auto& chunks = chunks_per_traj[i];
    if (chunks.empty() || chunks.back().token_span.end != token_count(traj))
      throw MalformedInput("segmentation does not cover the trajectory");
    const std::vector<double> w = chunk_weights(traj, chunks, cfg);
    const std::vector<TokenPosition> pos = token_positions(traj);
    for (std::size_t c = 0; c < chunks.size(); ++c)
      accumulate_span_grad(traj, pos, chunks[c].token_span, policy, layout, w[c] * inv_b, g);
  }
  return g;
}

ParamMatrix chunk_rl_gradient(std::span<const Trajectory> batch, const ToyPolicy& policy,
                              const FeatureLayout& layout, const RlConfig& cfg) {
  check_batch(batch);
  std::vector<std::vector<Chunk>> chunks;
  chunks.reserve(batch.size());
  for (const Trajectory& t : batch) chunks.push_back(segment_into_chunks(t));
  return chunk_rl_gradient(batch, chunks, policy, layout, cfg);
}

double chunk_rl_surrogate(std::span<const Trajectory> batch, const ToyPolicy& policy,
                          const FeatureLayout& layout, const RlConfig& cfg) {
  validate(cfg);
  check_batch(batch);
  double s = 0.0;
  for (const Trajectory& traj : batch) {
    validate(traj);
    const std::vector<Chunk> chunks = segment_into_chunks(traj);
    const std::vector<double> w = chunk_weights(traj, chunks, cfg);
    const std::vector<TokenPosition> pos = token_positions(traj);
    for (std::size_t c = 0; c < chunks.size(); ++c)
      if (w[c] != 0.0) s += w[c] * span_logprob(traj, pos, chunks[c].token_span, policy, layout);
  }
  return s / static_cast<double>(batch.size());
}

namespace {

std::vector<double> imitation_weights(const Trajectory& expert, std::span<const Chunk> chunks,
                                      int imitation_chunks, const RlConfig& cfg) {
  if (imitation_chunks < 0 || static_cast<std::size_t>(imitation_chunks) > chunks.size())
    throw std::invalid_argument("imitation chunk count outside the expert trajectory");
  std::vector<double> g = chunk_returns(expert, chunks, cfg.gamma);
  for (std::size_t i = static_cast<std::size_t>(imitation_chunks); i < g.size(); ++i) g[i] = 0.0;
  return g;
}

}  // namespace

ParamMatrix imitation_gradient(const Trajectory& expert, int imitation_chunks,
                               const ToyPolicy& policy, const FeatureLayout& layout,
                               const RlConfig& cfg) {
  validate(cfg);
  validate(expert);
  const std::vector<Chunk> chunks = segment_into_chunks(expert);
  const std::vector<double> w = imitation_weights(expert, chunks, imitation_chunks, cfg);
  const std::vector<TokenPosition> pos = token_positions(expert);
  ParamMatrix g(policy.feature_dim(), policy.vocab_size());
  for (std::size_t c = 0; c < chunks.size(); ++c)
    accumulate_span_grad(expert, pos, chunks[c].token_span, policy, layout, w[c], g);
  return g;
}

double imitation_surrogate(const Trajectory& expert, int imitation_chunks, const ToyPolicy& policy,
                           const FeatureLayout& layout, const RlConfig& cfg) {
  validate(cfg);
  validate(expert);
  const std::vector<Chunk> chunks = segment_into_chunks(expert);
  const std::vector<double> w = imitation_weights(expert, chunks, imitation_chunks, cfg);
  const std::vector<TokenPosition> pos = token_positions(expert);
  double s = 0.0;
  for (std::size_t c = 0; c < chunks.size(); ++c)
    if (w[c] != 0.0) s += w[c] * span_logprob(expert, pos, chunks[c].token_span, policy, layout);
  return s;
}

void check_prefix_coherence(const Trajectory& expert, const Trajectory& resampled) {
  if (resampled.prefix_chunks == 0) return;
  if (expert.task_slot != resampled.task_slot)
    throw MalformedInput("expert and resampled rollout belong to different tasks");
  const std::vector<Chunk> ec = segment_into_chunks(expert);
  const std::vector<Chunk> rc = segment_into_chunks(resampled);
  const auto p = static_cast<std::size_t>(resampled.prefix_chunks);
  if (p > ec.size() || p > rc.size())
    throw MalformedInput("replayed prefix is longer than the expert trajectory");
  if (ec[p - 1].token_span != rc[p - 1].token_span)
    throw MalformedInput("replayed prefix boundary does not match the expert");
  const std::vector<Token> et = flatten_tokens(expert);
  const std::vector<Token> rt = flatten_tokens(resampled);
  for (std::size_t t = 0; t < rc[p - 1].token_span.end; ++t)
    if (et[t].id != rt[t].id) throw MalformedInput("replayed prefix actions differ from the expert");
}

ParamMatrix ipa_loss_gradient(const Trajectory& expert, int imitation_chunks,
                              const Trajectory& resampled, const ToyPolicy& policy,
                              const FeatureLayout& layout, const RlConfig& cfg) {
  check_prefix_coherence(expert, resampled);
  ParamMatrix g = imitation_gradient(expert, imitation_chunks, policy, layout, cfg);
  g *= cfg.lambda_il;
  g.axpy(cfg.lambda_rl, chunk_rl_gradient(std::span(&resampled, 1), policy, layout, cfg));
  return g;
}

double ipa_surrogate(const Trajectory& expert, int imitation_chunks, const Trajectory& resampled,
                     const ToyPolicy& policy, const FeatureLayout& layout, const RlConfig& cfg) {
  check_prefix_coherence(expert, resampled);
  return cfg.lambda_il * imitation_surrogate(expert, imitation_chunks, policy, layout, cfg) +
         cfg.lambda_rl * chunk_rl_surrogate(std::span(&resampled, 1), policy, layout, cfg);
}

ParamMatrix ipa_batch_gradient(std::span<const IpaSample> batch, const ToyPolicy& policy,
                               const FeatureLayout& layout, const RlConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  ParamMatrix g(policy.feature_dim(), policy.vocab_size());
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const IpaSample& s : batch) {
    if (s.expert) {
      g.axpy(inv_b, ipa_loss_gradient(*s.expert, s.imitation_chunks, s.rollout, policy, layout, cfg));
    } else {
      if (s.imitation_chunks != 0 || s.rollout.prefix_chunks != 0)
        throw MalformedInput("imitation or replayed prefix requested without an expert");
      g.axpy(inv_b * cfg.lambda_rl, chunk_rl_gradient(std::span(&s.rollout, 1), policy, layout, cfg));
    }
  }
  return g;
}

void write_gradient_dump(std::ostream& out, const ParamMatrix& grad,
                         std::span<const Trajectory> batch, const RlConfig& cfg) {
  char buf[40];
  out << "rows " << grad.rows() << "\ncols " << grad.cols() << "\ngradient\n";
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    for (std::size_t c = 0; c < grad.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", grad(r, c));
      out << (c ? " " : "") << buf;
    }
    out << '\n';
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::vector<Chunk> chunks = segment_into_chunks(batch[i]);
    out << "trajectory " << i << " reward " << batch[i].final_reward << " chunks " << chunks.size()
        << "\nk G rho mask\n";
    for (const ChunkCredit& c : chunk_credits(batch[i], chunks, cfg)) {
      std::snprintf(buf, sizeof buf, "%.17g", c.discounted_return);
      out << c.chunk_index << ' ' << buf << ' ';
      std::snprintf(buf, sizeof buf, "%.17g", c.chunk_is_ratio);
      out << buf << ' ' << c.chunk_mask << '\n';
    }
  }
}

}  // namespace agentrl
