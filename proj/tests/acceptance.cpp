// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "agentrl/chunk_rl.hpp"
#include "agentrl/curator.hpp"
#include "agentrl/experiment.hpp"
#include "agentrl/masked_sft.hpp"
#include "agentrl/scheduler.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace agentrl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

oracle::Layout ref_layout(const FeatureLayout& l) { return {l.task_slots, l.max_turns, l.turn_length}; }

FeatureLayout layout_of(const std::vector<Trajectory>& batch, int slots) {
  int turns = 1;
  int widest = 1;
  for (const Trajectory& t : batch) {
    turns = std::max(turns, static_cast<int>(t.turns.size()));
    for (const Turn& turn : t.turns) widest = std::max(widest, static_cast<int>(turn.tokens.size()));
  }
  return FeatureLayout{slots, turns, widest};
}

std::vector<Trajectory> random_batch(std::uint64_t seed, std::size_t n, bool on_policy) {
  std::vector<Trajectory> b;
  rng::Stream s(rng::derive({seed, 0xbadULL}));
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory t = fixtures::random_trajectory(rng::derive({seed, i}), {1, 4, 3, 3, 0.6, 1.0});
    t.task_slot = static_cast<int>(i % 2);
    if (on_policy) {
      for (Turn& turn : t.turns)
        for (Token& tok : turn.tokens) tok.trainer_logprob = tok.sampler_logprob = tok.trainer_old_logprob;
    } else {
      const double rewards[] = {1.0, 0.0, -1.0, 0.4};
      t.final_reward = rewards[s.below(4)];
    }
    b.push_back(std::move(t));
  }
  return b;
}

// ---------------------------------------------------------------------------
// 1. Analytic gradients against central finite differences.

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  const int n = 100;
  int fails[4] = {0, 0, 0, 0};
  double worst[4] = {0, 0, 0, 0};
  auto record = [&](int which, const ParamMatrix& g, const ParamMatrix& fd) {
    const double e = oracle::relative_error(g, fd);
    worst[which] = std::max(worst[which], e);
    if (!(e < 1e-6)) ++fails[which];
  };

  for (int i = 0; i < n; ++i) {
    const auto seed = static_cast<std::uint64_t>(i);
    // masked SFT
    {
      Trajectory t = fixtures::random_trajectory(seed, {1, 5, 3, 3, 0.5, 1.0});
      FeatureLayout l = fixtures::layout_for(t);
      ToyPolicy p = ToyPolicy::random(l.dim(), 3, 1.5, seed + 1);
      SftMaskConfig cfg;
      cfg.relevance_rule = i % 2 ? RelevanceRule::recorded : RelevanceRule::tool_proximity;
      record(0, sft_loss_grad(t, p, l, cfg), oracle::finite_difference(p.params(), [&](const ParamMatrix& w) {
               return sft_loss(t, ToyPolicy(w), l, cfg);
             }));
    }
    std::vector<Trajectory> batch = random_batch(seed + 1000, 3, false);
    FeatureLayout l = layout_of(batch, 2);
    ToyPolicy p = ToyPolicy::random(l.dim(), 3, 1.0, seed + 2);
    RlConfig cfg;
    cfg.gamma = 0.85;
    cfg.mismatch_threshold = 1.5;
    cfg.positive_reward_cutoff = 0.5;
    // baseline RL
    record(1, baseline_gradient(batch, p, l, cfg), oracle::finite_difference(p.params(), [&](const ParamMatrix& w) {
             return baseline_surrogate(batch, ToyPolicy(w), l, cfg);
           }));
    // chunk RL
    record(2, chunk_rl_gradient(batch, p, l, cfg), oracle::finite_difference(p.params(), [&](const ParamMatrix& w) {
             return chunk_rl_surrogate(batch, ToyPolicy(w), l, cfg);
           }));
    // IPA: an expert and a rollout replaying its first p chunks
    {
      Trajectory expert = fixtures::random_trajectory(seed + 2000, {2, 5, 3, 3, 0.7, 1.0});
      expert.final_reward = 1.0;
      const std::vector<Chunk> ch = segment_into_chunks(expert);
      const int K = static_cast<int>(ch.size());
      const int prefix = static_cast<int>(seed % static_cast<std::uint64_t>(K));
      Trajectory rollout = expert;
      rollout.prefix_chunks = prefix;
      rng::Stream s(seed + 3000);
      const std::size_t first_free = prefix > 0 ? ch[static_cast<std::size_t>(prefix) - 1].last_turn + 1 : 0;
      for (std::size_t k = first_free; k < rollout.turns.size(); ++k)
        for (Token& tok : rollout.turns[k].tokens) tok = fixtures::random_token(s, {});
      rollout.final_reward = s.bernoulli(0.5) ? 1.0 : -1.0;
      const int il = prefix > 0 ? std::min(prefix + 1, K) : 0;
      RlConfig icfg = cfg;
      icfg.lambda_il = 0.7;
      icfg.lambda_rl = 1.3;
      FeatureLayout il_layout = layout_of({expert, rollout}, 1);
      ToyPolicy ip = ToyPolicy::random(il_layout.dim(), 3, 1.0, seed + 4);
      record(3, ipa_loss_gradient(expert, il, rollout, ip, il_layout, icfg),
             oracle::finite_difference(ip.params(), [&](const ParamMatrix& w) {
               return ipa_surrogate(expert, il, rollout, ToyPolicy(w), il_layout, icfg);
             }));
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = fails[0] + fails[1] + fails[2] + fails[3] == 0 && secs < 60.0;
  std::ostringstream d;
  d << n << " instances per objective; worst relative error sft " << fmt("%.2e", worst[0]) << ", baseline "
    << fmt("%.2e", worst[1]) << ", chunk " << fmt("%.2e", worst[2]) << ", ipa " << fmt("%.2e", worst[3])
    << "; failures " << fails[0] + fails[1] + fails[2] + fails[3] << "; " << fmt("%.1fs", secs);
  return {pass, d.str()};
}

// ---------------------------------------------------------------------------
// 2. On-policy reduction to vanilla REINFORCE.

Outcome criterion_on_policy() {
  double worst_base = 0.0, worst_chunk = 0.0, worst_disc = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::vector<Trajectory> batch = random_batch(seed + 7000, 6, true);
    FeatureLayout l = layout_of(batch, 2);
    ToyPolicy p = ToyPolicy::random(l.dim(), 3, 1.0, seed);
    const ParamMatrix ref = oracle::vanilla_reinforce(batch, p.params(), ref_layout(l));
    RlConfig cfg;
    worst_base = std::max(worst_base, oracle::max_abs_diff(baseline_gradient(batch, p, l, cfg), ref));
    cfg.gamma = 1.0;
    worst_chunk = std::max(worst_chunk, oracle::max_abs_diff(chunk_rl_gradient(batch, p, l, cfg), ref));
    cfg.gamma = 0.9;
    worst_disc = std::max(worst_disc, oracle::max_abs_diff(chunk_rl_gradient(batch, p, l, cfg),
                                                           oracle::discounted_reinforce(batch, p.params(),
                                                                                        ref_layout(l), 0.9)));
  }
  const bool pass = worst_base <= 1e-10 && worst_chunk <= 1e-10 && worst_disc <= 1e-10;
  return {pass, "50 batches; max |diff| baseline " + fmt("%.1e", worst_base) + ", chunk(gamma=1) " +
                    fmt("%.1e", worst_chunk) + ", chunk(gamma=0.9) vs discounted oracle " + fmt("%.1e", worst_disc)};
}

// ---------------------------------------------------------------------------
// 3. Exhaustive micro-checks on every trajectory of at most six tokens over a
// binary vocabulary: all token-id assignments, turn splits and tool-call flags.

Outcome criterion_equation_fidelity() {
  const auto t0 = Clock::now();
  const double H = 2.0;
  const double offsets[] = {0.0, 0.5, 1.0};  // log pi_old - log mu; log 2 ~ 0.693
  long trajectories = 0, checks = 0, mismatches = 0;
  auto expect = [&](bool ok) {
    ++checks;
    if (!ok) ++mismatches;
  };

  for (int n = 1; n <= 6; ++n) {
    for (unsigned cuts = 0; cuts < (1u << (n - 1)); ++cuts) {
      std::vector<int> sizes{1};
      for (int i = 1; i < n; ++i) {
        if (cuts & (1u << (i - 1)))
          sizes.push_back(1);
        else
          ++sizes.back();
      }
      const int turns = static_cast<int>(sizes.size());
      for (unsigned tools = 0; tools < (1u << turns); ++tools) {
        for (unsigned ids = 0; ids < (1u << n); ++ids) {
          Trajectory t;
          int pos = 0;
          for (int k = 0; k < turns; ++k) {
            Turn turn;
            for (int j = 0; j < sizes[static_cast<std::size_t>(k)]; ++j, ++pos) {
              const int a = static_cast<int>((ids >> pos) & 1u);
              Token tok;
              tok.id = a;
              tok.trainer_old_logprob = -0.4 - 0.2 * a;
              tok.trainer_logprob = -0.1 - 0.3 * ((pos + a) % 3);
              tok.sampler_logprob = tok.trainer_old_logprob - offsets[(pos + 2 * a) % 3];
              turn.tokens.push_back(tok);
            }
            turn.ends_with_tool_call = (tools >> k) & 1u;
            if (turn.ends_with_tool_call) turn.observation = "o";
            t.turns.push_back(std::move(turn));
          }
          t.final_reward = ids & 1u ? 1.0 : 0.0;
          ++trajectories;

          const std::vector<oracle::FlatToken> ft = oracle::flat(t);
          std::vector<double> cur, old;
          for (const auto& f : ft) {
            cur.push_back(f.tok.trainer_logprob);
            old.push_back(f.tok.trainer_old_logprob);
          }
          // geometric-mean IS over the whole trajectory
          const double rho = geometric_is_ratio(cur, old);
          const double rho_ref = oracle::geometric_mean_ratio(cur, old);
          expect(std::abs(rho - rho_ref) <= 1e-12 * rho_ref);
          expect(std::abs(trajectory_is_ratio(t) - rho_ref) <= 1e-12 * rho_ref);
          // clip to [0, 1]
          const double clipped = clip_ratio(rho, 0.0, 1.0);
          expect(clipped == (rho_ref > 1.0 ? 1.0 : rho));
          expect(clip_ratio(clipped, 0.0, 1.0) == clipped);
          // token masks
          for (const auto& f : ft) {
            const int ref = std::exp(f.tok.trainer_old_logprob - f.tok.sampler_logprob) <= H ? 1 : 0;
            expect(token_mismatch_mask(f.tok.trainer_old_logprob, f.tok.sampler_logprob, H) == ref);
          }
          // chunk masks, chunk ratios and returns
          const std::vector<Chunk> chunks = segment_into_chunks(t);
          const std::vector<oracle::RefChunk> ref_chunks = oracle::chunks_of(t);
          expect(chunks.size() == ref_chunks.size());
          const int K = static_cast<int>(ref_chunks.size());
          for (double gamma : {1.0, 0.9, 0.5}) {
            const std::vector<double> g = chunk_returns(t, chunks, gamma);
            for (std::size_t c = 0; c < ref_chunks.size(); ++c) {
              const double ref = oracle::discounted(gamma, ref_chunks[c].k, K, t.final_reward);
              expect(std::abs(g[c] - ref) <= 1e-15);
            }
          }
          for (std::size_t c = 0; c < ref_chunks.size(); ++c) {
            std::vector<double> co, cs, cc;
            for (std::size_t i = ref_chunks[c].begin; i < ref_chunks[c].end; ++i) {
              co.push_back(ft[i].tok.trainer_old_logprob);
              cs.push_back(ft[i].tok.sampler_logprob);
              cc.push_back(ft[i].tok.trainer_logprob);
            }
            const int ref_mask = oracle::geometric_mean_ratio(co, cs) <= H ? 1 : 0;
            expect(chunk_mismatch_mask(chunks[c], t, H) == ref_mask);
            const double ref_ratio = oracle::geometric_mean_ratio(cc, co);
            expect(std::abs(chunk_is_ratio(chunks[c], t) - ref_ratio) <= 1e-12 * ref_ratio);
          }
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = mismatches == 0 && secs < 10.0;
  return {pass, std::to_string(trajectories) + " trajectories, " + std::to_string(checks) + " comparisons, " +
                    std::to_string(mismatches) + " mismatches; " + fmt("%.2fs", secs)};
}

// ---------------------------------------------------------------------------
// 4. Chunk-level vs token-level optimization on the planted-fork suite.

ExperimentConfig fork_suite_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  for (int t = 0; t < 2; ++t) {
    EnvSpec e;
    e.name = "fork" + std::to_string(t);
    e.chunk_count = 5;
    e.vocab_size = 3;
    e.forks = {{2 + t % 2, {(t + 1) % 3}}, {4, {(t + 2) % 3}}};
    cfg.envs.push_back(e);
  }
  cfg.seed = seed;
  cfg.policy_init_seed = seed;
  cfg.turn_length = 5;
  cfg.learning_rate = 2.0;
  cfg.steps = 200;
  cfg.batch_size = 16;
  cfg.eval_every = 200;
  cfg.eval_episodes = 16;
  cfg.rl.gamma = 0.95;
  cfg.rl.mismatch_threshold = 1.3;
  // Inference-engine mismatch: the sampler sees logits rounded to integers.
  cfg.sampler.rounding_bits = 0;
  return cfg;
}

Outcome criterion_chunk_vs_token() {
  const auto t0 = Clock::now();
  int wins_a = 0, wins_b = 0, wins = 0;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ExperimentConfig cfg = fork_suite_config(seed);
    double var[2];
    int cross[2];
    for (int v = 0; v < 2; ++v) {
      cfg.objective = v == 0 ? Objective::chunk_rl : Objective::baseline_rl;
      ExperimentResult r = run_experiment(cfg);
      std::vector<double> norms;
      cross[v] = std::numeric_limits<int>::max();
      for (const StepRecord& rec : r.records) {
        if (rec.step >= 20) norms.push_back(rec.grad_norm);
        if (cross[v] == std::numeric_limits<int>::max() && rec.train_success >= 0.8) cross[v] = rec.step;
      }
      var[v] = population_variance(norms);
    }
    const bool a = var[0] < var[1];
    const bool b = cross[0] < cross[1];
    wins_a += a;
    wins_b += b;
    wins += a && b;
    per_seed << (a && b ? "+" : "-");
  }
  const double secs = seconds_since(t0);
  const bool pass = wins >= 7 && secs < 600.0;
  return {pass, "seeds with (a) lower grad-norm variance and (b) earlier 80% crossing: " + std::to_string(wins) +
                    "/10 [" + per_seed.str() + "] (a " + std::to_string(wins_a) + ", b " + std::to_string(wins_b) +
                    "); " + fmt("%.1fs", secs)};
}

// ---------------------------------------------------------------------------
// 5. Sequential rollback on a task that is nearly unsolvable from the start.

ExperimentConfig rollback_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  EnvSpec e;
  e.name = "hard";
  e.chunk_count = 8;
  e.vocab_size = 20;
  for (int f : {2, 4, 6, 8}) e.forks.push_back({f, {(f * 3) % 20}});
  cfg.envs = {e};
  cfg.seed = seed;
  cfg.policy_init_seed = seed;
  cfg.learning_rate = 1.0;
  cfg.steps = 300;
  cfg.batch_size = 16;
  cfg.eval_every = 10;
  cfg.eval_episodes = 64;
  cfg.objective = Objective::ipa;
  cfg.resampling.strategy = ResamplingStrategy::sequential_rollback;
  cfg.resampling.mastery_threshold = 0.8;
  cfg.resampling.expert_search_budget = 1000000;
  return cfg;
}

Outcome criterion_rollback() {
  const auto t0 = Clock::now();
  int ok = 0;
  std::ostringstream per_seed;
  const double p0 = random_policy_success(rollback_config(0).envs[0]);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ExperimentConfig cfg = rollback_config(seed);
    ExperimentResult r = run_experiment(cfg);
    // (a) monotone schedule with plateaus at the forks: prefixes that expose a
    // fork chunk (f - 1) are held longer on average than the others.
    bool monotone = true;
    std::vector<int> dwell(static_cast<std::size_t>(cfg.envs[0].chunk_count), 0);
    int prev = std::numeric_limits<int>::max();
    for (const StepRecord& rec : r.records) {
      const int p = rec.prefixes[0][0];
      if (p > prev) monotone = false;
      prev = p;
      ++dwell[static_cast<std::size_t>(p)];
    }
    double fork_dwell = 0.0, other_dwell = 0.0;
    int fork_n = 0, other_n = 0;
    for (int p = 1; p < cfg.envs[0].chunk_count; ++p) {
      if (find_fork(cfg.envs[0], p + 1)) {
        fork_dwell += dwell[static_cast<std::size_t>(p)];
        ++fork_n;
      } else {
        other_dwell += dwell[static_cast<std::size_t>(p)];
        ++other_n;
      }
    }
    const bool plateaus = fork_dwell / fork_n > other_dwell / other_n;
    // (b) final test success from the initial state
    const bool solved = r.records.back().test_success.value_or(0.0) >= 0.5;
    // naive sampling under the same budget never succeeds at test time
    cfg.objective = Objective::chunk_rl;
    cfg.resampling.strategy = ResamplingStrategy::none;
    ExperimentResult naive = run_experiment(cfg);
    double naive_best = 0.0;
    for (const StepRecord& rec : naive.records) naive_best = std::max(naive_best, rec.test_success.value_or(0.0));
    const bool pass = monotone && plateaus && solved && naive_best == 0.0;
    ok += pass;
    per_seed << (pass ? "+" : "-");
  }
  const double secs = seconds_since(t0);
  return {ok >= 8 && secs < 600.0 && p0 < 0.01,
          "prefix-0 success " + fmt("%.2e", p0) + "; seeds passing (monotone, plateaus, test >= 50%, naive 0%): " +
              std::to_string(ok) + "/10 [" + per_seed.str() + "]; " + fmt("%.1fs", secs)};
}

// ---------------------------------------------------------------------------
// 6. IPA with and without parallelized initialization.

ExperimentConfig ablation_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  const int K = 6, V = 8;
  for (int nf = 1; nf <= 4; ++nf) {
    EnvSpec e;
    e.name = "forks" + std::to_string(nf);
    e.chunk_count = K;
    e.vocab_size = V;
    for (int i = 0; i < nf; ++i)
      e.forks.push_back({K - i * std::max(1, (K - 1) / nf), {static_cast<int>((seed + i + nf) % V)}});
    std::sort(e.forks.begin(), e.forks.end(), [](const Fork& a, const Fork& b) { return a.chunk < b.chunk; });
    cfg.envs.push_back(e);
  }
  cfg.seed = seed;
  cfg.policy_init_seed = seed;
  cfg.learning_rate = 1.0;
  cfg.steps = 200;
  cfg.batch_size = 16;
  cfg.eval_every = 200;
  cfg.eval_episodes = 64;
  cfg.objective = Objective::ipa;
  cfg.resampling.anchor_count = 4;
  cfg.resampling.expert_search_budget = 1000000;
  return cfg;
}

Outcome criterion_parallel_init() {
  const auto t0 = Clock::now();
  int wins = 0;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ExperimentConfig cfg = ablation_config(seed);
    double early[2], min_test[2];
    for (int v = 0; v < 2; ++v) {
      cfg.resampling.strategy = v == 0 ? ResamplingStrategy::parallel_init : ResamplingStrategy::none;
      ExperimentResult r = run_experiment(cfg);
      const std::size_t quarter = r.records.size() / 4;
      double s = 0.0;
      for (std::size_t i = 0; i < quarter; ++i) s += r.records[i].train_success;
      early[v] = s / static_cast<double>(quarter);
      const std::vector<double>& per_task = r.records.back().test_success_per_task;
      min_test[v] = *std::min_element(per_task.begin(), per_task.end());
    }
    const bool w = early[0] > early[1] && min_test[0] > min_test[1];
    wins += w;
    per_seed << (w ? "+" : "-");
  }
  return {wins >= 7, "seeds with higher early train success and higher min per-task test success: " +
                         std::to_string(wins) + "/10 [" + per_seed.str() + "]; " + fmt("%.1fs", seconds_since(t0))};
}

// ---------------------------------------------------------------------------
// 7. Scheduler: staleness, conservation, multiplexing dominance.

SchedulerConfig long_tail_workload(double tail_prob, int async_ratio) {
  SchedulerConfig c;
  c.total_gpus = 8;
  c.async_ratio = async_ratio;
  c.batch_size = 16;
  c.rollout_latency = {10, 2, tail_prob, 100};  // tail samples are 10x slower
  c.train_duration = 40;
  c.sync_duration = 0;
  return c;
}

Outcome criterion_scheduler() {
  const auto t0 = Clock::now();
  long stale = 0, leaks = 0, logs = 0;
  int dominant_seeds = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    bool dominant = true;
    for (double tail : {0.05, 0.1, 0.2}) {
      for (int ratio : {0, 1, 2}) {
        SchedulerConfig base = long_tail_workload(tail, ratio);
        auto audit = [&](const SimulationResult& r, int bound) {
          ++logs;
          std::int64_t produced = 0, consumed = 0, discarded = 0;
          for (const SchedulerEvent& e : r.events) {
            if (e.type == "complete") ++produced;
            if (e.type == "discard") ++discarded;
            if (e.type == "consume") {
              ++consumed;
              if (e.trainer_version - e.version > bound) ++stale;
            }
          }
          const SchedulerMetrics& m = r.metrics;
          if (produced != m.produced_samples || consumed != m.consumed_samples || discarded != m.discarded_samples ||
              m.produced_samples != m.consumed_samples + m.discarded_samples + m.buffered_at_end)
            ++leaks;
        };
        SchedulerConfig mux = base;
        mux.mode = SchedulerMode::multiplexed;
        mux.shrink_gpus = 7;
        SimulationResult rm = run_simulation(mux, seed, 50);
        audit(rm, ratio);
        for (int split = 1; split < base.total_gpus; ++split) {
          SchedulerConfig st = base;
          st.mode = SchedulerMode::static_split;
          st.train_gpus = split;
          SimulationResult rs = run_simulation(st, seed, 50);
          audit(rs, ratio);
          if (ratio == 1 && !(rm.metrics.gpu_busy_fraction > rs.metrics.gpu_busy_fraction)) dominant = false;
        }
      }
    }
    dominant_seeds += dominant;
  }
  const double secs = seconds_since(t0);
  const bool pass = stale == 0 && leaks == 0 && dominant_seeds == 10 && secs < 60.0;
  return {pass, std::to_string(logs) + " event logs: " + std::to_string(stale) + " stale consumptions, " +
                    std::to_string(leaks) + " conservation violations; multiplexed beats every static split on " +
                    std::to_string(dominant_seeds) + "/10 seeds; " + fmt("%.1fs", secs)};
}

// ---------------------------------------------------------------------------
// 8. Determinism of acceptance experiments.

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion_determinism() {
  const fs::path root = fs::temp_directory_path() / "agentrl_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::pair<std::string, ExperimentConfig>> runs;
  ExperimentConfig c4 = fork_suite_config(3);
  c4.objective = Objective::chunk_rl;
  runs.emplace_back("fork_suite_chunk", c4);
  c4.objective = Objective::baseline_rl;
  runs.emplace_back("fork_suite_baseline", c4);
  runs.emplace_back("rollback", rollback_config(1));
  ExperimentConfig c6 = ablation_config(2);
  c6.resampling.strategy = ResamplingStrategy::parallel_init;
  runs.emplace_back("parallel_init", c6);

  int identical = 0;
  for (auto& [name, cfg] : runs) {
    std::string bytes[2];
    for (int rep = 0; rep < 2; ++rep) {
      cfg.output_dir = (root / (name + std::to_string(rep))).string();
      run_experiment(cfg);
      emit_metrics(cfg.output_dir);
      bytes[rep] = slurp(fs::path(cfg.output_dir) / "metrics.jsonl") + slurp(fs::path(cfg.output_dir) / "summary.json");
    }
    identical += !bytes[0].empty() && bytes[0] == bytes[1];
  }
  // scheduler event logs
  std::string logs[2];
  for (std::string& out : logs) {
    SchedulerConfig c = long_tail_workload(0.1, 1);
    c.mode = SchedulerMode::multiplexed;
    c.shrink_gpus = 7;
    std::ostringstream s;
    write_event_log(s, run_simulation(c, 4, 30).events);
    out = s.str();
  }
  const bool sched_same = logs[0] == logs[1];
  fs::remove_all(root);
  const int total = static_cast<int>(runs.size());
  return {identical == total && sched_same, std::to_string(identical) + "/" + std::to_string(total) +
                                                " experiment re-runs byte-identical; scheduler event log " +
                                                (sched_same ? "identical" : "differs")};
}

// ---------------------------------------------------------------------------
// 9. Monte-Carlo pass rates against the analytic random-policy rate.

Outcome criterion_curation() {
  int ok = 0;
  double worst_z = 0.0;
  const int n = 4000;
  for (int i = 0; i < 20; ++i) {
    rng::Stream s(rng::derive({9, static_cast<std::uint64_t>(i)}));
    EnvSpec e;
    e.name = "fixture" + std::to_string(i);
    e.chunk_count = 2 + static_cast<int>(s.below(5));
    e.vocab_size = 2 + static_cast<int>(s.below(4));
    for (int k = 1; k <= e.chunk_count; ++k) {
      if (!s.bernoulli(0.5)) continue;
      std::vector<int> all(static_cast<std::size_t>(e.vocab_size));
      for (int a = 0; a < e.vocab_size; ++a) all[static_cast<std::size_t>(a)] = a;
      for (std::size_t j = all.size(); j > 1; --j) std::swap(all[j - 1], all[s.below(j)]);
      const std::size_t size = 1 + s.below(static_cast<std::uint64_t>(e.vocab_size - 1));
      std::vector<int> correct(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(size));
      std::sort(correct.begin(), correct.end());
      e.forks.push_back({k, correct});
    }
    // analytic oracle: product over forks of |correct| / vocab
    double p = 1.0;
    for (const Fork& f : e.forks) p *= static_cast<double>(f.correct.size()) / e.vocab_size;
    FeatureLayout l{1, e.chunk_count, 1};
    std::vector<Evaluator> evaluators{{"uniform", ToyPolicy(l.dim(), e.vocab_size), SamplerConfig{}}};
    InstanceRecord r = estimate_difficulty(e, evaluators, n, static_cast<std::uint64_t>(i));
    const double sigma = std::sqrt(p * (1.0 - p) / n);
    const double diff = std::abs(r.mean_pass_rate() - p);
    if (sigma == 0.0) {
      ok += diff == 0.0;
    } else {
      worst_z = std::max(worst_z, diff / sigma);
      ok += diff <= 3.0 * sigma;
    }
  }
  return {ok == 20, std::to_string(ok) + "/20 fixtures within 3 sigma (n = " + std::to_string(n) +
                        "); worst |z| " + fmt("%.2f", worst_z)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", criterion_gradients},
      {"on-policy reduction", criterion_on_policy},
      {"equation fidelity", criterion_equation_fidelity},
      {"chunk vs token optimization", criterion_chunk_vs_token},
      {"sequential rollback", criterion_rollback},
      {"parallelized initialization", criterion_parallel_init},
      {"scheduler properties", criterion_scheduler},
      {"determinism", criterion_determinism},
      {"difficulty curation", criterion_curation},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %zu (%s): %s - %s\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
