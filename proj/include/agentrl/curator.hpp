#pragma once

// Pass-rate based difficulty estimation and selection of RL training instances.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "agentrl/policy.hpp"
#include "agentrl/sim_env.hpp"

namespace agentrl {

enum class DifficultyBand { trivial, moderate, impossible, unreliable };

std::string_view to_string(DifficultyBand b);
DifficultyBand band_from_string(std::string_view s);

struct InstanceRecord {
  EnvSpec env_spec;
  std::map<std::string, double> pass_rates;  // evaluator id -> pass rate
  DifficultyBand difficulty_band = DifficultyBand::impossible;

  std::string id() const { return spec_hash(env_spec); }
  double mean_pass_rate() const;
};

struct Evaluator {
  std::string id;
  ToyPolicy policy;
  SamplerConfig sampler;
};

struct CuratorConfig {
  double band_low = 0.05;
  double band_high = 0.8;
  int turn_length = 1;
};

// Band from a mean pass rate: <= low impossible, >= high trivial, otherwise
// moderate. Noisy environments are unreliable regardless of pass rate.
DifficultyBand classify(const EnvSpec& spec, double mean_pass_rate, const CuratorConfig& cfg);

// Runs n rollouts per evaluator. Evaluators must be laid out for a single task
// slot (feature layout {1, K, turn_length}).
InstanceRecord estimate_difficulty(const EnvSpec& spec, std::span<const Evaluator> evaluators, int n,
                                   std::uint64_t seed, const CuratorConfig& cfg = {});

// Up to target_count moderate records, hardest first (mean pass rate
// ascending, then id).
std::vector<InstanceRecord> select_training_set(std::span<const InstanceRecord> records,
                                                std::size_t target_count);

// Manifest lines: spec hash, band, per-evaluator pass rates, spec.
std::string manifest_line(const InstanceRecord& r);
InstanceRecord record_from_manifest_line(std::string_view line);
void write_manifest(const std::string& path, std::span<const InstanceRecord> records);
std::vector<InstanceRecord> read_manifest(const std::string& path);

}  // namespace agentrl
