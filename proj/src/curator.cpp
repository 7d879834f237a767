#include "agentrl/curator.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "agentrl/resampler.hpp"
#include "agentrl/rng.hpp"

namespace agentrl {

using nlohmann::json;

std::string_view to_string(DifficultyBand b) {
  switch (b) {
    case DifficultyBand::trivial: return "trivial";
    case DifficultyBand::moderate: return "moderate";
    case DifficultyBand::impossible: return "impossible";
    case DifficultyBand::unreliable: return "unreliable";
  }
  return "impossible";
}

DifficultyBand band_from_string(std::string_view s) {
  if (s == "trivial") return DifficultyBand::trivial;
  if (s == "moderate") return DifficultyBand::moderate;
  if (s == "impossible") return DifficultyBand::impossible;
  if (s == "unreliable") return DifficultyBand::unreliable;
  throw std::invalid_argument("unknown difficulty band: " + std::string(s));
}

double InstanceRecord::mean_pass_rate() const {
  if (pass_rates.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [id, r] : pass_rates) s += r;
  return s / static_cast<double>(pass_rates.size());
}

DifficultyBand classify(const EnvSpec& spec, double mean_pass_rate, const CuratorConfig& cfg) {
  if (spec.noise.kind != NoiseKind::none) return DifficultyBand::unreliable;
  if (mean_pass_rate <= cfg.band_low) return DifficultyBand::impossible;
  if (mean_pass_rate >= cfg.band_high) return DifficultyBand::trivial;
  return DifficultyBand::moderate;
}

InstanceRecord estimate_difficulty(const EnvSpec& spec, std::span<const Evaluator> evaluators, int n,
                                   std::uint64_t seed, const CuratorConfig& cfg) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (evaluators.empty()) throw std::invalid_argument("at least one evaluator required");
  if (!(cfg.band_low < cfg.band_high)) throw std::invalid_argument("band_low must be below band_high");
  validate(spec);
  const FeatureLayout layout{1, effective_max_turns(spec), cfg.turn_length};
  InstanceRecord rec;
  rec.env_spec = spec;
  for (std::size_t e = 0; e < evaluators.size(); ++e) {
    const Evaluator& ev = evaluators[e];
    if (ev.policy.feature_dim() != layout.dim() ||
        ev.policy.vocab_size() != static_cast<std::size_t>(spec.vocab_size))
      throw std::invalid_argument("evaluator " + ev.id + " does not match the environment layout");
    SamplerVariant sampler(ev.policy, ev.sampler);
    RolloutContext ctx{ev.policy, sampler, layout, cfg.turn_length};
    SimEnv env(spec);
    int passed = 0;
    for (int i = 0; i < n; ++i) {
      Trajectory t = rollout(env, ctx, 0, rng::derive({seed, e, static_cast<std::uint64_t>(i)}));
      passed += t.final_reward > 0.0 ? 1 : 0;
    }
    rec.pass_rates[ev.id] = static_cast<double>(passed) / n;
  }
  rec.difficulty_band = classify(spec, rec.mean_pass_rate(), cfg);
  return rec;
}

std::vector<InstanceRecord> select_training_set(std::span<const InstanceRecord> records,
                                                std::size_t target_count) {
  std::vector<InstanceRecord> out;
  for (const InstanceRecord& r : records)
    if (r.difficulty_band == DifficultyBand::moderate) out.push_back(r);
  std::stable_sort(out.begin(), out.end(), [](const InstanceRecord& a, const InstanceRecord& b) {
    const double ma = a.mean_pass_rate(), mb = b.mean_pass_rate();
    if (ma != mb) return ma < mb;
    return a.id() < b.id();
  });
  if (out.size() > target_count) out.resize(target_count);
  return out;
}

std::string manifest_line(const InstanceRecord& r) {
  return json{{"spec_hash", r.id()},
              {"band", std::string(to_string(r.difficulty_band))},
              {"pass_rates", r.pass_rates},
              {"spec", to_json(r.env_spec)}}
      .dump();
}

InstanceRecord record_from_manifest_line(std::string_view line) {
  json j = json::parse(line);
  InstanceRecord r;
  r.env_spec = env_spec_from_json(j.at("spec"));
  r.pass_rates = j.at("pass_rates").get<std::map<std::string, double>>();
  r.difficulty_band = band_from_string(j.at("band").get<std::string>());
  if (j.contains("spec_hash") && j.at("spec_hash").get<std::string>() != r.id())
    throw std::invalid_argument("manifest spec_hash does not match its spec");
  return r;
}

void write_manifest(const std::string& path, std::span<const InstanceRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const InstanceRecord& r : records) out << manifest_line(r) << '\n';
}

std::vector<InstanceRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<InstanceRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(record_from_manifest_line(line));
  return out;
}

}  // namespace agentrl
