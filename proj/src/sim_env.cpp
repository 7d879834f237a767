#include "agentrl/sim_env.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>

namespace agentrl {

using nlohmann::json;

void validate(const EnvSpec& spec) {
  if (spec.chunk_count < 1) throw EnvError("chunk_count must be >= 1");
  if (spec.vocab_size < 2) throw EnvError("vocab_size must be >= 2");
  if (spec.max_turns != 0 && spec.max_turns < spec.chunk_count)
    throw EnvError("max_turns must be >= chunk_count");
  if (spec.illegal_repeat_limit < 0) throw EnvError("illegal_repeat_limit must be >= 0");
  if (spec.noise.prob < 0.0 || spec.noise.prob > 1.0) throw EnvError("noise probability outside [0, 1]");
  std::set<int> seen;
  for (const Fork& f : spec.forks) {
    if (f.chunk < 1 || f.chunk > spec.chunk_count)
      throw EnvError("fork at chunk " + std::to_string(f.chunk) + " outside 1.." +
                     std::to_string(spec.chunk_count));
    if (!seen.insert(f.chunk).second) throw EnvError("duplicate fork at chunk " + std::to_string(f.chunk));
    std::set<int> cs(f.correct.begin(), f.correct.end());
    if (cs.empty()) throw EnvError("fork correct set is empty");
    if (cs.size() != f.correct.size()) throw EnvError("fork correct set has duplicates");
    if (static_cast<int>(cs.size()) >= spec.vocab_size)
      throw EnvError("fork correct set must be a proper subset of the vocabulary");
    if (*cs.begin() < 0 || *cs.rbegin() >= spec.vocab_size)
      throw EnvError("fork correct action outside the vocabulary");
  }
}

int effective_max_turns(const EnvSpec& spec) {
  return spec.max_turns == 0 ? spec.chunk_count : spec.max_turns;
}

const Fork* find_fork(const EnvSpec& spec, int chunk) {
  for (const Fork& f : spec.forks)
    if (f.chunk == chunk) return &f;
  return nullptr;
}

double random_policy_success(const EnvSpec& spec) {
  double p = 1.0;
  for (const Fork& f : spec.forks)
    p *= static_cast<double>(f.correct.size()) / static_cast<double>(spec.vocab_size);
  return p;
}

namespace {

std::string_view noise_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::api_failure: return "api_failure";
    case NoiseKind::nondeterministic: return "nondeterministic";
  }
  return "none";
}

NoiseKind noise_from_name(const std::string& s) {
  if (s == "none") return NoiseKind::none;
  if (s == "api_failure") return NoiseKind::api_failure;
  if (s == "nondeterministic") return NoiseKind::nondeterministic;
  throw EnvError("unknown noise mode: " + s);
}

}  // namespace

json to_json(const EnvSpec& spec) {
  json forks = json::array();
  std::vector<Fork> sorted = spec.forks;
  std::sort(sorted.begin(), sorted.end(), [](const Fork& a, const Fork& b) { return a.chunk < b.chunk; });
  for (const Fork& f : sorted) {
    std::vector<int> c = f.correct;
    std::sort(c.begin(), c.end());
    forks.push_back(json{{"chunk", f.chunk}, {"correct", c}});
  }
  return json{{"name", spec.name},
              {"chunk_count", spec.chunk_count},
              {"vocab_size", spec.vocab_size},
              {"forks", forks},
              {"noise", json{{"mode", std::string(noise_name(spec.noise.kind))}, {"prob", spec.noise.prob}}},
              {"max_turns", spec.max_turns},
              {"illegal_repeat_limit", spec.illegal_repeat_limit}};
}

EnvSpec env_spec_from_json(const json& j) {
  try {
    EnvSpec s;
    s.name = j.value("name", std::string{});
    s.chunk_count = j.at("chunk_count").get<int>();
    s.vocab_size = j.at("vocab_size").get<int>();
    for (const auto& f : j.value("forks", json::array()))
      s.forks.push_back(Fork{f.at("chunk").get<int>(), f.at("correct").get<std::vector<int>>()});
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      s.noise.kind = noise_from_name(n.value("mode", std::string("none")));
      s.noise.prob = n.value("prob", 0.0);
    }
    s.max_turns = j.value("max_turns", 0);
    s.illegal_repeat_limit = j.value("illegal_repeat_limit", 0);
    return s;
  } catch (const json::exception& e) {
    throw EnvError(std::string("bad environment spec: ") + e.what());
  }
}

std::string spec_hash(const EnvSpec& spec) {
  json j = to_json(spec);
  j.erase("name");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SimEnv::SimEnv(EnvSpec spec, std::uint64_t instance_id) : spec_(std::move(spec)) {
  validate(spec_);
  state_.instance_id = instance_id;
  state_.determinism_flag = spec_.noise.kind != NoiseKind::nondeterministic;
}

std::string SimEnv::reset(std::uint64_t seed) {
  state_.turn_index = 0;
  state_.fork_record.clear();
  state_.terminated = false;
  noise_ = rng::Stream(rng::derive({seed, 0x5eedULL}));
  last_action_ = -1;
  repeat_run_ = 0;
  repeat_violation_ = false;
  return "start;turns=" + std::to_string(spec_.chunk_count);
}

StepResult SimEnv::step(std::span<const int> action_tokens) {
  if (state_.terminated) throw EnvError("step on a terminated episode");
  if (action_tokens.empty()) throw EnvError("step requires at least one token");
  for (int a : action_tokens)
    if (a < 0 || a >= spec_.vocab_size) throw EnvError("action token outside the vocabulary");

  const int turn = ++state_.turn_index;
  const int action = action_tokens.back();
  if (const Fork* f = find_fork(spec_, turn)) {
    state_.fork_record[turn] =
        std::find(f->correct.begin(), f->correct.end(), action) != f->correct.end();
  }

  StepResult r;
  const bool tool_turn = turn < spec_.chunk_count && turn < effective_max_turns(spec_);
  r.terminal = !tool_turn;

  if (tool_turn) {
    repeat_run_ = action == last_action_ ? repeat_run_ + 1 : 1;
    last_action_ = action;
    if (spec_.illegal_repeat_limit > 0 && repeat_run_ > spec_.illegal_repeat_limit)
      repeat_violation_ = true;

    r.observation = "turn=" + std::to_string(turn) + ";action=" + std::to_string(action);
    switch (spec_.noise.kind) {
      case NoiseKind::none: break;
      case NoiseKind::api_failure:
        if (noise_.bernoulli(spec_.noise.prob)) {
          r.error_flag = true;
          r.fault = FilterReason::api_failure;
          r.observation += ";error=api";
        }
        break;
      case NoiseKind::nondeterministic:
        if (noise_.bernoulli(spec_.noise.prob)) {
          r.fault = FilterReason::nondeterministic_tool;
          r.observation += ";nonce=" + std::to_string(noise_.below(1000000));
        }
        break;
    }
    if (repeat_violation_ && r.fault == FilterReason::none) r.fault = FilterReason::illegal_tool_repeat;
  }

  if (r.terminal) {
    state_.terminated = true;
    bool all = true;
    for (const Fork& f : spec_.forks) {
      auto it = state_.fork_record.find(f.chunk);
      all = all && it != state_.fork_record.end() && it->second;
    }
    r.reward = all ? 1.0 : 0.0;
  }
  return r;
}

std::uint64_t EnvRegistry::make(const EnvSpec& spec) {
  std::lock_guard lock(mu_);
  const std::uint64_t id = next_id_;
  auto slot = std::make_shared<Slot>(SimEnv(spec, id));
  ++next_id_;
  slots_.emplace(id, std::move(slot));
  return id;
}

std::shared_ptr<EnvRegistry::Slot> EnvRegistry::find(std::uint64_t id) const {
  std::lock_guard lock(mu_);
  auto it = slots_.find(id);
  if (it == slots_.end()) throw EnvError("unknown environment instance " + std::to_string(id));
  return it->second;
}

std::string EnvRegistry::reset(std::uint64_t id, std::uint64_t seed) {
  auto slot = find(id);
  std::lock_guard lock(slot->mu);
  return slot->env.reset(seed);
}

StepResult EnvRegistry::step(std::uint64_t id, std::span<const int> action_tokens) {
  auto slot = find(id);
  std::lock_guard lock(slot->mu);
  return slot->env.step(action_tokens);
}

void EnvRegistry::close(std::uint64_t id) {
  std::lock_guard lock(mu_);
  if (slots_.erase(id) == 0) throw EnvError("unknown environment instance " + std::to_string(id));
}

EnvState EnvRegistry::state(std::uint64_t id) const {
  auto slot = find(id);
  std::lock_guard lock(slot->mu);
  return slot->env.state();
}

std::size_t EnvRegistry::open_count() const {
  std::lock_guard lock(mu_);
  return slots_.size();
}

json handle_request(EnvRegistry& registry, const json& request) {
  try {
    const std::string verb = request.at("verb").get<std::string>();
    const json payload = request.value("payload", json::object());
    if (verb == "make") {
      EnvSpec spec = env_spec_from_json(payload.contains("spec") ? payload.at("spec") : payload);
      return json{{"ok", true}, {"instance_id", registry.make(spec)}};
    }
    const auto id = request.at("instance_id").get<std::uint64_t>();
    if (verb == "reset") {
      return json{{"ok", true}, {"observation", registry.reset(id, payload.value("seed", std::uint64_t{0}))}};
    }
    if (verb == "step") {
      auto tokens = payload.at("tokens").get<std::vector<int>>();
      StepResult r = registry.step(id, tokens);
      return json{{"ok", true},
                  {"observation", r.observation},
                  {"terminal", r.terminal},
                  {"reward", r.reward},
                  {"error_flag", r.error_flag},
                  {"fault", std::string(to_string(r.fault))}};
    }
    if (verb == "close") {
      registry.close(id);
      return json{{"ok", true}};
    }
    return json{{"ok", false}, {"error", "unknown verb: " + verb}};
  } catch (const std::exception& e) {
    return json{{"ok", false}, {"error", e.what()}};
  }
}

std::size_t serve(EnvRegistry& registry, std::istream& in, std::ostream& out) {
  std::size_t handled = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json response;
    try {
      response = handle_request(registry, json::parse(line));
    } catch (const json::parse_error& e) {
      response = json{{"ok", false}, {"error", std::string("malformed request: ") + e.what()}};
    }
    out << response.dump() << '\n' << std::flush;
    ++handled;
  }
  return handled;
}

}  // namespace agentrl
