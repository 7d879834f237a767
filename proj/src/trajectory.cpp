#include "agentrl/trajectory.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace agentrl {

using nlohmann::json;

std::string_view to_string(FilterReason r) {
  switch (r) {
    case FilterReason::none: return "none";
    case FilterReason::api_failure: return "api_failure";
    case FilterReason::nondeterministic_tool: return "nondeterministic_tool";
    case FilterReason::illegal_tool_repeat: return "illegal_tool_repeat";
  }
  return "none";
}

FilterReason filter_reason_from_string(std::string_view s) {
  if (s == "none") return FilterReason::none;
  if (s == "api_failure") return FilterReason::api_failure;
  if (s == "nondeterministic_tool") return FilterReason::nondeterministic_tool;
  if (s == "illegal_tool_repeat") return FilterReason::illegal_tool_repeat;
  throw MalformedInput("unknown filtered_reason: " + std::string(s));
}

void validate(const Trajectory& traj) {
  if (traj.turns.empty()) throw MalformedInput("trajectory has no turns");
  for (std::size_t k = 0; k < traj.turns.size(); ++k) {
    const Turn& turn = traj.turns[k];
    if (turn.tokens.empty())
      throw MalformedInput("turn " + std::to_string(k) + " has no tokens");
    if (!turn.observation.empty() && !turn.ends_with_tool_call)
      throw MalformedInput("turn " + std::to_string(k) + " has an observation but no tool call");
    for (const Token& t : turn.tokens) {
      for (double lp : {t.trainer_logprob, t.trainer_old_logprob, t.sampler_logprob}) {
        if (!std::isfinite(lp) || lp > 0.0)
          throw MalformedInput("log-probabilities must be finite and <= 0");
      }
      if (t.id < 0) throw MalformedInput("negative token id");
    }
  }
  if (traj.prefix_chunks < 0) throw MalformedInput("negative prefix_chunks");
}

std::vector<Token> flatten_tokens(const Trajectory& traj) {
  std::vector<Token> out;
  out.reserve(token_count(traj));
  for (const Turn& turn : traj.turns) out.insert(out.end(), turn.tokens.begin(), turn.tokens.end());
  return out;
}

std::size_t token_count(const Trajectory& traj) {
  std::size_t n = 0;
  for (const Turn& turn : traj.turns) n += turn.tokens.size();
  return n;
}

std::vector<Chunk> segment_into_chunks(const Trajectory& traj) {
  if (traj.turns.empty()) throw MalformedInput("cannot segment an empty trajectory");
  std::vector<Chunk> chunks;
  std::size_t cursor = 0;
  std::size_t chunk_begin = 0;
  std::size_t chunk_first_turn = 0;
  for (std::size_t k = 0; k < traj.turns.size(); ++k) {
    cursor += traj.turns[k].tokens.size();
    if (traj.turns[k].ends_with_tool_call) {
      chunks.push_back(Chunk{static_cast<int>(chunks.size()) + 1, {chunk_begin, cursor}, false,
                             chunk_first_turn, k});
      chunk_begin = cursor;
      chunk_first_turn = k + 1;
    }
  }
  if (chunk_first_turn < traj.turns.size()) {
    chunks.push_back(Chunk{static_cast<int>(chunks.size()) + 1, {chunk_begin, cursor}, false,
                           chunk_first_turn, traj.turns.size() - 1});
  }
  chunks.back().terminal = true;
  return chunks;
}

std::vector<TokenPosition> token_positions(const Trajectory& traj) {
  std::vector<TokenPosition> out;
  out.reserve(token_count(traj));
  for (std::size_t k = 0; k < traj.turns.size(); ++k)
    for (std::size_t i = 0; i < traj.turns[k].tokens.size(); ++i) out.push_back({k, i});
  return out;
}

std::size_t first_action_token(const Trajectory& traj, std::span<const Chunk> chunks) {
  if (traj.prefix_chunks <= 0) return 0;
  if (static_cast<std::size_t>(traj.prefix_chunks) > chunks.size())
    throw MalformedInput("prefix_chunks exceeds chunk count");
  return chunks[traj.prefix_chunks - 1].token_span.end;
}

namespace {

json turn_to_json(const Turn& turn) {
  json ids = json::array(), tr = json::array(), old = json::array(), smp = json::array();
  for (const Token& t : turn.tokens) {
    ids.push_back(t.id);
    tr.push_back(t.trainer_logprob);
    old.push_back(t.trainer_old_logprob);
    smp.push_back(t.sampler_logprob);
  }
  return json{{"token_ids", ids},
              {"trainer_logprob", tr},
              {"trainer_old_logprob", old},
              {"sampler_logprob", smp},
              {"ends_with_tool_call", turn.ends_with_tool_call},
              {"error_flag", turn.error_flag},
              {"relevance_flag", turn.relevance_flag},
              {"observation", turn.observation}};
}

Turn turn_from_json(const json& j) {
  Turn turn;
  const auto& ids = j.at("token_ids");
  const auto& tr = j.at("trainer_logprob");
  const auto& old = j.at("trainer_old_logprob");
  const auto& smp = j.at("sampler_logprob");
  if (tr.size() != ids.size() || old.size() != ids.size() || smp.size() != ids.size())
    throw MalformedInput("token field lengths differ");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    turn.tokens.push_back(Token{ids[i].get<int>(), tr[i].get<double>(), old[i].get<double>(),
                                smp[i].get<double>()});
  }
  turn.ends_with_tool_call = j.at("ends_with_tool_call").get<bool>();
  turn.error_flag = j.at("error_flag").get<bool>();
  turn.relevance_flag = j.value("relevance_flag", true);
  turn.observation = j.value("observation", std::string{});
  return turn;
}

}  // namespace

std::string to_json_line(const Trajectory& traj) {
  json turns = json::array();
  for (const Turn& t : traj.turns) turns.push_back(turn_to_json(t));
  json j{{"turns", turns},
         {"final_reward", traj.final_reward},
         {"policy_version", traj.policy_version},
         {"filtered_reason", std::string(to_string(traj.filtered_reason))},
         {"task_slot", traj.task_slot},
         {"prefix_chunks", traj.prefix_chunks}};
  return j.dump();
}

Trajectory trajectory_from_json_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw MalformedInput(std::string("trajectory record is not valid JSON: ") + e.what());
  }
  try {
    Trajectory traj;
    for (const auto& t : j.at("turns")) traj.turns.push_back(turn_from_json(t));
    traj.final_reward = j.at("final_reward").get<double>();
    traj.policy_version = j.at("policy_version").get<int>();
    traj.filtered_reason = filter_reason_from_string(j.value("filtered_reason", std::string("none")));
    traj.task_slot = j.value("task_slot", 0);
    traj.prefix_chunks = j.value("prefix_chunks", 0);
    return traj;
  } catch (const json::exception& e) {
    throw MalformedInput(std::string("bad trajectory record: ") + e.what());
  }
}

void write_trajectories(const std::string& path, std::span<const Trajectory> trajs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const Trajectory& t : trajs) out << to_json_line(t) << '\n';
}

std::vector<Trajectory> read_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(trajectory_from_json_line(line));
  }
  return out;
}

}  // namespace agentrl
