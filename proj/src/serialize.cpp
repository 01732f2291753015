// Copyright 2026 The TreeQ Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "treeq/serialize.hpp"

#include <fstream>
#include <sstream>

namespace treeq {

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw DataError("malformed JSON in " + what + ": " + e.what());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json_file(const std::string& path) { return parse_json(read_text_file(path), path); }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("write failed for " + path);
}

}  // namespace treeq

namespace treeq::env {

void to_json(Json& j, const InteractiveElement& e) {
  j = Json{{"element_id", e.element_id}, {"role", to_string(e.role)}, {"label", e.label}};
  if (!e.suggestions.empty()) j["suggestions"] = e.suggestions;
}

void from_json(const Json& j, InteractiveElement& e) {
  e.element_id = j.at("element_id").get<std::string>();
  e.role = role_from_string(j.at("role").get<std::string>());
  e.label = j.at("label").get<std::string>();
  e.suggestions = j.value("suggestions", std::vector<std::string>{});
}

void to_json(Json& j, const Observation& o) {
  j = Json{{"kind", o.kind == ObsKind::UserQuery ? "user_query" : "page"},
           {"text", o.text},
           {"page_id", o.page_id},
           {"elements", o.elements},
           {"task_id", o.task_id}};
}

void from_json(const Json& j, Observation& o) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "user_query" && kind != "page") throw DataError("unknown observation kind '" + kind + "'");
  o.kind = kind == "user_query" ? ObsKind::UserQuery : ObsKind::Page;
  o.text = j.at("text").get<std::string>();
  o.page_id = j.at("page_id").get<std::string>();
  o.elements = j.at("elements").get<std::vector<InteractiveElement>>();
  o.task_id = j.at("task_id").get<std::string>();
}

void to_json(Json& j, const EnvCommand& c) { j = canonical(c); }

void from_json(const Json& j, EnvCommand& c) { c = parse_command(j.get<std::string>()); }

void to_json(Json& j, const TaskLayout& l) {
  j = Json{{"seed", l.seed},           {"horizon", l.horizon},         {"page_size", l.page_size},
           {"catalog_size", l.catalog_size}, {"result_count", l.result_count}, {"target_rank", l.target_rank},
           {"start_stage", l.start_stage}};
}

void from_json(const Json& j, TaskLayout& l) {
  l.seed = j.at("seed").get<std::uint64_t>();
  l.horizon = j.at("horizon").get<int>();
  l.page_size = j.at("page_size").get<int>();
  l.catalog_size = j.at("catalog_size").get<int>();
  l.result_count = j.at("result_count").get<int>();
  l.target_rank = j.at("target_rank").get<int>();
  l.start_stage = j.at("start_stage").get<int>();
}

void to_json(Json& j, const TaskSpec& t) {
  j = Json{{"task_id", t.task_id},
           {"world", to_string(t.world)},
           {"goal_text", t.goal_text},
           {"target_attributes", t.target_attributes},
           {"layout", t.layout}};
}

void from_json(const Json& j, TaskSpec& t) {
  t.task_id = j.at("task_id").get<std::string>();
  t.world = world_from_string(j.at("world").get<std::string>());
  t.goal_text = j.at("goal_text").get<std::string>();
  t.target_attributes = j.at("target_attributes").get<std::map<std::string, std::string>>();
  t.layout = j.at("layout").get<TaskLayout>();
}

}  // namespace treeq::env

namespace treeq::agent {

void to_json(Json& j, const CompositeAction& a) {
  j = Json{{"thought", a.thought}, {"env_cmd", a.env_cmd}, {"explanation", a.explanation}, {"part_logps", a.part_logps}};
  if (a.plan) j["plan"] = *a.plan;
}

void from_json(const Json& j, CompositeAction& a) {
  a.plan = j.contains("plan") ? std::optional<std::string>(j.at("plan").get<std::string>()) : std::nullopt;
  a.thought = j.at("thought").get<std::string>();
  a.env_cmd = j.at("env_cmd").get<env::EnvCommand>();
  a.explanation = j.at("explanation").get<std::string>();
  a.part_logps = j.at("part_logps").get<std::map<std::string, double>>();
}

void to_json(Json& j, const AgentHistory& h) {
  j = Json{{"task", h.task}, {"past_actions", h.past_actions}, {"current_obs", h.current_obs},
           {"step_index", h.step_index()}};
}

void from_json(const Json& j, AgentHistory& h) {
  h.task = j.at("task").get<env::TaskSpec>();
  h.past_actions = j.at("past_actions").get<std::vector<CompositeAction>>();
  h.current_obs = j.at("current_obs").get<env::Observation>();
  if (j.contains("step_index") && j.at("step_index").get<int>() != h.step_index()) {
    throw DataError("history step_index disagrees with its action count");
  }
}

void to_json(Json& j, const Trajectory& t) {
  Json steps = Json::array();
  for (const auto& s : t.steps) {
    steps.push_back(Json{{"observation", s.history.current_obs}, {"action", s.action}, {"reward", s.reward}});
  }
  j = Json{{"task", t.task},
           {"start_commands", t.start_commands},
           {"prefix_actions", t.steps.empty() ? std::vector<CompositeAction>{} : t.steps.front().history.past_actions},
           {"steps", std::move(steps)},
           {"terminal_reward", t.terminal_reward},
           {"total_steps", t.total_steps},
           {"terminal", t.terminal},
           {"policy_version", t.policy_version}};
}

void from_json(const Json& j, Trajectory& t) {
  t.task = j.at("task").get<env::TaskSpec>();
  t.start_commands = j.at("start_commands").get<std::vector<env::EnvCommand>>();
  t.terminal_reward = j.at("terminal_reward").get<int>();
  t.total_steps = j.at("total_steps").get<int>();
  t.terminal = j.at("terminal").get<bool>();
  t.policy_version = j.at("policy_version").get<int>();
  t.steps.clear();
  AgentHistory h{t.task, j.at("prefix_actions").get<std::vector<CompositeAction>>(), {}};
  for (const auto& s : j.at("steps")) {
    h.current_obs = s.at("observation").get<env::Observation>();
    TrajectoryStep step{h, s.at("action").get<CompositeAction>(), s.at("reward").get<int>()};
    h.past_actions.push_back(step.action);
    t.steps.push_back(std::move(step));
  }
  if (t.total_steps != static_cast<int>(t.steps.size())) throw DataError("trajectory total_steps mismatch");
}

void to_json(Json& j, const TemplateVocab& v) {
  j = Json{{"plans", v.plans}, {"thoughts", v.thoughts}, {"explanations", v.explanations}};
}

void from_json(const Json& j, TemplateVocab& v) {
  v.plans = j.at("plans").get<std::vector<std::string>>();
  v.thoughts = j.at("thoughts").get<std::vector<std::string>>();
  v.explanations = j.at("explanations").get<std::vector<std::string>>();
}

void to_json(Json& j, const PolicyParams& p) {
  Json w = Json::object();
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    if (p.weights[i] != 0.0) w[std::to_string(i)] = p.weights[i];
  }
  j = Json{{"dimension", p.dimension()}, {"weights", std::move(w)}, {"extractor", p.extractor},
           {"temperature", p.temperature}, {"vocab", p.vocab}, {"version", p.version}};
}

void from_json(const Json& j, PolicyParams& p) {
  const auto dim = j.at("dimension").get<std::size_t>();
  if (dim == 0) throw DataError("policy dimension must be positive");
  p.weights.assign(dim, 0.0);
  for (const auto& [k, v] : j.at("weights").items()) {
    const auto idx = std::stoull(k);
    if (idx >= dim) throw DataError("weight index " + k + " out of range");
    p.weights[idx] = v.get<double>();
  }
  p.extractor = j.at("extractor").get<std::string>();
  if (p.extractor != kHashedConjExtractor && p.extractor != kTabularExtractor) {
    throw DataError("unknown feature extractor '" + p.extractor + "'");
  }
  p.temperature = j.at("temperature").get<double>();
  p.vocab = j.at("vocab").get<TemplateVocab>();
  p.version = j.at("version").get<int>();
}

}  // namespace treeq::agent

namespace treeq::oracle {

void to_json(Json& j, const ExactSolution& s) {
  j = Json{{"task_id", s.task_id},
           {"depth_limit", s.depth_limit},
           {"q_star", s.q_star},
           {"optimal_action", s.optimal_action},
           {"min_steps", s.min_steps == kUnreachable ? Json(nullptr) : Json(s.min_steps)},
           {"success_value", s.success_value}};
}

void from_json(const Json& j, ExactSolution& s) {
  s.task_id = j.at("task_id").get<std::string>();
  s.depth_limit = j.at("depth_limit").get<int>();
  s.q_star = j.at("q_star").get<std::map<std::string, std::map<std::string, double>>>();
  s.optimal_action = j.at("optimal_action").get<std::map<std::string, std::string>>();
  s.min_steps = j.at("min_steps").is_null() ? kUnreachable : j.at("min_steps").get<int>();
  s.success_value = j.at("success_value").get<double>();
}

}  // namespace treeq::oracle
