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

#include "treeq/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace treeq::agent {

std::string to_string(Part p) {
  switch (p) {
    case Part::Plan: return "plan";
    case Part::Thought: return "thought";
    case Part::Env: return "env";
    case Part::Explanation: return "explanation";
  }
  return "env";
}

double CompositeAction::joint_logp() const {
  double total = 0.0;
  for (Part p : {Part::Plan, Part::Thought, Part::Env, Part::Explanation}) {
    if (auto it = part_logps.find(to_string(p)); it != part_logps.end()) total += it->second;
  }
  return total;
}

AgentHistory initial_history(const env::TaskSpec& task, const env::Observation& first_obs) {
  return AgentHistory{task, {}, first_obs};
}

AgentHistory advance(const AgentHistory& h, const CompositeAction& a, const env::Observation& next_obs) {
  AgentHistory next{h.task, h.past_actions, next_obs};
  next.past_actions.push_back(a);
  return next;
}

int judge_trajectory(const Trajectory& traj) {
  if (!traj.terminal) throw EnvError("cannot judge non-terminal trajectory of " + traj.task.task_id);
  std::vector<env::EnvCommand> cmds = traj.start_commands;
  for (const auto& s : traj.steps) cmds.push_back(s.action.env_cmd);
  return env::judge_commands(traj.task, cmds);
}

std::vector<CompositeAction> propose_actions(const Policy& policy, const AgentHistory& h, int k,
                                             std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("propose_actions: K must be >= 1");
  return policy.propose(h, k, seed);
}

double action_logp(const Policy& policy, const AgentHistory& h, const CompositeAction& a) {
  return policy.logp(h, a);
}

Trajectory rollout(const Policy& policy, const env::EnvState& state, const AgentHistory& h, int max_steps,
                   Decode decode, std::uint64_t seed) {
  Trajectory traj;
  traj.task = h.task;
  env::EnvState s = state;
  AgentHistory hist = h;
  for (int t = 0; t < max_steps && !s.terminal; ++t) {
    CompositeAction a = policy.act(hist, decode, derive_seed(seed, static_cast<std::uint64_t>(t)));
    auto r = env::env_step(s, a.env_cmd);
    AgentHistory next = advance(hist, a, r.observation);
    traj.steps.push_back({std::move(hist), std::move(a), r.reward});
    hist = std::move(next);
    s = std::move(r.state);
  }
  traj.total_steps = static_cast<int>(traj.steps.size());
  traj.terminal = s.terminal;
  traj.terminal_reward = traj.steps.empty() ? 0 : traj.steps.back().reward;
  return traj;
}

// ---------------------------------------------------------------- scripted

CompositeAction ScriptedPolicy::make(const AgentHistory& h) const {
  CompositeAction a;
  if (h.step_index() == 1) {
    a.plan = "scripted";
    a.part_logps["plan"] = 0.0;
  }
  a.thought = "scripted";
  a.env_cmd = script_(h);
  a.explanation = "scripted";
  a.part_logps["thought"] = 0.0;
  a.part_logps["env"] = 0.0;
  a.part_logps["explanation"] = 0.0;
  return a;
}

std::vector<CompositeAction> ScriptedPolicy::propose(const AgentHistory& h, int k, std::uint64_t) const {
  return std::vector<CompositeAction>(static_cast<std::size_t>(k), make(h));
}

CompositeAction ScriptedPolicy::act(const AgentHistory& h, Decode, std::uint64_t) const { return make(h); }

double ScriptedPolicy::logp(const AgentHistory& h, const CompositeAction& a) const {
  CompositeAction expected = make(h);
  expected.part_logps = a.part_logps;
  return expected == a ? 0.0 : -std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------- matching

std::vector<std::string> goal_tokens(const env::TaskSpec& task) {
  static const std::set<std::string> kConnectives = {"find", "book", "in", "on", "at", "for", "name", "phone", "email"};
  std::vector<std::string> out;
  for (auto& tok : split_tokens(task.goal_text)) {
    if (!kConnectives.contains(tok)) out.push_back(std::move(tok));
  }
  return out;
}

std::vector<std::string> command_tokens(const env::Observation& obs, const env::EnvCommand& cmd) {
  std::string element_id;
  switch (cmd.verb) {
    case env::Verb::Next: element_id = "next"; break;
    case env::Verb::Prev: element_id = "prev"; break;
    case env::Verb::Back: element_id = "back"; break;
    case env::Verb::Buy: element_id = "buy"; break;
    case env::Verb::Search: element_id = "search"; break;
    default: element_id = cmd.target.value_or("");
  }
  std::vector<std::string> out;
  for (const auto& e : obs.elements) {
    if (e.element_id == element_id) {
      out = split_tokens(e.label);
      break;
    }
  }
  if (cmd.payload) {
    for (auto& tok : split_tokens(*cmd.payload)) out.push_back(std::move(tok));
  }
  return out;
}

int goal_overlap(const std::vector<std::string>& goal, const env::Observation& obs, const env::EnvCommand& cmd) {
  const auto toks = command_tokens(obs, cmd);
  int n = 0;
  for (const auto& g : goal) {
    if (std::find(toks.begin(), toks.end(), g) != toks.end()) ++n;
  }
  return n;
}

namespace {

std::optional<env::EnvCommand> best_match(const AgentHistory& h, bool skip_back) {
  const auto goal = goal_tokens(h.task);
  const auto cands = env::candidate_commands(h.current_obs);
  std::optional<env::EnvCommand> best;
  int best_score = -1;
  for (const auto& c : cands) {
    if (skip_back && c.verb == env::Verb::Back) continue;
    const int score = goal_overlap(goal, h.current_obs, c);
    if (score > best_score) {
      best_score = score;
      best = c;
    }
  }
  return best;
}

std::optional<env::EnvCommand> find_verb(const AgentHistory& h, env::Verb v) {
  for (const auto& c : env::candidate_commands(h.current_obs)) {
    if (c.verb == v) return c;
  }
  return std::nullopt;
}

bool page_is(const AgentHistory& h, const std::string& prefix) {
  return h.current_obs.page_id.rfind(prefix, 0) == 0;
}

}  // namespace

ScriptedPolicy shop_optimal_script() {
  return ScriptedPolicy([](const AgentHistory& h) -> env::EnvCommand {
    const auto goal = goal_tokens(h.task);
    const int full = static_cast<int>(goal.size());
    if (page_is(h, "results-")) {
      for (const auto& c : env::candidate_commands(h.current_obs)) {
        if (c.verb == env::Verb::Click && goal_overlap(goal, h.current_obs, c) == full) return c;
      }
      if (auto next = find_verb(h, env::Verb::Next)) return *next;
      return {env::Verb::Back, std::nullopt, std::nullopt};
    }
    if (page_is(h, "item-")) {
      auto buy = env::EnvCommand{env::Verb::Buy, std::nullopt, std::nullopt};
      if (goal_overlap(goal, h.current_obs, buy) == full) return buy;
      return {env::Verb::Back, std::nullopt, std::nullopt};
    }
    return *best_match(h, true);
  });
}

ScriptedPolicy shop_greedy_script() {
  return ScriptedPolicy([](const AgentHistory& h) -> env::EnvCommand {
    if (page_is(h, "results-")) {
      const auto goal = goal_tokens(h.task);
      std::optional<env::EnvCommand> best;
      int best_score = -1;
      for (const auto& c : env::candidate_commands(h.current_obs)) {
        if (c.verb != env::Verb::Click) continue;
        const int score = goal_overlap(goal, h.current_obs, c);
        if (score > best_score) {
          best_score = score;
          best = c;
        }
      }
      if (best) return *best;
    }
    if (page_is(h, "item-")) return {env::Verb::Buy, std::nullopt, std::nullopt};
    return *best_match(h, true);
  });
}

ScriptedPolicy book_optimal_script() {
  return ScriptedPolicy([](const AgentHistory& h) -> env::EnvCommand {
    if (h.current_obs.page_id == "landing") {
      const auto& city = h.task.target_attributes.at("city");
      bool located = false;
      for (const auto& e : h.current_obs.elements) {
        if (e.element_id == "change-location") located = e.label == "change location from-" + city;
      }
      if (!located) return {env::Verb::Click, std::string("change-location"), std::nullopt};
    }
    return *best_match(h, true);
  });
}

}  // namespace treeq::agent
