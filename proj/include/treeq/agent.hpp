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

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "treeq/env.hpp"

namespace treeq::agent {

/// The four parts of a composite action, in generation order.
enum class Part { Plan, Thought, Env, Explanation };

std::string to_string(Part p);

/// One agent step: optional plan (first step only), thought, environment
/// command and explanation, with the log-probability of each part under the
/// policy that generated it.
struct CompositeAction {
  std::optional<std::string> plan;
  std::string thought;
  env::EnvCommand env_cmd;
  std::string explanation;
  /// Keyed by to_string(Part). Absent parts have no entry.
  std::map<std::string, double> part_logps;

  /// Sum of recorded part log-probabilities, summed in generation order.
  double joint_logp() const;

  bool operator==(const CompositeAction&) const = default;
};

/// Compact agent state: the actions taken so far plus the current
/// observation. Past observations are deliberately not kept.
struct AgentHistory {
  env::TaskSpec task;
  std::vector<CompositeAction> past_actions;
  env::Observation current_obs;

  int step_index() const { return static_cast<int>(past_actions.size()) + 1; }
  bool operator==(const AgentHistory&) const = default;
};

AgentHistory initial_history(const env::TaskSpec& task, const env::Observation& first_obs);
AgentHistory advance(const AgentHistory& h, const CompositeAction& a, const env::Observation& next_obs);

struct TrajectoryStep {
  AgentHistory history;
  CompositeAction action;
  int reward = 0;
};

struct Trajectory {
  env::TaskSpec task;
  /// Commands executed from reset before the first recorded step (empty for
  /// trajectories that start at reset).
  std::vector<env::EnvCommand> start_commands;
  std::vector<TrajectoryStep> steps;
  int terminal_reward = 0;
  int total_steps = 0;
  bool terminal = false;
  /// Version of the policy whose likelihoods are stored in the actions.
  int policy_version = 0;
};

/// Binary outcome of a terminal trajectory, recomputed by replaying its
/// commands. Throws EnvError for non-terminal trajectories.
int judge_trajectory(const Trajectory& traj);

enum class Decode { Sample, Greedy };

/// Anything that proposes composite actions for a history.
class Policy {
 public:
  virtual ~Policy() = default;

  /// K proposals with their part log-probabilities recorded.
  virtual std::vector<CompositeAction> propose(const AgentHistory& h, int k, std::uint64_t seed) const = 0;

  /// A single action for rollouts and evaluation.
  virtual CompositeAction act(const AgentHistory& h, Decode decode, std::uint64_t seed) const = 0;

  virtual double logp(const AgentHistory& h, const CompositeAction& a) const = 0;
};

std::vector<CompositeAction> propose_actions(const Policy& policy, const AgentHistory& h, int k,
                                             std::uint64_t seed);
double action_logp(const Policy& policy, const AgentHistory& h, const CompositeAction& a);

/// Continues an episode from (state, h) until a terminal state or max_steps
/// actions. The returned trajectory records every history snapshot.
Trajectory rollout(const Policy& policy, const env::EnvState& state, const AgentHistory& h, int max_steps,
                   Decode decode, std::uint64_t seed);

/// Deterministic policy driven by a function of the history. Every part has
/// probability one, so all recorded log-probabilities are zero.
class ScriptedPolicy : public Policy {
 public:
  using Script = std::function<env::EnvCommand(const AgentHistory&)>;

  explicit ScriptedPolicy(Script script) : script_(std::move(script)) {}

  std::vector<CompositeAction> propose(const AgentHistory& h, int k, std::uint64_t seed) const override;
  CompositeAction act(const AgentHistory& h, Decode decode, std::uint64_t seed) const override;
  double logp(const AgentHistory& h, const CompositeAction& a) const override;

 private:
  CompositeAction make(const AgentHistory& h) const;
  Script script_;
};

/// Goal tokens used for matching: goal text minus connective words.
std::vector<std::string> goal_tokens(const env::TaskSpec& task);

/// Number of goal tokens present in a command's descriptive tokens.
int goal_overlap(const std::vector<std::string>& goal, const env::Observation& obs, const env::EnvCommand& cmd);

/// Descriptive tokens of a command: the target element's label and the
/// payload, as shown on the page.
std::vector<std::string> command_tokens(const env::Observation& obs, const env::EnvCommand& cmd);

/// Shopworld: search, paginate until an exact match is visible, buy it.
ScriptedPolicy shop_optimal_script();
/// Shopworld: buy the best-matching product on the first results page.
ScriptedPolicy shop_greedy_script();
/// Bookworld: fix the location if needed, then pick matching values.
ScriptedPolicy book_optimal_script();

}  // namespace treeq::agent
