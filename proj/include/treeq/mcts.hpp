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

// Monte-Carlo tree search over composite actions. Nodes hold the agent
// history and an environment snapshot; edges hold visit counts, summed
// terminal rewards and the critic's rank value. Backtracking restores
// snapshots, never replays side effects.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treeq/agent.hpp"
#include "treeq/critic.hpp"
#include "treeq/serialize.hpp"

namespace treeq::mcts {

struct SearchConfig {
  int k = 5;
  double c_exp = std::sqrt(2.0);
  int rollouts_per_task = 24;
  /// Nodes at this depth are rolled out but never expanded. 0 means the
  /// task horizon.
  int max_depth = 0;
  double alpha = 0.5;
  /// Use the mixed Q instead of the empirical Q inside UCB1.
  bool mixed_q_in_ucb = false;
  /// Sampling temperature for rollouts past the expanded node. 0 keeps the
  /// policy's own temperature.
  double rollout_temperature = 0.0;
  std::uint64_t seed = 0;
};

/// Throws ConfigError on K < 2, c_exp < 0, alpha outside [0,1], a
/// non-positive rollout count or a negative rollout temperature.
void validate(const SearchConfig& cfg);

struct ChildEdge {
  agent::CompositeAction action;
  /// Number of successful rollouts through this edge.
  int wins = 0;
  int n = 0;
  double qhat = 0.0;
  std::optional<int> child_node;

  /// Empirical mean return; zero before the first visit.
  double q_emp() const { return n == 0 ? 0.0 : static_cast<double>(wins) / static_cast<double>(n); }
};

struct TreeNode {
  int node_id = 0;
  int parent = -1;
  int depth = 0;
  agent::AgentHistory history;
  std::vector<ChildEdge> children;
  int visit_count = 0;
  bool expanded = false;
  bool terminal = false;
  int terminal_reward = 0;
  env::EnvState env_snapshot;
  /// Critic ranking of the children, best first (empty until expanded).
  std::vector<int> ranking;
};

struct SearchTree {
  std::string tree_id;
  env::TaskSpec task;
  std::vector<env::EnvCommand> start_commands;
  int policy_version = 0;
  std::vector<TreeNode> nodes;
};

double mixed_q(const ChildEdge& edge, double alpha);

/// UCB1 score Q + c * sqrt(ln N / (1 + n)).
double ucb_score(double q, int n, int parent_visits, double c_exp);

/// Argmax of ucb_score with ties to the lowest index.
int select_ucb(std::span<const double> q, std::span<const int> n, int parent_visits, double c_exp);

/// UCB1 over a node's children. Requires an expanded node with N(h) >= 1.
int select_child(const TreeNode& node, double c_exp, bool use_mixed_q = false, double alpha = 1.0);

/// The critic's top child. Requires that no child has been visited.
int first_selection(const TreeNode& node, const critic::CriticRanking& ranking);

/// Proposes K actions, ranks them and attaches K unvisited edges.
void expand(SearchTree& tree, int node_id, const agent::Policy& policy, critic::Critic& critic, int k,
            std::uint64_t seed);

/// Creates (or returns) the node reached through a child edge.
int ensure_child(SearchTree& tree, int node_id, int child_index);

struct PathStep {
  int node = 0;
  int child = 0;
};

/// Adds one rollout return to every edge on a root-to-leaf path.
void backpropagate(SearchTree& tree, std::span<const PathStep> path, int reward);

struct SearchResult {
  SearchTree tree;
  std::vector<agent::Trajectory> trajectories;
  /// Tree nodes each trajectory passed through, root first.
  std::vector<std::vector<int>> trajectory_nodes;
};

/// cfg.rollouts_per_task iterations of select, expand, roll out and
/// backpropagate from the state reached by `start_commands`.
SearchResult run_search(const env::TaskSpec& task, const agent::Policy& policy, critic::Critic& critic,
                        const SearchConfig& cfg, int policy_version = 0,
                        const std::vector<env::EnvCommand>& start_commands = {});

/// Search-at-inference answer: descend by highest Q over visited children,
/// then follow the best recorded rollout through the node where that
/// descent stops.
agent::Trajectory best_path(const SearchResult& result);

Json tree_to_json(const SearchTree& tree);
/// Rebuilds histories from node observations and snapshots by replay.
SearchTree tree_from_json(const Json& j);

}  // namespace treeq::mcts
