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

#include "treeq/mcts.hpp"

#include <algorithm>
#include <set>

namespace treeq::mcts {

void validate(const SearchConfig& cfg) {
  if (cfg.k < 2) throw ConfigError("search.k must be >= 2");
  if (!(cfg.c_exp >= 0.0)) throw ConfigError("search.c_exp must be >= 0");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ConfigError("search.alpha must lie in [0, 1]");
  if (cfg.rollouts_per_task < 1) throw ConfigError("search.rollouts_per_task must be >= 1");
  if (cfg.max_depth < 0) throw ConfigError("search.max_depth must be >= 0");
  if (!(cfg.rollout_temperature >= 0.0)) throw ConfigError("search.rollout_temperature must be >= 0");
}

double mixed_q(const ChildEdge& edge, double alpha) { return alpha * edge.q_emp() + (1.0 - alpha) * edge.qhat; }

double ucb_score(double q, int n, int parent_visits, double c_exp) {
  return q + c_exp * std::sqrt(std::log(static_cast<double>(parent_visits)) / (1.0 + static_cast<double>(n)));
}

int select_ucb(std::span<const double> q, std::span<const int> n, int parent_visits, double c_exp) {
  int best = 0;
  double best_score = ucb_score(q[0], n[0], parent_visits, c_exp);
  for (std::size_t i = 1; i < q.size(); ++i) {
    const double s = ucb_score(q[i], n[i], parent_visits, c_exp);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  return best;
}

int select_child(const TreeNode& node, double c_exp, bool use_mixed_q, double alpha) {
  if (!node.expanded || node.children.empty()) throw SearchError("select_child on an unexpanded node");
  if (node.visit_count < 1) throw SearchError("select_child needs at least one visit; use first_selection");
  std::vector<double> q;
  std::vector<int> n;
  for (const auto& e : node.children) {
    q.push_back(use_mixed_q ? mixed_q(e, alpha) : e.q_emp());
    n.push_back(e.n);
  }
  return select_ucb(q, n, node.visit_count, c_exp);
}

int first_selection(const TreeNode& node, const critic::CriticRanking& ranking) {
  if (!node.expanded) throw SearchError("first_selection on an unexpanded node");
  for (const auto& e : node.children) {
    if (e.n > 0) throw SearchError("first_selection after a child was visited");
  }
  if (ranking.ranked_action_indices.size() != node.children.size()) {
    throw SearchError("ranking size does not match the node's children");
  }
  return ranking.ranked_action_indices.front();
}

void expand(SearchTree& tree, int node_id, const agent::Policy& policy, critic::Critic& critic, int k,
            std::uint64_t seed) {
  TreeNode& node = tree.nodes.at(static_cast<std::size_t>(node_id));
  if (node.expanded) throw SearchError("node " + std::to_string(node_id) + " is already expanded");
  if (node.terminal) throw SearchError("cannot expand terminal node " + std::to_string(node_id));
  auto actions = agent::propose_actions(policy, node.history, k, seed);
  const auto ranking = critic::rank_actions(critic, node.history, actions);
  node.children.clear();
  for (std::size_t i = 0; i < actions.size(); ++i) {
    ChildEdge e;
    e.action = std::move(actions[i]);
    e.qhat = ranking.qhat[i];
    node.children.push_back(std::move(e));
  }
  node.ranking = ranking.ranked_action_indices;
  node.expanded = true;
}

int ensure_child(SearchTree& tree, int node_id, int child_index) {
  auto& edge = tree.nodes.at(static_cast<std::size_t>(node_id)).children.at(static_cast<std::size_t>(child_index));
  if (edge.child_node) return *edge.child_node;
  const TreeNode& parent = tree.nodes[static_cast<std::size_t>(node_id)];
  auto r = env::env_step(parent.env_snapshot, edge.action.env_cmd);
  TreeNode child;
  child.node_id = static_cast<int>(tree.nodes.size());
  child.parent = node_id;
  child.depth = parent.depth + 1;
  child.history = agent::advance(parent.history, edge.action, r.observation);
  child.terminal = r.terminal;
  child.terminal_reward = r.reward;
  child.env_snapshot = std::move(r.state);
  edge.child_node = child.node_id;
  tree.nodes.push_back(std::move(child));
  return tree.nodes.back().node_id;
}

void backpropagate(SearchTree& tree, std::span<const PathStep> path, int reward) {
  if (reward != 0 && reward != 1) throw SearchError("backpropagate: reward must be 0 or 1");
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (path[i].node < 0 || static_cast<std::size_t>(path[i].node) >= tree.nodes.size()) {
      throw SearchError("backpropagate: invalid node in path");
    }
    const auto& node = tree.nodes[static_cast<std::size_t>(path[i].node)];
    if (path[i].child < 0 || static_cast<std::size_t>(path[i].child) >= node.children.size()) {
      throw SearchError("backpropagate: invalid child in path");
    }
    if (i == 0 && node.parent != -1) throw SearchError("backpropagate: path must start at the root");
    if (i + 1 < path.size() && node.children[static_cast<std::size_t>(path[i].child)].child_node != path[i + 1].node) {
      throw SearchError("backpropagate: path is not connected");
    }
  }
  for (std::size_t i = path.size(); i-- > 0;) {
    auto& node = tree.nodes[static_cast<std::size_t>(path[i].node)];
    auto& edge = node.children[static_cast<std::size_t>(path[i].child)];
    edge.wins += reward;
    edge.n += 1;
    node.visit_count += 1;
  }
}

SearchResult run_search(const env::TaskSpec& task, const agent::Policy& policy, critic::Critic& critic,
                        const SearchConfig& cfg, int policy_version,
                        const std::vector<env::EnvCommand>& start_commands) {
  validate(cfg);
  SearchResult out;
  SearchTree& tree = out.tree;
  tree.tree_id = task.task_id;
  tree.task = task;
  tree.start_commands = start_commands;
  tree.policy_version = policy_version;

  auto [state, obs] = env::env_reset(task.world, task, task.layout.seed);
  agent::AgentHistory hist = agent::initial_history(task, obs);
  for (const auto& cmd : start_commands) {
    auto r = env::env_step(state, cmd);
    // Prefix steps carry no recorded likelihoods.
    agent::CompositeAction a;
    a.env_cmd = cmd;
    if (hist.step_index() == 1) a.plan = "";
    hist = agent::advance(hist, a, r.observation);
    state = std::move(r.state);
  }
  if (state.terminal) throw SearchError("search root is terminal");
  TreeNode root;
  root.history = std::move(hist);
  root.env_snapshot = state;
  tree.nodes.push_back(std::move(root));

  const int max_depth = cfg.max_depth > 0 ? cfg.max_depth : state.horizon() - state.step_count;

  for (int it = 0; it < cfg.rollouts_per_task; ++it) {
    std::vector<PathStep> path;
    std::vector<int> visited = {0};
    std::optional<agent::Trajectory> roll;
    int reward = 0;
    int cur = 0;
    auto roll_from = [&](int node_id) {
      const TreeNode& n = tree.nodes[static_cast<std::size_t>(node_id)];
      const std::uint64_t rs = derive_seed(cfg.seed, "rollout:" + tree.tree_id + ":" + std::to_string(it));
      roll = agent::rollout(policy, n.env_snapshot, n.history, n.env_snapshot.horizon() - n.env_snapshot.step_count,
                            agent::Decode::Sample, rs);
      return roll->terminal ? roll->terminal_reward : 0;
    };
    for (;;) {
      TreeNode& node = tree.nodes[static_cast<std::size_t>(cur)];
      if (node.terminal) {
        reward = node.terminal_reward;
        break;
      }
      if (!node.expanded) {
        if (node.depth >= max_depth) {
          reward = roll_from(cur);
          break;
        }
        expand(tree, cur, policy, critic, cfg.k,
               derive_seed(cfg.seed, "expand:" + tree.tree_id + ":" + std::to_string(cur)));
        const int c = tree.nodes[static_cast<std::size_t>(cur)].ranking.front();
        path.push_back({cur, c});
        const int child = ensure_child(tree, cur, c);
        visited.push_back(child);
        const TreeNode& cn = tree.nodes[static_cast<std::size_t>(child)];
        reward = cn.terminal ? cn.terminal_reward : roll_from(child);
        break;
      }
      const bool any_visited =
          std::any_of(node.children.begin(), node.children.end(), [](const ChildEdge& e) { return e.n > 0; });
      const int c = any_visited ? select_child(node, cfg.c_exp, cfg.mixed_q_in_ucb, cfg.alpha) : node.ranking.front();
      path.push_back({cur, c});
      cur = ensure_child(tree, cur, c);
      visited.push_back(cur);
    }
    backpropagate(tree, path, reward);

    agent::Trajectory traj;
    traj.task = task;
    traj.start_commands = start_commands;
    traj.policy_version = policy_version;
    for (const auto& p : path) {
      const TreeNode& n = tree.nodes[static_cast<std::size_t>(p.node)];
      const ChildEdge& e = n.children[static_cast<std::size_t>(p.child)];
      const TreeNode& c = tree.nodes[static_cast<std::size_t>(*e.child_node)];
      traj.steps.push_back({n.history, e.action, c.terminal ? c.terminal_reward : 0});
    }
    if (roll) {
      for (auto& s : roll->steps) traj.steps.push_back(std::move(s));
    }
    traj.total_steps = static_cast<int>(traj.steps.size());
    traj.terminal = true;
    traj.terminal_reward = reward;
    out.trajectories.push_back(std::move(traj));
    out.trajectory_nodes.push_back(std::move(visited));
  }
  return out;
}

agent::Trajectory best_path(const SearchResult& result) {
  const auto& nodes = result.tree.nodes;
  int cur = 0;
  for (;;) {
    const TreeNode& n = nodes[static_cast<std::size_t>(cur)];
    if (!n.expanded) break;
    int best = -1;
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      const auto& e = n.children[i];
      if (e.n == 0 || !e.child_node) continue;
      if (best < 0 || e.q_emp() > n.children[static_cast<std::size_t>(best)].q_emp()) best = static_cast<int>(i);
    }
    if (best < 0) break;
    cur = *n.children[static_cast<std::size_t>(best)].child_node;
  }
  const agent::Trajectory* chosen = nullptr;
  for (std::size_t t = 0; t < result.trajectories.size(); ++t) {
    const auto& through = result.trajectory_nodes[t];
    if (std::find(through.begin(), through.end(), cur) == through.end()) continue;
    if (!chosen || result.trajectories[t].terminal_reward > chosen->terminal_reward) chosen = &result.trajectories[t];
  }
  if (!chosen) throw SearchError("no rollout passes through the selected node");
  return *chosen;
}

// ---------------------------------------------------------------- json

Json tree_to_json(const SearchTree& tree) {
  Json nodes = Json::array();
  for (const auto& n : tree.nodes) {
    Json children = Json::array();
    for (const auto& e : n.children) {
      children.push_back(Json{{"action", e.action},
                              {"q_emp", e.q_emp()},
                              {"wins", e.wins},
                              {"n", e.n},
                              {"qhat", e.qhat},
                              {"child_node", e.child_node ? Json(*e.child_node) : Json(nullptr)}});
    }
    nodes.push_back(Json{{"node_id", n.node_id},
                         {"parent", n.parent},
                         {"depth", n.depth},
                         {"observation", n.history.current_obs},
                         {"visit_count", n.visit_count},
                         {"expanded", n.expanded},
                         {"terminal", n.terminal},
                         {"terminal_reward", n.terminal_reward},
                         {"state_key", env::state_key(n.env_snapshot)},
                         {"ranking", n.ranking},
                         {"children", std::move(children)}});
  }
  return Json{{"schema_version", kSchemaVersion}, {"tree_id", tree.tree_id},
              {"task", tree.task},                {"start_commands", tree.start_commands},
              {"policy_version", tree.policy_version}, {"nodes", std::move(nodes)}};
}

SearchTree tree_from_json(const Json& j) {
  SearchTree tree;
  tree.tree_id = j.at("tree_id").get<std::string>();
  tree.task = j.at("task").get<env::TaskSpec>();
  tree.start_commands = j.at("start_commands").get<std::vector<env::EnvCommand>>();
  tree.policy_version = j.at("policy_version").get<int>();
  for (const auto& jn : j.at("nodes")) {
    TreeNode n;
    n.node_id = jn.at("node_id").get<int>();
    n.parent = jn.at("parent").get<int>();
    n.depth = jn.at("depth").get<int>();
    n.visit_count = jn.at("visit_count").get<int>();
    n.expanded = jn.at("expanded").get<bool>();
    n.terminal = jn.at("terminal").get<bool>();
    n.terminal_reward = jn.at("terminal_reward").get<int>();
    n.ranking = jn.at("ranking").get<std::vector<int>>();
    for (const auto& je : jn.at("children")) {
      ChildEdge e;
      e.action = je.at("action").get<agent::CompositeAction>();
      e.wins = je.at("wins").get<int>();
      e.n = je.at("n").get<int>();
      e.qhat = je.at("qhat").get<double>();
      if (!je.at("child_node").is_null()) e.child_node = je.at("child_node").get<int>();
      n.children.push_back(std::move(e));
    }
    if (n.node_id != static_cast<int>(tree.nodes.size())) throw DataError("tree nodes out of order");
    const env::Observation obs = jn.at("observation").get<env::Observation>();
    if (n.parent < 0) {
      std::vector<env::EnvCommand> cmds = tree.start_commands;
      n.env_snapshot = oracle::replay(tree.task, cmds);
      agent::AgentHistory h{tree.task, {}, obs};
      for (const auto& c : cmds) {
        agent::CompositeAction a;
        a.env_cmd = c;
        if (h.past_actions.empty()) a.plan = "";
        h.past_actions.push_back(a);
      }
      n.history = std::move(h);
    } else {
      const TreeNode& p = tree.nodes.at(static_cast<std::size_t>(n.parent));
      const ChildEdge* via = nullptr;
      for (const auto& e : p.children) {
        if (e.child_node == n.node_id) via = &e;
      }
      if (!via) throw DataError("tree node " + std::to_string(n.node_id) + " is not linked from its parent");
      n.env_snapshot = env::env_step(p.env_snapshot, via->action.env_cmd).state;
      n.history = agent::advance(p.history, via->action, obs);
    }
    if (env::state_key(n.env_snapshot) != jn.at("state_key").get<std::string>()) {
      throw DataError("tree node " + std::to_string(n.node_id) + " snapshot does not replay");
    }
    tree.nodes.push_back(std::move(n));
  }
  return tree;
}

}  // namespace treeq::mcts
