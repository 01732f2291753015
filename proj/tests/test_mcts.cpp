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

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "treeq/mcts.hpp"
#include "treeq/oracle.hpp"

using namespace treeq;

namespace {

mcts::SearchResult small_search(std::uint64_t seed, int rollouts = 12, env::World world = env::World::Shop) {
  const auto t = env::generate_task_set(world, 1, seed).front();
  const agent::SoftmaxPolicy policy(agent::make_prior_policy(world));
  critic::OracleCritic critic;
  mcts::SearchConfig cfg;
  cfg.seed = seed;
  cfg.rollouts_per_task = rollouts;
  cfg.rollout_temperature = world == env::World::Book ? 0.3 : 0.0;
  return mcts::run_search(t, policy, critic, cfg);
}

}  // namespace

TEST_SUITE("mcts") {
  TEST_CASE("UCB1 score") {
    // 0.5 + sqrt(2) * sqrt(ln 4 / 2)
    CHECK(mcts::ucb_score(0.5, 1, 4, std::sqrt(2.0)) == doctest::Approx(1.6774100225154747));
    // 0.25 + sqrt(ln 10 / 4)
    CHECK(mcts::ucb_score(0.25, 3, 10, 1.0) == doctest::Approx(1.0087135646925733));
    CHECK(mcts::ucb_score(0.3, 0, 1, 5.0) == 0.3);
  }

  TEST_CASE("UCB1 selection breaks ties by index") {
    CHECK(mcts::select_ucb(std::vector<double>{0.5, 0.5}, std::vector<int>{2, 2}, 4, 1.0) == 0);
    CHECK(mcts::select_ucb(std::vector<double>{0.5, 0.5}, std::vector<int>{2, 1}, 3, 1.0) == 1);
    CHECK(mcts::select_ucb(std::vector<double>{0.1, 0.9}, std::vector<int>{0, 5}, 5, 0.0) == 1);
  }

  TEST_CASE("mixed value") {
    mcts::ChildEdge e;
    e.wins = 3;
    e.n = 4;
    e.qhat = 0.5;
    CHECK(mcts::mixed_q(e, 0.5) == 0.625);
    CHECK(mcts::mixed_q(e, 1.0) == 0.75);
    CHECK(mcts::mixed_q(e, 0.0) == 0.5);
    CHECK(mcts::ChildEdge{}.q_emp() == 0.0);
  }

  TEST_CASE("config validation") {
    mcts::SearchConfig c;
    CHECK_NOTHROW(mcts::validate(c));
    using Mut = void (*)(mcts::SearchConfig&);
    for (Mut bad : std::initializer_list<Mut>{[](mcts::SearchConfig& x) { x.k = 1; }, [](mcts::SearchConfig& x) { x.c_exp = -1; },
                     [](mcts::SearchConfig& x) { x.alpha = 1.5; }, [](mcts::SearchConfig& x) { x.rollouts_per_task = 0; },
                     [](mcts::SearchConfig& x) { x.rollout_temperature = -0.1; }}) {
      auto x = c;
      bad(x);
      CHECK_THROWS_AS(mcts::validate(x), ConfigError);
    }
  }

  TEST_CASE("first visit follows the critic") {
    const auto r = small_search(3, 1);
    const auto& root = r.tree.nodes.front();
    REQUIRE(root.expanded);
    for (std::size_t c = 0; c < root.children.size(); ++c) {
      CHECK(root.children[c].n == (static_cast<int>(c) == root.ranking.front() ? 1 : 0));
    }
    for (std::size_t c = 0; c < root.children.size(); ++c) {
      CHECK(root.children[c].qhat ==
            critic::rank_to_value(static_cast<int>(std::find(root.ranking.begin(), root.ranking.end(), int(c)) -
                                                   root.ranking.begin()),
                                  static_cast<int>(root.children.size())));
    }
  }

  TEST_CASE("visit counts and values replay exactly") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const auto r = small_search(seed, 16, seed % 2 ? env::World::Shop : env::World::Book);
      const auto stats = testing::replay_edge_stats(r);
      for (const auto& node : r.tree.nodes) {
        int sum = 0;
        for (std::size_t c = 0; c < node.children.size(); ++c) {
          const auto& e = node.children[c];
          sum += e.n;
          const auto it = stats.find({node.node_id, static_cast<int>(c)});
          CHECK(e.n == (it == stats.end() ? 0 : it->second.n));
          CHECK(e.wins == (it == stats.end() ? 0 : it->second.wins));
        }
        CHECK(sum == node.visit_count);
      }
      CHECK(r.tree.nodes.front().visit_count == 16);
      CHECK(r.trajectories.size() == 16);
      for (const auto& t : r.trajectories) CHECK(agent::judge_trajectory(t) == t.terminal_reward);
    }
  }

  TEST_CASE("node snapshots match replayed commands") {
    const auto r = small_search(5, 10, env::World::Book);
    for (const auto& node : r.tree.nodes) {
      std::vector<env::EnvCommand> cmds;
      for (const auto& a : node.history.past_actions) cmds.push_back(a.env_cmd);
      CHECK(env::state_key(oracle::replay(r.tree.task, cmds)) == env::state_key(node.env_snapshot));
      CHECK(env::render(node.env_snapshot) == node.history.current_obs);
    }
  }

  TEST_CASE("search is deterministic") {
    const auto a = small_search(7);
    const auto b = small_search(7);
    CHECK(mcts::tree_to_json(a.tree) == mcts::tree_to_json(b.tree));
    CHECK(a.trajectory_nodes == b.trajectory_nodes);
  }

  TEST_CASE("backpropagation validates its path") {
    auto r = small_search(2, 3);
    auto& tree = r.tree;
    CHECK_THROWS_AS(mcts::backpropagate(tree, std::vector<mcts::PathStep>{{0, 99}}, 1), SearchError);
    CHECK_THROWS_AS(mcts::backpropagate(tree, std::vector<mcts::PathStep>{{0, 0}}, 2), SearchError);
    const int before = tree.nodes[0].visit_count;
    mcts::backpropagate(tree, std::vector<mcts::PathStep>{{0, 0}}, 1);
    CHECK(tree.nodes[0].visit_count == before + 1);
  }

  TEST_CASE("selection preconditions") {
    mcts::TreeNode n;
    CHECK_THROWS_AS(mcts::select_child(n, 1.0), SearchError);
    n.expanded = true;
    n.children.resize(2);
    CHECK_THROWS_AS(mcts::select_child(n, 1.0), SearchError);
  }

  TEST_CASE("tree json round trip") {
    const auto r = small_search(4, 8, env::World::Book);
    const auto back = mcts::tree_from_json(mcts::tree_to_json(r.tree));
    REQUIRE(back.nodes.size() == r.tree.nodes.size());
    for (std::size_t i = 0; i < back.nodes.size(); ++i) {
      CHECK(back.nodes[i].history == r.tree.nodes[i].history);
      CHECK(env::state_key(back.nodes[i].env_snapshot) == env::state_key(r.tree.nodes[i].env_snapshot));
      REQUIRE(back.nodes[i].children.size() == r.tree.nodes[i].children.size());
      for (std::size_t c = 0; c < back.nodes[i].children.size(); ++c) {
        CHECK(back.nodes[i].children[c].n == r.tree.nodes[i].children[c].n);
        CHECK(back.nodes[i].children[c].wins == r.tree.nodes[i].children[c].wins);
        CHECK(back.nodes[i].children[c].action == r.tree.nodes[i].children[c].action);
      }
    }
    CHECK(mcts::tree_to_json(back) == mcts::tree_to_json(r.tree));
  }

  TEST_CASE("best path is a complete episode") {
    const auto r = small_search(6, 24);
    const auto best = mcts::best_path(r);
    CHECK(best.terminal);
    CHECK(agent::judge_trajectory(best) == best.terminal_reward);
    int any = 0;
    for (const auto& t : r.trajectories) any = std::max(any, t.terminal_reward);
    CHECK(best.terminal_reward <= any);
  }

  TEST_CASE("searching from a prefix") {
    const auto t = env::generate_task_set(env::World::Book, 1, 3).front();
    auto [s, obs] = env::env_reset(t.world, t, t.layout.seed);
    const auto first = env::candidate_commands(obs).front();
    critic::OracleCritic critic;
    mcts::SearchConfig cfg;
    cfg.rollouts_per_task = 4;
    const auto r = mcts::run_search(t, agent::SoftmaxPolicy(agent::make_prior_policy(t.world)), critic, cfg, 0, {first});
    CHECK(r.tree.nodes.front().history.step_index() == 2);
    for (const auto& traj : r.trajectories) {
      CHECK(traj.start_commands == std::vector<env::EnvCommand>{first});
      CHECK(agent::judge_trajectory(traj) == traj.terminal_reward);
    }
  }
}
