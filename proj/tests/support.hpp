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

// Independent reference implementations shared by the unit tests and the
// acceptance runner. None of these call the code paths they check.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <tuple>
#include <utility>
#include <vector>

#include "treeq/critic.hpp"
#include "treeq/mcts.hpp"
#include "treeq/policy.hpp"
#include "treeq/preference.hpp"

namespace treeq::testing {

/// Picks a uniformly random remaining index. Cheap stand-in for fuzzing.
class RandomCritic : public critic::Critic {
 public:
  explicit RandomCritic(std::uint64_t seed) : rng_(seed) {}
  int pick_best(const agent::AgentHistory&, const std::vector<agent::CompositeAction>&,
                std::span<const int> remaining) override {
    return remaining[rng_.below(remaining.size())];
  }

 private:
  Rng rng_;
};

/// Plain UCB1 argmax, first index on ties.
inline int naive_ucb_argmax(const std::vector<double>& q, const std::vector<int>& n, int parent, double c) {
  std::vector<double> score(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double bonus = std::sqrt(std::log(double(parent)) / double(n[i] + 1));
    score[i] = q[i] + c * bonus;
  }
  int best = 0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    if (score[i] > score[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

struct OraclePair {
  int node = 0;
  int winner = 0;
  int loser = 0;
  double q_w = 0.0;
  double q_l = 0.0;
  bool operator<(const OraclePair& o) const {
    return std::tie(node, winner, loser) < std::tie(o.node, o.winner, o.loser);
  }
};

/// Exact-rational pair enumerator. alpha = alpha_q / 4 and theta = theta_e / 8;
/// critic values are read from each node's ranking as (K-1-rank)/(K-1).
inline std::vector<OraclePair> enumerate_pairs_exact(const mcts::SearchTree& tree, int alpha_q, int theta_e) {
  std::vector<OraclePair> out;
  for (const auto& node : tree.nodes) {
    if (!node.expanded) continue;
    const long long k = static_cast<long long>(node.children.size());
    std::vector<long long> r(node.children.size(), 0);
    for (std::size_t rank = 0; rank < node.ranking.size(); ++rank) {
      r[static_cast<std::size_t>(node.ranking[rank])] = k - 1 - static_cast<long long>(rank);
    }
    // mixed_i = num_i / den_i
    auto num = [&](std::size_t i) {
      const auto& e = node.children[i];
      return alpha_q * e.wins * (k - 1) + (4 - alpha_q) * r[i] * e.n;
    };
    auto den = [&](std::size_t i) { return 4LL * node.children[i].n * (k - 1); };
    for (std::size_t w = 0; w < node.children.size(); ++w) {
      for (std::size_t l = 0; l < node.children.size(); ++l) {
        if (w == l || node.children[w].n == 0 || node.children[l].n == 0) continue;
        const long long gap = 8 * (num(w) * den(l) - num(l) * den(w));
        if (gap > theta_e * den(w) * den(l)) {
          out.push_back({node.node_id, static_cast<int>(w), static_cast<int>(l), double(num(w)) / double(den(w)),
                         double(num(l)) / double(den(l))});
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct EdgeStats {
  int wins = 0;
  int n = 0;
};

/// Per-edge visit counts and reward sums recomputed from the recorded
/// rollouts: each consecutive pair of visited nodes is one edge visit.
inline std::map<std::pair<int, int>, EdgeStats> replay_edge_stats(const mcts::SearchResult& r) {
  std::map<std::pair<int, int>, EdgeStats> out;
  for (std::size_t t = 0; t < r.trajectories.size(); ++t) {
    const auto& nodes = r.trajectory_nodes[t];
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
      const auto& parent = r.tree.nodes[static_cast<std::size_t>(nodes[i])];
      int child = -1;
      for (std::size_t c = 0; c < parent.children.size(); ++c) {
        if (parent.children[c].child_node == nodes[i + 1]) child = static_cast<int>(c);
      }
      auto& s = out[{nodes[i], child}];
      s.n += 1;
      s.wins += r.trajectories[t].terminal_reward;
    }
  }
  return out;
}

/// Relative error ||g - fd|| / max(||g||, ||fd||) over the given coordinates,
/// with fd from central differences of step eps.
inline double fd_relative_error(const std::function<double(const agent::PolicyParams&)>& loss,
                                agent::PolicyParams params, const agent::Gradient& grad,
                                const std::vector<std::uint32_t>& coords, double eps = 1e-5) {
  double diff2 = 0.0, g2 = 0.0, f2 = 0.0;
  for (auto c : coords) {
    const double w0 = params.weights[c];
    params.weights[c] = w0 + eps;
    const double up = loss(params);
    params.weights[c] = w0 - eps;
    const double down = loss(params);
    params.weights[c] = w0;
    const double fd = (up - down) / (2.0 * eps);
    const auto it = grad.find(c);
    const double g = it == grad.end() ? 0.0 : it->second;
    diff2 += (g - fd) * (g - fd);
    g2 += g * g;
    f2 += fd * fd;
  }
  const double scale = std::sqrt(std::max(g2, f2));
  return scale == 0.0 ? 0.0 : std::sqrt(diff2) / scale;
}

/// Prior weights plus uniform noise of the given scale on every weight.
inline agent::PolicyParams noisy_params(env::World world, std::uint64_t seed, double scale) {
  agent::PolicyParams p = agent::make_prior_policy(world);
  Rng rng(seed);
  for (auto& w : p.weights) w += scale * (2.0 * rng.uniform() - 1.0);
  return p;
}

/// A sampled trajectory of `policy` on `task` from reset, cut at max_steps
/// (the horizon when 0).
inline agent::Trajectory sample_trajectory(const agent::Policy& policy, const env::TaskSpec& task, std::uint64_t seed,
                                           int max_steps = 0) {
  auto [s, obs] = env::env_reset(task.world, task, task.layout.seed);
  return agent::rollout(policy, s, agent::initial_history(task, obs), max_steps > 0 ? max_steps : task.layout.horizon,
                        agent::Decode::Sample, seed);
}

}  // namespace treeq::testing
