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

// Brute-force ground truth: exact optimal-play values of simulated tasks,
// the closed-form KL-regularized optimal policy, Bradley-Terry preference
// sampling, and exact policy evaluation on small finite MDPs.

#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "treeq/env.hpp"

namespace treeq::oracle {

inline constexpr std::size_t kDefaultMaxStates = 10'000'000;
inline constexpr int kUnreachable = std::numeric_limits<int>::max();

/// Optimal-play value of a state or state-action pair. Dynamics are
/// deterministic, so q is a 0/1 success indicator; dist is the fewest steps
/// to a successful terminal state (kUnreachable when q is 0).
struct Value {
  double q = 0.0;
  int dist = kUnreachable;
};

/// Memoized exhaustive solver over the commands each page offers. States are
/// merged under env::abstract_key plus the remaining step budget, which
/// preserves every success question.
class ExactSolver {
 public:
  explicit ExactSolver(std::size_t max_states = kDefaultMaxStates) : max_states_(max_states) {}

  Value value(const env::EnvState& s);
  Value q(const env::EnvState& s, const env::EnvCommand& cmd);

  /// Success probability of the policy choosing uniformly among offered
  /// commands at every step.
  double uniform_random_success(const env::EnvState& s);

  std::size_t states() const { return memo_.size() + random_memo_.size(); }

 private:
  std::string key(const env::EnvState& s) const;
  void guard();

  std::size_t max_states_;
  std::unordered_map<std::string, Value> memo_;
  std::unordered_map<std::string, double> random_memo_;
};

/// Rebuilds the environment state reached by a command sequence from reset.
env::EnvState replay(const env::TaskSpec& task, const std::vector<env::EnvCommand>& commands);

struct ExactSolution {
  std::string task_id;
  int depth_limit = 0;
  /// Keyed by env::state_key of each state reachable within depth_limit
  /// steps, then by canonical command. The environment is deterministic, so
  /// each history maps to exactly one state key.
  std::map<std::string, std::map<std::string, double>> q_star;
  std::map<std::string, std::string> optimal_action;
  /// Fewest steps to success from the root (kUnreachable if none).
  int min_steps = kUnreachable;
  double success_value = 0.0;
};

/// Enumerates every state reachable within depth_limit steps and evaluates
/// the exact optimal value of each offered command. Throws OracleLimitError
/// when more than max_states states would be visited.
ExactSolution solve_exact(env::World world, const env::TaskSpec& task, int depth_limit,
                          std::size_t max_states = kDefaultMaxStates);

// ---------------------------------------------------------------- KL-regularized optimum

using Distribution = std::vector<double>;

/// pi*(a|s) = pi_ref(a|s) exp(q(s,a)/beta) / Z(s), per state.
std::vector<Distribution> kl_optimal_policy(const std::vector<Distribution>& pi_ref,
                                            const std::vector<std::vector<double>>& q, double beta);

struct BtPreference {
  int state = 0;
  int winner = 0;
  int loser = 0;
};

/// Draws n pairs: a uniform state, a uniform unordered pair of distinct
/// actions, and the winner with probability sigmoid(q_i - q_j).
std::vector<BtPreference> sample_bradley_terry_prefs(const std::vector<std::vector<double>>& q,
                                                     std::size_t n_pairs, std::uint64_t seed);

/// Finite episodic MDP. Taking action a in state s yields reward r and moves
/// to each successor with its probability; actions without successors end
/// the episode.
struct FiniteMdp {
  struct Outcome {
    int next = 0;
    double prob = 1.0;
  };
  struct Action {
    double reward = 0.0;
    std::vector<Outcome> outcomes;
  };
  std::vector<std::vector<Action>> states;
};

/// Exact Q of a stochastic policy (undiscounted). The MDP must be acyclic.
std::vector<std::vector<double>> policy_evaluation_q(const FiniteMdp& mdp, const std::vector<Distribution>& pi);

}  // namespace treeq::oracle
