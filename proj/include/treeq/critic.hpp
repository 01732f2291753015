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

// Process supervision: a critic orders K candidate actions by repeatedly
// picking the best of the remaining ones, and ranks become values.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "treeq/adapter.hpp"
#include "treeq/agent.hpp"
#include "treeq/oracle.hpp"

namespace treeq::critic {

struct CriticRanking {
  /// Permutation of 0..K-1, best first.
  std::vector<int> ranked_action_indices;
  /// Indexed by action, not by rank.
  std::vector<double> qhat;
  int queries = 0;
};

/// (K-1-rank)/(K-1). Throws std::invalid_argument when out of range.
double rank_to_value(int rank, int k);

class Critic {
 public:
  virtual ~Critic() = default;
  /// Index (into `actions`) of the best action among `remaining`.
  virtual int pick_best(const agent::AgentHistory& h, const std::vector<agent::CompositeAction>& actions,
                        std::span<const int> remaining) = 0;
};

/// K-1 pick_best queries, removing each winner; the last action is placed by
/// elimination. Throws AdapterError if the critic names an index outside the
/// remaining set.
CriticRanking rank_actions(Critic& critic, const agent::AgentHistory& h,
                           const std::vector<agent::CompositeAction>& actions);

/// Ranks by exact optimal value, then by fewer steps to success, then by
/// lower index. The environment state is rebuilt from the history's
/// commands.
class OracleCritic : public Critic {
 public:
  explicit OracleCritic(std::size_t max_states = oracle::kDefaultMaxStates) : solver_(max_states) {}

  int pick_best(const agent::AgentHistory& h, const std::vector<agent::CompositeAction>& actions,
                std::span<const int> remaining) override;

  /// Exact values of every action's command at h.
  std::vector<oracle::Value> values(const agent::AgentHistory& h, const std::vector<agent::CompositeAction>& actions);

 private:
  oracle::ExactSolver solver_;
  std::string cache_key_;
  std::vector<oracle::Value> cache_;
};

/// With probability `noise` each query returns a uniformly random remaining
/// index instead of the oracle's pick.
class NoisyCritic : public Critic {
 public:
  NoisyCritic(double noise, std::uint64_t seed) : noise_(noise), rng_(seed) {}

  int pick_best(const agent::AgentHistory& h, const std::vector<agent::CompositeAction>& actions,
                std::span<const int> remaining) override;

 private:
  double noise_;
  Rng rng_;
  OracleCritic oracle_;
};

/// {"type":"pick_best","history":...,"candidates":[...]} -> {"best_index":i},
/// where candidates lists the remaining actions and i indexes that list.
class ExternalCritic : public Critic {
 public:
  explicit ExternalCritic(adapter::Channel& channel) : channel_(channel) {}

  int pick_best(const agent::AgentHistory& h, const std::vector<agent::CompositeAction>& actions,
                std::span<const int> remaining) override;

 private:
  adapter::Channel& channel_;
};

}  // namespace treeq::critic
