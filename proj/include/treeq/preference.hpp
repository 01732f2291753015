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

// Step-level preference pairs from search trees, and the append-only replay
// buffer that keeps generation-time likelihoods as reference values.

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "treeq/mcts.hpp"

namespace treeq::preference {

struct PreferencePair {
  std::string tree_id;
  int node_id = 0;
  int winner_index = 0;
  int loser_index = 0;
  agent::AgentHistory history;
  agent::CompositeAction winner;
  agent::CompositeAction loser;
  double q_w = 0.0;
  double q_l = 0.0;
  double ref_logp_w = 0.0;
  double ref_logp_l = 0.0;
  int policy_version = 0;
  /// Multiplicity of the pair in the loss (1 for search-built pairs).
  double weight = 1.0;
};

/// Every unordered pair of both-visited siblings whose mixed Q values differ
/// by more than theta, winner first. Reference log-likelihoods are the
/// recorded part log-probabilities of each action.
std::vector<PreferencePair> build_pairs(const mcts::SearchTree& tree, double alpha, double theta);

struct TrajectoryPair {
  agent::Trajectory winner;
  agent::Trajectory loser;
};

class ReplayBuffer {
 public:
  /// Appends pairs not already present under (tree_id, node_id, winner,
  /// loser). Returns the number appended.
  std::size_t add_pairs(const std::vector<PreferencePair>& pairs);
  void add_trajectories(const std::vector<agent::Trajectory>& trajs);

  const std::vector<PreferencePair>& pairs() const { return pairs_; }
  const std::vector<agent::Trajectory>& trajectories() const { return trajectories_; }
  bool empty() const { return pairs_.empty() && trajectories_.empty(); }

  /// Two JSONL files: one pair per line and one trajectory per line. A
  /// non-empty config_hash is stamped on every record.
  void save(const std::string& pairs_path, const std::string& trajectories_path,
            const std::string& config_hash = "") const;
  static ReplayBuffer load(const std::string& pairs_path, const std::string& trajectories_path);

 private:
  std::vector<PreferencePair> pairs_;
  std::vector<agent::Trajectory> trajectories_;
  std::set<std::string> pair_keys_;
};

/// Trajectories with terminal reward 1.
std::vector<agent::Trajectory> build_rft_dataset(const ReplayBuffer& buffer);

/// Per task, each success paired with each failure, in buffer order; tasks
/// with more than `cap` pairs keep a seeded random subset of size cap.
/// cap < 0 means no cap.
std::vector<TrajectoryPair> build_trajectory_pairs(const ReplayBuffer& buffer, int cap, std::uint64_t seed);

Json pair_to_json(const PreferencePair& p);
PreferencePair pair_from_json(const Json& j);

std::string to_jsonl(const std::vector<PreferencePair>& pairs, const std::string& config_hash = "");
std::vector<PreferencePair> pairs_from_jsonl(const std::string& text, const std::string& what);
std::string to_jsonl(const std::vector<agent::Trajectory>& trajs, const std::string& config_hash = "");
std::vector<agent::Trajectory> trajectories_from_jsonl(const std::string& text, const std::string& what);

}  // namespace treeq::preference
