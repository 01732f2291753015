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

#include "treeq/preference.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace treeq::preference {

namespace {

// Gaps this close to theta count as equal to it, so rounding in the mixed-Q
// sums cannot flip a pair at an exact rational tie.
constexpr double kTieTolerance = 1e-12;

}  // namespace

std::vector<PreferencePair> build_pairs(const mcts::SearchTree& tree, double alpha, double theta) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("build_pairs: alpha must lie in [0, 1]");
  if (!(theta >= 0.0)) throw ConfigError("build_pairs: theta must be >= 0");
  std::vector<PreferencePair> out;
  for (const auto& node : tree.nodes) {
    if (!node.expanded) continue;
    const auto& ch = node.children;
    for (std::size_t i = 0; i < ch.size(); ++i) {
      if (ch[i].n < 1) continue;
      for (std::size_t j = i + 1; j < ch.size(); ++j) {
        if (ch[j].n < 1) continue;
        const double qi = mcts::mixed_q(ch[i], alpha);
        const double qj = mcts::mixed_q(ch[j], alpha);
        if (!(std::abs(qi - qj) > theta + kTieTolerance)) continue;
        const bool i_wins = qi > qj;
        const std::size_t w = i_wins ? i : j;
        const std::size_t l = i_wins ? j : i;
        PreferencePair p;
        p.tree_id = tree.tree_id;
        p.node_id = node.node_id;
        p.winner_index = static_cast<int>(w);
        p.loser_index = static_cast<int>(l);
        p.history = node.history;
        p.winner = ch[w].action;
        p.loser = ch[l].action;
        p.q_w = i_wins ? qi : qj;
        p.q_l = i_wins ? qj : qi;
        p.ref_logp_w = p.winner.joint_logp();
        p.ref_logp_l = p.loser.joint_logp();
        p.policy_version = tree.policy_version;
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

namespace {

std::string pair_key(const PreferencePair& p) {
  return p.tree_id + '#' + std::to_string(p.policy_version) + '#' + std::to_string(p.node_id) + '#' +
         std::to_string(p.winner_index) + '#' + std::to_string(p.loser_index);
}

}  // namespace

std::size_t ReplayBuffer::add_pairs(const std::vector<PreferencePair>& pairs) {
  std::size_t added = 0;
  for (const auto& p : pairs) {
    if (!pair_keys_.insert(pair_key(p)).second) continue;
    pairs_.push_back(p);
    ++added;
  }
  return added;
}

void ReplayBuffer::add_trajectories(const std::vector<agent::Trajectory>& trajs) {
  trajectories_.insert(trajectories_.end(), trajs.begin(), trajs.end());
}

std::vector<agent::Trajectory> build_rft_dataset(const ReplayBuffer& buffer) {
  std::vector<agent::Trajectory> out;
  for (const auto& t : buffer.trajectories()) {
    if (t.terminal_reward == 1) out.push_back(t);
  }
  return out;
}

std::vector<TrajectoryPair> build_trajectory_pairs(const ReplayBuffer& buffer, int cap, std::uint64_t seed) {
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<const agent::Trajectory*>, std::vector<const agent::Trajectory*>>> by_task;
  for (const auto& t : buffer.trajectories()) {
    if (!by_task.contains(t.task.task_id)) order.push_back(t.task.task_id);
    auto& [wins, losses] = by_task[t.task.task_id];
    (t.terminal_reward == 1 ? wins : losses).push_back(&t);
  }
  std::vector<TrajectoryPair> out;
  for (const auto& id : order) {
    const auto& [wins, losses] = by_task[id];
    std::vector<std::pair<const agent::Trajectory*, const agent::Trajectory*>> all;
    for (const auto* w : wins) {
      for (const auto* l : losses) all.emplace_back(w, l);
    }
    if (cap >= 0 && all.size() > static_cast<std::size_t>(cap)) {
      std::vector<std::size_t> idx(all.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      Rng rng(derive_seed(seed, "traj-pairs:" + id));
      rng.shuffle(idx);
      idx.resize(static_cast<std::size_t>(cap));
      std::sort(idx.begin(), idx.end());
      std::vector<std::pair<const agent::Trajectory*, const agent::Trajectory*>> kept;
      for (auto i : idx) kept.push_back(all[i]);
      all = std::move(kept);
    }
    for (const auto& [w, l] : all) out.push_back({*w, *l});
  }
  return out;
}

// ---------------------------------------------------------------- files

Json pair_to_json(const PreferencePair& p) {
  return Json{{"schema_version", kSchemaVersion},
              {"tree_id", p.tree_id},
              {"node_id", p.node_id},
              {"winner_index", p.winner_index},
              {"loser_index", p.loser_index},
              {"history", p.history},
              {"winner", p.winner},
              {"loser", p.loser},
              {"q_w", p.q_w},
              {"q_l", p.q_l},
              {"ref_logp_w", p.ref_logp_w},
              {"ref_logp_l", p.ref_logp_l},
              {"policy_version", p.policy_version},
              {"weight", p.weight}};
}

PreferencePair pair_from_json(const Json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion) throw DataError("unsupported pair schema_version");
  if (!j.contains("ref_logp_w") || !j.contains("ref_logp_l")) throw DataError("pair is missing reference logps");
  PreferencePair p;
  p.tree_id = j.at("tree_id").get<std::string>();
  p.node_id = j.at("node_id").get<int>();
  p.winner_index = j.at("winner_index").get<int>();
  p.loser_index = j.at("loser_index").get<int>();
  p.history = j.at("history").get<agent::AgentHistory>();
  p.winner = j.at("winner").get<agent::CompositeAction>();
  p.loser = j.at("loser").get<agent::CompositeAction>();
  p.q_w = j.at("q_w").get<double>();
  p.q_l = j.at("q_l").get<double>();
  p.ref_logp_w = j.at("ref_logp_w").get<double>();
  p.ref_logp_l = j.at("ref_logp_l").get<double>();
  p.policy_version = j.at("policy_version").get<int>();
  p.weight = j.value("weight", 1.0);
  return p;
}

std::string to_jsonl(const std::vector<PreferencePair>& pairs, const std::string& config_hash) {
  std::string out;
  for (const auto& p : pairs) {
    Json j = pair_to_json(p);
    if (!config_hash.empty()) j["config_hash"] = config_hash;
    out += j.dump() + '\n';
  }
  return out;
}

namespace {

template <class F>
void for_each_line(const std::string& text, const std::string& what, F&& f) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const Json j = parse_json(line, what + ":" + std::to_string(lineno));
    try {
      f(j);
    } catch (const Json::exception& e) {
      throw DataError(what + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const EnvError& e) {
      throw DataError(what + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<PreferencePair> pairs_from_jsonl(const std::string& text, const std::string& what) {
  std::vector<PreferencePair> out;
  for_each_line(text, what, [&](const Json& j) { out.push_back(pair_from_json(j)); });
  return out;
}

std::string to_jsonl(const std::vector<agent::Trajectory>& trajs, const std::string& config_hash) {
  std::string out;
  for (const auto& t : trajs) {
    Json j = t;
    j["schema_version"] = kSchemaVersion;
    if (!config_hash.empty()) j["config_hash"] = config_hash;
    out += j.dump() + '\n';
  }
  return out;
}

std::vector<agent::Trajectory> trajectories_from_jsonl(const std::string& text, const std::string& what) {
  std::vector<agent::Trajectory> out;
  for_each_line(text, what, [&](const Json& j) {
    if (j.value("schema_version", 0) != kSchemaVersion) throw DataError("unsupported trajectory schema_version");
    out.push_back(j.get<agent::Trajectory>());
  });
  return out;
}

void ReplayBuffer::save(const std::string& pairs_path, const std::string& trajectories_path,
                        const std::string& config_hash) const {
  write_text_file(pairs_path, to_jsonl(pairs_, config_hash));
  write_text_file(trajectories_path, to_jsonl(trajectories_, config_hash));
}

ReplayBuffer ReplayBuffer::load(const std::string& pairs_path, const std::string& trajectories_path) {
  ReplayBuffer b;
  b.add_pairs(pairs_from_jsonl(read_text_file(pairs_path), pairs_path));
  b.add_trajectories(trajectories_from_jsonl(read_text_file(trajectories_path), trajectories_path));
  return b;
}

}  // namespace treeq::preference
