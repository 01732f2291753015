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

#include "treeq/critic.hpp"

#include <algorithm>
#include <stdexcept>

namespace treeq::critic {

double rank_to_value(int rank, int k) {
  if (k < 2) throw std::invalid_argument("rank_to_value: K must be >= 2");
  if (rank < 0 || rank >= k) throw std::invalid_argument("rank_to_value: rank out of range");
  return static_cast<double>(k - 1 - rank) / static_cast<double>(k - 1);
}

CriticRanking rank_actions(Critic& critic, const agent::AgentHistory& h,
                           const std::vector<agent::CompositeAction>& actions) {
  const int k = static_cast<int>(actions.size());
  if (k < 2) throw std::invalid_argument("rank_actions: K must be >= 2");
  std::vector<int> remaining(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) remaining[static_cast<std::size_t>(i)] = i;
  CriticRanking r;
  while (remaining.size() > 1) {
    const int best = critic.pick_best(h, actions, remaining);
    ++r.queries;
    auto it = std::find(remaining.begin(), remaining.end(), best);
    if (it == remaining.end()) {
      throw AdapterError("critic returned index " + std::to_string(best) + " outside the remaining set");
    }
    r.ranked_action_indices.push_back(best);
    remaining.erase(it);
  }
  r.ranked_action_indices.push_back(remaining.front());
  r.qhat.assign(static_cast<std::size_t>(k), 0.0);
  for (int rank = 0; rank < k; ++rank) {
    r.qhat[static_cast<std::size_t>(r.ranked_action_indices[static_cast<std::size_t>(rank)])] = rank_to_value(rank, k);
  }
  return r;
}

std::vector<oracle::Value> OracleCritic::values(const agent::AgentHistory& h,
                                                const std::vector<agent::CompositeAction>& actions) {
  std::string key = h.task.task_id + '#' + std::to_string(h.task.layout.seed);
  std::vector<env::EnvCommand> cmds;
  for (const auto& a : h.past_actions) {
    cmds.push_back(a.env_cmd);
    key += '\n' + env::canonical(a.env_cmd);
  }
  key += "\n=";
  for (const auto& a : actions) key += '\n' + env::canonical(a.env_cmd);
  if (key == cache_key_) return cache_;
  const env::EnvState s = oracle::replay(h.task, cmds);
  if (s.terminal) throw SearchError("oracle critic asked to rank actions at a terminal state");
  std::vector<oracle::Value> out;
  for (const auto& a : actions) out.push_back(solver_.q(s, a.env_cmd));
  cache_key_ = std::move(key);
  cache_ = out;
  return out;
}

int OracleCritic::pick_best(const agent::AgentHistory& h, const std::vector<agent::CompositeAction>& actions,
                            std::span<const int> remaining) {
  const auto v = values(h, actions);
  int best = remaining.front();
  for (int i : remaining) {
    const auto& a = v[static_cast<std::size_t>(i)];
    const auto& b = v[static_cast<std::size_t>(best)];
    if (a.q > b.q || (a.q == b.q && (a.dist < b.dist || (a.dist == b.dist && i < best)))) best = i;
  }
  return best;
}

int NoisyCritic::pick_best(const agent::AgentHistory& h, const std::vector<agent::CompositeAction>& actions,
                           std::span<const int> remaining) {
  if (noise_ > 0.0 && rng_.bernoulli(noise_)) return remaining[rng_.below(remaining.size())];
  return oracle_.pick_best(h, actions, remaining);
}

int ExternalCritic::pick_best(const agent::AgentHistory& h, const std::vector<agent::CompositeAction>& actions,
                              std::span<const int> remaining) {
  Json cands = Json::array();
  for (int i : remaining) cands.push_back(actions[static_cast<std::size_t>(i)]);
  const Json reply = adapter::call(channel_, Json{{"type", "pick_best"}, {"history", h}, {"candidates", cands}});
  if (!reply.contains("best_index") || !reply.at("best_index").is_number_integer()) {
    throw AdapterError("adapter protocol violation: pick_best reply lacks an integer best_index");
  }
  const auto idx = reply.at("best_index").get<long long>();
  if (idx < 0 || idx >= static_cast<long long>(remaining.size())) {
    throw AdapterError("critic returned index " + std::to_string(idx) + " outside the remaining set");
  }
  return remaining[static_cast<std::size_t>(idx)];
}

}  // namespace treeq::critic
