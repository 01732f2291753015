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

#include "treeq/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>

namespace treeq::oracle {

std::string ExactSolver::key(const env::EnvState& s) const {
  const auto& t = s.task();
  return t.task_id + '#' + std::to_string(t.layout.seed) + '#' + env::abstract_key(s) + '#' +
         std::to_string(s.horizon() - s.step_count);
}

void ExactSolver::guard() {
  if (states() >= max_states_) {
    throw OracleLimitError("exact solver exceeded the state limit of " + std::to_string(max_states_));
  }
}

Value ExactSolver::value(const env::EnvState& s) {
  if (s.terminal) return env::success(s) ? Value{1.0, 0} : Value{};
  const std::string k = key(s);
  if (auto it = memo_.find(k); it != memo_.end()) return it->second;
  guard();
  Value best;
  for (const auto& cmd : env::candidate_commands(env::render(s))) {
    const Value v = q(s, cmd);
    if (v.q > best.q || (v.q == best.q && v.dist < best.dist)) best = v;
  }
  memo_.emplace(k, best);
  return best;
}

Value ExactSolver::q(const env::EnvState& s, const env::EnvCommand& cmd) {
  Value v = value(env::env_step(s, cmd).state);
  if (v.dist != kUnreachable) ++v.dist;
  return v;
}

double ExactSolver::uniform_random_success(const env::EnvState& s) {
  if (s.terminal) return env::success(s) ? 1.0 : 0.0;
  const std::string k = key(s);
  if (auto it = random_memo_.find(k); it != random_memo_.end()) return it->second;
  guard();
  const auto cmds = env::candidate_commands(env::render(s));
  double total = 0.0;
  for (const auto& cmd : cmds) total += uniform_random_success(env::env_step(s, cmd).state);
  const double p = total / static_cast<double>(cmds.size());
  random_memo_.emplace(k, p);
  return p;
}

env::EnvState replay(const env::TaskSpec& task, const std::vector<env::EnvCommand>& commands) {
  env::EnvState s = env::env_reset(task.world, task, task.layout.seed).first;
  for (const auto& c : commands) s = env::env_step(s, c).state;
  return s;
}

ExactSolution solve_exact(env::World world, const env::TaskSpec& task, int depth_limit, std::size_t max_states) {
  if (depth_limit < 0) throw std::invalid_argument("solve_exact: negative depth limit");
  ExactSolver solver(max_states);
  ExactSolution sol;
  sol.task_id = task.task_id;
  sol.depth_limit = depth_limit;

  const env::EnvState root = env::env_reset(world, task, task.layout.seed).first;
  const Value rv = solver.value(root);
  sol.success_value = rv.q;
  sol.min_steps = rv.dist;

  std::set<std::string> seen;
  std::vector<std::pair<env::EnvState, int>> stack = {{root, 0}};
  while (!stack.empty()) {
    auto [s, depth] = std::move(stack.back());
    stack.pop_back();
    if (s.terminal || depth >= depth_limit) continue;
    const std::string sk = env::state_key(s);
    if (!seen.insert(sk).second) continue;
    if (seen.size() > max_states) {
      throw OracleLimitError("solve_exact exceeded the state limit of " + std::to_string(max_states));
    }
    auto& row = sol.q_star[sk];
    double best = -1.0;
    for (const auto& cmd : env::candidate_commands(env::render(s))) {
      const env::EnvState child = env::env_step(s, cmd).state;
      const double qv = solver.value(child).q;
      const std::string ck = env::canonical(cmd);
      row[ck] = qv;
      if (qv > best) {
        best = qv;
        sol.optimal_action[sk] = ck;
      }
      stack.emplace_back(child, depth + 1);
    }
  }
  return sol;
}

// ---------------------------------------------------------------- KL-regularized optimum

std::vector<Distribution> kl_optimal_policy(const std::vector<Distribution>& pi_ref,
                                            const std::vector<std::vector<double>>& q, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("kl_optimal_policy: beta must be positive");
  if (pi_ref.size() != q.size()) throw std::invalid_argument("kl_optimal_policy: state count mismatch");
  std::vector<Distribution> out;
  for (std::size_t s = 0; s < q.size(); ++s) {
    if (pi_ref[s].size() != q[s].size()) throw std::invalid_argument("kl_optimal_policy: action count mismatch");
    const double qmax = *std::max_element(q[s].begin(), q[s].end());
    Distribution d(q[s].size());
    double z = 0.0;
    for (std::size_t a = 0; a < d.size(); ++a) {
      d[a] = pi_ref[s][a] * std::exp((q[s][a] - qmax) / beta);
      z += d[a];
    }
    for (double& x : d) x /= z;
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::vector<BtPreference> sample_bradley_terry_prefs(const std::vector<std::vector<double>>& q,
                                                     std::size_t n_pairs, std::uint64_t seed) {
  for (const auto& row : q) {
    if (row.size() < 2) throw std::invalid_argument("sample_bradley_terry_prefs: need two actions per state");
  }
  Rng rng(seed);
  std::vector<BtPreference> out;
  out.reserve(n_pairs);
  for (std::size_t k = 0; k < n_pairs; ++k) {
    const int s = static_cast<int>(rng.below(q.size()));
    const std::size_t n = q[s].size();
    const int i = static_cast<int>(rng.below(n));
    int j = static_cast<int>(rng.below(n - 1));
    if (j >= i) ++j;
    if (rng.uniform() < sigmoid(q[s][i] - q[s][j])) {
      out.push_back({s, i, j});
    } else {
      out.push_back({s, j, i});
    }
  }
  return out;
}

std::vector<std::vector<double>> policy_evaluation_q(const FiniteMdp& mdp, const std::vector<Distribution>& pi) {
  const std::size_t n = mdp.states.size();
  std::vector<double> v(n, 0.0);
  std::vector<int> status(n, 0);  // 0 new, 1 in progress, 2 done
  std::vector<std::vector<double>> q(n);
  std::function<double(int)> solve = [&](int s) -> double {
    if (status[s] == 2) return v[s];
    if (status[s] == 1) throw std::invalid_argument("policy_evaluation_q: MDP has a cycle");
    status[s] = 1;
    const auto& acts = mdp.states[s];
    q[s].assign(acts.size(), 0.0);
    double total = 0.0;
    for (std::size_t a = 0; a < acts.size(); ++a) {
      double qa = acts[a].reward;
      for (const auto& o : acts[a].outcomes) qa += o.prob * solve(o.next);
      q[s][a] = qa;
      total += pi[s][a] * qa;
    }
    v[s] = total;
    status[s] = 2;
    return total;
  };
  for (std::size_t s = 0; s < n; ++s) solve(static_cast<int>(s));
  return q;
}

}  // namespace treeq::oracle
