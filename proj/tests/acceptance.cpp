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

// Acceptance runner: one PASS/FAIL line per criterion.
//
//   treeq_acceptance [--only 1,4,...]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "support.hpp"
#include "treeq/harness.hpp"
#include "treeq/oracle.hpp"
#include "treeq/trainers.hpp"

using namespace treeq;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

constexpr int kSeeds = 5;

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

// ---------------------------------------------------------------- 1

/// A finite MDP rendered as pages of buttons, one page per state, with a
/// tabular policy whose only free part is the button choice.
struct ButtonMdp {
  oracle::FiniteMdp mdp;
  std::vector<agent::AgentHistory> histories;
  agent::PolicyParams ref;

  agent::CompositeAction action(int s, int a) const {
    agent::CompositeAction c;
    if (histories[static_cast<std::size_t>(s)].step_index() == 1) c.plan = "p";
    c.thought = "t";
    c.explanation = "x";
    c.env_cmd = {env::Verb::Click, "a" + std::to_string(a), std::nullopt};
    return c;
  }

  std::vector<oracle::Distribution> policy(const agent::PolicyParams& p) const {
    std::vector<oracle::Distribution> d(mdp.states.size());
    for (std::size_t s = 0; s < mdp.states.size(); ++s) {
      for (std::size_t a = 0; a < mdp.states[s].size(); ++a) {
        d[s].push_back(std::exp(agent::action_logp(p, histories[s], action(int(s), int(a)))));
      }
    }
    return d;
  }
};

ButtonMdp random_button_mdp(bool bandit, std::uint64_t seed) {
  Rng rng(seed);
  ButtonMdp m;
  const int ns = bandit ? 1 : 3;
  m.mdp.states.resize(static_cast<std::size_t>(ns));
  m.ref.extractor = agent::kTabularExtractor;
  m.ref.weights.assign(4096, 0.0);
  m.ref.vocab = {{"p"}, {"t"}, {"x"}};
  env::TaskSpec task;
  task.task_id = bandit ? "bandit" : "mdp";
  task.goal_text = "choose";
  for (int s = 0; s < ns; ++s) {
    const int na = 2 + static_cast<int>(rng.below(3));
    env::Observation obs;
    obs.page_id = "s" + std::to_string(s);
    for (int a = 0; a < na; ++a) {
      oracle::FiniteMdp::Action act;
      if (!bandit && s == 0) {
        const double p = rng.uniform();
        act.outcomes = {{1, p}, {2, 1.0 - p}};
      } else {
        act.reward = 3.0 * rng.uniform();
      }
      m.mdp.states[static_cast<std::size_t>(s)].push_back(act);
      obs.elements.push_back({"a" + std::to_string(a), env::Role::Button, "option", {}});
      m.ref.weights[agent::feature_index("shopworld", "E|" + obs.page_id + "|click a" + std::to_string(a), 4096)] =
          2.0 * rng.uniform() - 1.0;
    }
    agent::AgentHistory h{task, {}, obs};
    if (s > 0) h.past_actions.push_back(m.action(0, 0));
    m.histories.push_back(h);
  }
  return m;
}

Verdict criterion1() {
  double worst = 0.0, weakest_start = 1.0;
  int instances = 0;
  for (int i = 0; i < 10; ++i) {
    const bool bandit = i < 5;
    const ButtonMdp m = random_button_mdp(bandit, derive_seed(101, static_cast<std::uint64_t>(i)));
    const auto ref = m.policy(m.ref);
    const auto q = oracle::policy_evaluation_q(m.mdp, ref);
    const double beta = 0.5 + Rng(derive_seed(102, static_cast<std::uint64_t>(i))).uniform();
    const auto target = oracle::kl_optimal_policy(ref, q, beta);

    std::map<std::tuple<int, int, int>, int> counts;
    for (const auto& p : oracle::sample_bradley_terry_prefs(q, 200000, derive_seed(103, static_cast<std::uint64_t>(i)))) {
      ++counts[{p.state, p.winner, p.loser}];
    }
    trainers::TrainData data;
    data.objective = trainers::Objective::StepDpo;
    for (const auto& [key, c] : counts) {
      const auto [s, w, l] = key;
      preference::PreferencePair pp;
      pp.tree_id = "bt";
      pp.node_id = s;
      pp.winner_index = w;
      pp.loser_index = l;
      pp.history = m.histories[static_cast<std::size_t>(s)];
      pp.winner = m.action(s, w);
      pp.loser = m.action(s, l);
      pp.ref_logp_w = std::log(ref[static_cast<std::size_t>(s)][static_cast<std::size_t>(w)]);
      pp.ref_logp_l = std::log(ref[static_cast<std::size_t>(s)][static_cast<std::size_t>(l)]);
      pp.weight = c;
      data.pairs.push_back(pp);
    }
    trainers::TrainConfig tc;
    tc.beta = beta;
    tc.learning_rate = 1.0;
    tc.momentum = 0.9;
    tc.epochs = 2000;
    const auto learned = m.policy(trainers::train(m.ref, data, tc).state.params);

    for (std::size_t s = 0; s < ref.size(); ++s) {
      double tv = 0.0, tv0 = 0.0;
      for (std::size_t a = 0; a < ref[s].size(); ++a) {
        tv += std::abs(learned[s][a] - target[s][a]) / 2.0;
        tv0 += std::abs(ref[s][a] - target[s][a]) / 2.0;
      }
      worst = std::max(worst, tv);
      weakest_start = std::min(weakest_start, tv0);
    }
    ++instances;
  }
  return {worst < 0.02, std::to_string(instances) + " instances (5 bandits, 5 two-step MDPs); max per-state TV " +
                            fmt("%.4f", worst) + " < 0.02 (smallest starting TV " + fmt("%.3f", weakest_start) + ")"};
}

// ---------------------------------------------------------------- 2

std::vector<std::uint32_t> fd_coords(const agent::Gradient& g, Rng& rng, std::size_t dim) {
  std::vector<std::uint32_t> support;
  for (const auto& [k, v] : g) {
    if (v != 0.0) support.push_back(k);
  }
  rng.shuffle(support);
  if (support.size() > 20) support.resize(20);
  for (int i = 0; i < 5; ++i) support.push_back(static_cast<std::uint32_t>(rng.below(dim)));
  return support;
}

env::TaskSpec random_task(Rng& rng) {
  const auto world = rng.bernoulli(0.5) ? env::World::Shop : env::World::Book;
  env::EnvConfig ec;
  ec.book.start_stage = rng.bernoulli(0.5) ? 3 : 0;
  return env::generate_task_set(world, 1, rng.next_u64(), ec).front();
}

Verdict criterion2() {
  std::map<std::string, double> worst = {{"rft", 0.0}, {"step_dpo", 0.0}, {"trajectory_dpo", 0.0}};
  std::mutex mu;
  parallel_for(100, [&](std::size_t i) {
    Rng rng(derive_seed(201, i));
    const env::TaskSpec task = random_task(rng);
    const auto params = testing::noisy_params(task.world, rng.next_u64(), 0.5);
    const auto gen = testing::noisy_params(task.world, rng.next_u64(), 0.5);
    const agent::SoftmaxPolicy sampler(gen);
    const double beta = 0.5 + 1.5 * rng.uniform();

    std::vector<agent::Trajectory> trajs;
    for (int t = 0; t < 3; ++t) trajs.push_back(testing::sample_trajectory(sampler, task, rng.next_u64(), 8));

    const auto rft = trainers::rft_loss(params, trajs);
    const double e_rft = testing::fd_relative_error(
        [&](const agent::PolicyParams& p) { return trainers::rft_loss(p, trajs).loss; }, params, rft.grad,
        fd_coords(rft.grad, rng, params.dimension()));

    const auto& step = trajs[0].steps[rng.below(trajs[0].steps.size())];
    preference::PreferencePair pair;
    pair.history = step.history;
    pair.winner = step.action;
    pair.loser = step.action;
    for (int tries = 0; tries < 50 && pair.loser == pair.winner; ++tries) {
      pair.loser = sampler.act(step.history, agent::Decode::Sample, rng.next_u64());
    }
    pair.ref_logp_w = pair.winner.joint_logp();
    pair.ref_logp_l = pair.loser.joint_logp();
    const auto dpo = trainers::dpo_step_loss(params, pair, beta);
    const double e_dpo = testing::fd_relative_error(
        [&](const agent::PolicyParams& p) { return trainers::dpo_step_loss(p, pair, beta).loss; }, params, dpo.grad,
        fd_coords(dpo.grad, rng, params.dimension()));

    const preference::TrajectoryPair tp{trajs[1], trajs[2]};
    const auto traj = trainers::dpo_trajectory_loss(params, tp, beta);
    const double e_traj = testing::fd_relative_error(
        [&](const agent::PolicyParams& p) { return trainers::dpo_trajectory_loss(p, tp, beta).loss; }, params,
        traj.grad, fd_coords(traj.grad, rng, params.dimension()));

    std::lock_guard lock(mu);
    worst["rft"] = std::max(worst["rft"], e_rft);
    worst["step_dpo"] = std::max(worst["step_dpo"], e_dpo);
    worst["trajectory_dpo"] = std::max(worst["trajectory_dpo"], e_traj);
  });
  bool pass = true;
  std::string detail = "100 instances each; max relative error";
  for (const auto& [k, v] : worst) {
    pass = pass && v < 1e-5;
    detail += " " + k + " " + fmt("%.2e", v);
  }
  return {pass, detail + " (< 1e-5)"};
}

// ---------------------------------------------------------------- 3

Verdict criterion3() {
  int bad_bookkeeping = 0, checks = 0;
  parallel_for(100, [&](std::size_t i) {
    Rng rng(derive_seed(301, i));
    env::TaskSpec task = random_task(rng);
    const agent::SoftmaxPolicy policy(testing::noisy_params(task.world, rng.next_u64(), 1.0));
    mcts::SearchConfig cfg;
    cfg.k = 2 + static_cast<int>(rng.below(4));
    cfg.c_exp = 2.0 * rng.uniform();
    cfg.alpha = rng.uniform();
    cfg.mixed_q_in_ucb = rng.bernoulli(0.5);
    cfg.max_depth = rng.bernoulli(0.5) ? 1 + static_cast<int>(rng.below(6)) : 0;
    cfg.seed = rng.next_u64();
    const int total = 4 + static_cast<int>(rng.below(13));
    const std::uint64_t critic_seed = rng.next_u64();
    int local_bad = 0, local_checks = 0;
    for (int r = 1; r <= total; ++r) {
      cfg.rollouts_per_task = r;
      testing::RandomCritic critic(critic_seed);
      const auto res = mcts::run_search(task, policy, critic, cfg);
      const auto replayed = testing::replay_edge_stats(res);
      for (const auto& node : res.tree.nodes) {
        int sum = 0;
        for (std::size_t c = 0; c < node.children.size(); ++c) {
          const auto& e = node.children[c];
          sum += e.n;
          const auto it = replayed.find({node.node_id, static_cast<int>(c)});
          const testing::EdgeStats s = it == replayed.end() ? testing::EdgeStats{} : it->second;
          const double mean = s.n == 0 ? 0.0 : double(s.wins) / double(s.n);
          if (e.n != s.n || e.wins != s.wins || e.q_emp() != mean) ++local_bad;
        }
        if (sum != node.visit_count) ++local_bad;
        ++local_checks;
      }
    }
    static std::mutex mu;
    std::lock_guard lock(mu);
    bad_bookkeeping += local_bad;
    checks += local_checks;
  });

  int mismatches = 0;
  Rng rng(302);
  for (int t = 0; t < 10000; ++t) {
    mcts::TreeNode node;
    node.expanded = true;
    const int k = 2 + static_cast<int>(rng.below(5));
    std::vector<double> q;
    std::vector<int> n;
    const bool mixed = rng.bernoulli(0.5);
    const double alpha = double(rng.below(5)) / 4.0;
    for (int c = 0; c < k; ++c) {
      mcts::ChildEdge e;
      if (c > 0 && rng.bernoulli(0.3)) {
        e = node.children[rng.below(node.children.size())];
      } else {
        e.n = static_cast<int>(rng.below(12));
        e.wins = e.n == 0 ? 0 : static_cast<int>(rng.below(static_cast<std::size_t>(e.n) + 1));
        e.qhat = double(rng.below(static_cast<std::size_t>(k))) / double(k - 1);
      }
      node.children.push_back(e);
    }
    for (const auto& e : node.children) {
      const double emp = e.n == 0 ? 0.0 : double(e.wins) / double(e.n);
      q.push_back(mixed ? alpha * emp + (1.0 - alpha) * e.qhat : emp);
      n.push_back(e.n);
      node.visit_count += e.n;
    }
    if (node.visit_count == 0) {
      node.children[0].n = 1;
      n[0] = 1;
      node.visit_count = 1;
    }
    const double c_exp = rng.bernoulli(0.2) ? 0.0 : 3.0 * rng.uniform();
    if (mcts::select_child(node, c_exp, mixed, alpha) != testing::naive_ucb_argmax(q, n, node.visit_count, c_exp)) {
      ++mismatches;
    }
  }
  return {bad_bookkeeping == 0 && mismatches == 0,
          "100 searches, " + std::to_string(checks) + " node checks after each rollout, " +
              std::to_string(bad_bookkeeping) + " bookkeeping mismatches; select_child vs naive UCB1 on 10000 tuples, " +
              std::to_string(mismatches) + " mismatches"};
}

// ---------------------------------------------------------------- 4

double mcts_success(const std::vector<env::TaskSpec>& tasks, const agent::Policy& policy, const mcts::SearchConfig& cfg) {
  std::vector<int> wins(tasks.size(), 0);
  parallel_for(tasks.size(), [&](std::size_t i) {
    critic::OracleCritic critic;
    const auto best = mcts::best_path(mcts::run_search(tasks[i], policy, critic, cfg));
    wins[i] = best.terminal ? best.terminal_reward : 0;
  });
  return double(std::accumulate(wins.begin(), wins.end(), 0)) / double(tasks.size());
}

Verdict criterion4() {
  int ok = 0;
  std::string detail;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    env::EnvConfig ec;
    ec.shop.p_deep = 1.0;
    const auto tasks = env::generate_task_set(env::World::Shop, 200, static_cast<std::uint64_t>(seed), ec);
    const agent::SoftmaxPolicy policy(agent::make_prior_policy(env::World::Shop));
    const double zero = trainers::success_rate(trainers::evaluate_zero_shot(policy, tasks));
    mcts::SearchConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(seed);
    const double searched = mcts_success(tasks, policy, cfg);
    const bool pass = searched - zero >= 0.15;
    ok += pass ? 1 : 0;
    detail += " s" + std::to_string(seed) + " " + fmt("%.3f", zero) + "->" + fmt("%.3f", searched);
  }
  return {ok >= 4, std::to_string(ok) + "/5 seeds gain >= 0.15:" + detail};
}

// ---------------------------------------------------------------- 5-7

trainers::TrainConfig acceptance_train(std::uint64_t seed, trainers::Objective obj) {
  trainers::TrainConfig tc;
  tc.seed = seed;
  tc.objective = obj;
  tc.iterations = 1;
  tc.tasks_per_iteration = 50;
  tc.epochs = 300;
  tc.learning_rate = 0.5;
  tc.beta = 2.0;
  return tc;
}

trainers::CriticFactory oracle_critics() {
  return [](const env::TaskSpec&) -> std::unique_ptr<critic::Critic> { return std::make_unique<critic::OracleCritic>(); };
}

struct LoopOutcome {
  double base = 0.0;
  double trained = 0.0;
  trainers::LoopState state;
};

LoopOutcome run_loop(const std::vector<env::TaskSpec>& train, const std::vector<env::TaskSpec>& eval,
                     const agent::PolicyParams& init, const mcts::SearchConfig& sc, const trainers::TrainConfig& tc) {
  LoopOutcome o;
  o.state = trainers::agentq_loop(train, eval, trainers::initial_loop_state(init), oracle_critics(), sc, tc);
  o.base = o.state.metrics.front().eval_success_rate;
  o.trained = o.state.metrics.back().eval_success_rate;
  return o;
}

/// Trains `obj` from `init` on an existing buffer and returns held-out success.
double retrain(const trainers::LoopState& st, const agent::PolicyParams& init, trainers::TrainConfig tc,
               trainers::Objective obj, const std::vector<env::TaskSpec>& eval) {
  tc.objective = obj;
  const auto data = trainers::make_train_data(st.buffer, tc);
  if (data.size() == 0) return trainers::success_rate(trainers::evaluate_zero_shot(agent::SoftmaxPolicy(init), eval));
  const auto tr = trainers::train(init, data, tc);
  return trainers::success_rate(trainers::evaluate_zero_shot(agent::SoftmaxPolicy(tr.state.params), eval));
}

Verdict criterion5() {
  int ok = 0;
  std::string detail;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto s = static_cast<std::uint64_t>(seed);
    env::EnvConfig ec;
    ec.shop.p_deep = 0.7;
    const auto [train, eval] = env::split_tasks(env::generate_task_set(env::World::Shop, 250, s, ec), 50);
    const auto init = agent::make_prior_policy(env::World::Shop);
    mcts::SearchConfig sc;
    sc.seed = s;
    const auto tc = acceptance_train(s, trainers::Objective::StepDpo);
    const auto dpo = run_loop(train, eval, init, sc, tc);
    const double rft = retrain(dpo.state, init, tc, trainers::Objective::Rft, eval);
    const bool pass = dpo.trained - dpo.base >= 0.10 && dpo.trained >= rft;
    ok += pass ? 1 : 0;
    detail += " s" + std::to_string(seed) + " base " + fmt("%.3f", dpo.base) + " step " + fmt("%.3f", dpo.trained) +
              " rft " + fmt("%.3f", rft);
  }
  return {ok >= 4, std::to_string(ok) + "/5 seeds (gain >= 0.10 and step-DPO >= RFT):" + detail};
}

struct BookRun {
  double base = 0.0;
  double step = 0.0;
  double trajectory = 0.0;
  double step_alpha1 = 0.0;
  int min_steps = 0;
};

/// Bookworld runs shared by criteria 6 and 7; whichever runs first pays.
std::vector<BookRun> book_runs() {
  std::vector<BookRun> out;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto s = static_cast<std::uint64_t>(seed);
    const auto [train, eval] = env::split_tasks(env::generate_task_set(env::World::Book, 150, s), 50);
    const auto init = agent::make_prior_policy(env::World::Book);
    mcts::SearchConfig sc;
    sc.seed = s;
    sc.rollout_temperature = 0.3;
    const auto tc = acceptance_train(s, trainers::Objective::StepDpo);
    BookRun b;
    const auto step = run_loop(train, eval, init, sc, tc);
    b.base = step.base;
    b.step = step.trained;
    b.trajectory = retrain(step.state, init, tc, trainers::Objective::TrajectoryDpo, eval);
    auto sc1 = sc;
    sc1.alpha = 1.0;
    b.step_alpha1 = run_loop(train, eval, init, sc1, tc).trained;
    b.min_steps = oracle::kUnreachable;
    for (std::size_t i = 0; i < 10; ++i) {
      oracle::ExactSolver solver;
      auto [st, obs] = env::env_reset(eval[i].world, eval[i], eval[i].layout.seed);
      b.min_steps = std::min(b.min_steps, solver.value(st).dist);
    }
    out.push_back(b);
  }
  return out;
}

std::optional<std::vector<BookRun>> g_book;

const std::vector<BookRun>& book_cache() {
  if (!g_book) g_book = book_runs();
  return *g_book;
}

Verdict criterion6() {
  const auto& runs = book_cache();
  int ok = 0, shortest = oracle::kUnreachable;
  std::string detail;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    ok += runs[i].step >= runs[i].trajectory ? 1 : 0;
    shortest = std::min(shortest, runs[i].min_steps);
    detail += " s" + std::to_string(i + 1) + " step " + fmt("%.3f", runs[i].step) + " traj " +
              fmt("%.3f", runs[i].trajectory);
  }
  return {ok >= 4 && shortest >= 12, std::to_string(ok) + "/5 seeds step-DPO >= trajectory-DPO; shortest solution " +
                                         std::to_string(shortest) + " steps:" + detail};
}

Verdict criterion7() {
  const auto& runs = book_cache();
  int ok = 0;
  std::string detail;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    ok += runs[i].step >= runs[i].step_alpha1 ? 1 : 0;
    detail += " s" + std::to_string(i + 1) + " a0.5 " + fmt("%.3f", runs[i].step) + " a1.0 " +
              fmt("%.3f", runs[i].step_alpha1);
  }
  return {ok >= 3, std::to_string(ok) + "/5 seeds alpha 0.5 >= alpha 1.0 (runs shared with criterion 6):" + detail};
}

// ---------------------------------------------------------------- 8

mcts::SearchTree fuzz_tree(Rng& rng) {
  mcts::SearchTree tree;
  tree.tree_id = "fuzz";
  tree.policy_version = static_cast<int>(rng.below(3));
  const int nodes = 1 + static_cast<int>(rng.below(6));
  for (int id = 0; id < nodes; ++id) {
    mcts::TreeNode node;
    node.node_id = id;
    node.expanded = rng.bernoulli(0.85);
    if (node.expanded) {
      const int k = 2 + static_cast<int>(rng.below(4));
      std::vector<int> ranking(static_cast<std::size_t>(k));
      std::iota(ranking.begin(), ranking.end(), 0);
      rng.shuffle(ranking);
      node.ranking = ranking;
      for (int c = 0; c < k; ++c) {
        mcts::ChildEdge e;
        e.action.thought = "t" + std::to_string(c);
        e.action.part_logps["thought"] = -rng.uniform();
        e.action.part_logps["env"] = -2.0 * rng.uniform();
        e.n = rng.bernoulli(0.2) ? 0 : 1 + static_cast<int>(rng.below(6));
        e.wins = static_cast<int>(rng.below(static_cast<std::size_t>(e.n) + 1));
        node.children.push_back(e);
      }
      for (int rank = 0; rank < k; ++rank) {
        node.children[static_cast<std::size_t>(ranking[static_cast<std::size_t>(rank)])].qhat =
            critic::rank_to_value(rank, k);
      }
    }
    tree.nodes.push_back(node);
  }
  return tree;
}

Verdict criterion8() {
  Rng rng(801);
  int mismatched = 0;
  std::size_t total = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto tree = fuzz_tree(rng);
    const int alpha_q = static_cast<int>(rng.below(5));
    const int theta_e = static_cast<int>(rng.below(5));
    auto got = preference::build_pairs(tree, alpha_q / 4.0, theta_e / 8.0);
    const auto want = testing::enumerate_pairs_exact(tree, alpha_q, theta_e);
    std::sort(got.begin(), got.end(), [](const auto& a, const auto& b) {
      return std::tie(a.node_id, a.winner_index, a.loser_index) < std::tie(b.node_id, b.winner_index, b.loser_index);
    });
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      const auto& g = got[i];
      const auto& w = want[i];
      const auto& node = tree.nodes[static_cast<std::size_t>(w.node)];
      const auto& ew = node.children[static_cast<std::size_t>(w.winner)];
      const auto& el = node.children[static_cast<std::size_t>(w.loser)];
      same = g.node_id == w.node && g.winner_index == w.winner && g.loser_index == w.loser &&
             std::abs(g.q_w - w.q_w) < 1e-12 && std::abs(g.q_l - w.q_l) < 1e-12 && g.winner == ew.action &&
             g.loser == el.action && g.ref_logp_w == ew.action.joint_logp() &&
             g.ref_logp_l == el.action.joint_logp() && g.policy_version == tree.policy_version &&
             g.tree_id == tree.tree_id;
    }
    mismatched += same ? 0 : 1;
    total += want.size();
  }
  return {mismatched == 0, "1000 fuzzed trees, " + std::to_string(total) + " pairs, " + std::to_string(mismatched) +
                               " trees differ from the exact enumerator"};
}

// ---------------------------------------------------------------- 9

Verdict criterion9() {
  std::vector<preference::PreferencePair> pairs;
  std::vector<agent::PolicyParams> refs;
  std::vector<env::World> worlds;
  std::vector<std::size_t> ref_of;
  for (std::uint64_t i = 0; pairs.size() < 1000; ++i) {
    Rng rng(derive_seed(901, i));
    const env::TaskSpec task = random_task(rng);
    refs.push_back(testing::noisy_params(task.world, rng.next_u64(), 0.5));
    refs.back().version = static_cast<int>(i);
    worlds.push_back(task.world);
    const agent::SoftmaxPolicy policy(refs.back());
    testing::RandomCritic critic(rng.next_u64());
    mcts::SearchConfig sc;
    sc.seed = rng.next_u64();
    sc.rollouts_per_task = 16;
    const auto res = mcts::run_search(task, policy, critic, sc, refs.back().version);
    for (auto& p : preference::build_pairs(res.tree, 0.5, 0.0)) {
      pairs.push_back(std::move(p));
      ref_of.push_back(refs.size() - 1);
    }
  }
  pairs.resize(1000);
  double worst = 0.0;
  Rng rng(902);
  // One trained-policy stand-in per source tree.
  std::vector<agent::PolicyParams> currents;
  for (const auto world : worlds) currents.push_back(testing::noisy_params(world, rng.next_u64(), 0.5));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& ref = refs[ref_of[i]];
    const auto& current = currents[ref_of[i]];
    const double beta = 0.5 + rng.uniform();
    const double stored = trainers::dpo_step_loss(current, pairs[i], beta).loss;
    const double live = trainers::dpo_step_loss_live_reference(current, ref, pairs[i], beta);
    worst = std::max(worst, std::abs(stored - live));
  }
  return {worst <= 1e-9, "1000 search-built pairs; max |stored - live| " + fmt("%.2e", worst) + " (<= 1e-9)"};
}

// ---------------------------------------------------------------- 10

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "run.log") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return out;
}

/// Runs every subcommand into root/<name>. Training reads the search output
/// through `staging`, so both runs see identical configurations.
void run_all_subcommands(const fs::path& root, const fs::path& staging) {
  harness::ExperimentConfig base;
  base.world = env::World::Shop;
  base.seed = 42;
  base.tasks = {8, 12, derive_seed(42, "tasks")};
  base.search.rollouts_per_task = 12;
  base.search.seed = derive_seed(42, "search");
  base.train.epochs = 30;
  base.train.iterations = 2;
  base.train.tasks_per_iteration = 6;
  base.train.seed = derive_seed(42, "train");
  base.critic.seed = derive_seed(42, "critic");
  base.critic.kind = harness::CriticKind::Noisy;
  base.critic.noise = 0.2;

  harness::cmd_search(base, (root / "search").string());
  fs::create_directories(staging);
  for (const char* f : {"pairs.jsonl", "trajectories.jsonl"}) {
    fs::copy_file(root / "search" / f, staging / f, fs::copy_options::overwrite_existing);
  }
  for (auto obj : {trainers::Objective::StepDpo, trainers::Objective::TrajectoryDpo, trainers::Objective::Rft}) {
    auto cfg = base;
    cfg.train.objective = obj;
    cfg.data.pairs = (staging / "pairs.jsonl").string();
    cfg.data.trajectories = (staging / "trajectories.jsonl").string();
    harness::cmd_train(cfg, (root / ("train-" + to_string(obj))).string());
  }
  auto eval = base;
  eval.eval.sample = true;
  harness::cmd_eval(eval, (root / "eval-sample").string());
  eval.eval.mode = harness::EvalMode::Mcts;
  harness::cmd_eval(eval, (root / "eval-mcts").string());
  harness::cmd_oracle(base, (root / "oracle").string());
  harness::cmd_loop(base, (root / "loop").string(), false);
}

Verdict criterion10() {
  const fs::path root = fs::temp_directory_path() / ("treeq-determinism-" + std::to_string(::getpid()));
  fs::remove_all(root);
  const char* old = std::getenv("TREEQ_WORKERS");
  const std::string saved = old ? old : "";
  run_all_subcommands(root / "a", root / "staging");
  setenv("TREEQ_WORKERS", "1", 1);
  run_all_subcommands(root / "b", root / "staging");
  if (old) {
    setenv("TREEQ_WORKERS", saved.c_str(), 1);
  } else {
    unsetenv("TREEQ_WORKERS");
  }
  const auto a = snapshot(root / "a");
  const auto b = snapshot(root / "b");
  int differ = 0;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end() || it->second != v) ++differ;
  }
  differ += static_cast<int>(b.size() > a.size() ? b.size() - a.size() : 0);
  fs::remove_all(root);
  return {differ == 0 && !a.empty(), "search, train x3, eval x2, oracle, loop rerun (second run single-threaded): " +
                                         std::to_string(a.size()) + " artifacts, " + std::to_string(differ) +
                                         " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> all = {
      {1, "KL-optimal policy convergence", 30, criterion1},
      {2, "gradient oracle", 10, criterion2},
      {3, "MCTS bookkeeping", 20, criterion3},
      {4, "search-at-inference gain", 180, criterion4},
      {5, "training gain", 600, criterion5},
      {6, "step vs trajectory supervision", 900, criterion6},
      {7, "mixed-Q ablation", 900, criterion7},
      {8, "pair construction equivalence", 10, criterion8},
      {9, "off-policy fidelity", 5, criterion9},
      {10, "determinism", 120, criterion10},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = v.pass && secs < c.limit_s;
    failed += pass ? 0 : 1;
    std::printf("criterion %2d %s: %s [%.1fs, limit %.0fs] %s\n", c.id, c.name, pass ? "PASS" : "FAIL", secs,
                c.limit_s, v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
