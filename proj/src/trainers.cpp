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

#include "treeq/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace treeq::trainers {

std::string to_string(Objective o) {
  switch (o) {
    case Objective::Rft: return "rft";
    case Objective::StepDpo: return "step_dpo";
    case Objective::TrajectoryDpo: return "trajectory_dpo";
  }
  return "step_dpo";
}

Objective objective_from_string(const std::string& s) {
  if (s == "rft") return Objective::Rft;
  if (s == "step_dpo") return Objective::StepDpo;
  if (s == "trajectory_dpo") return Objective::TrajectoryDpo;
  throw ConfigError("unknown training objective '" + s + "' (expected rft, step_dpo or trajectory_dpo)");
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.beta > 0.0)) throw ConfigError("train.beta must be > 0");
  if (!(cfg.learning_rate >= 0.0)) throw ConfigError("train.learning_rate must be >= 0");
  if (cfg.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (cfg.batch_size < 0) throw ConfigError("train.batch_size must be >= 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (cfg.iterations < 0) throw ConfigError("train.iterations must be >= 0");
  if (cfg.tasks_per_iteration < 1) throw ConfigError("train.tasks_per_iteration must be >= 1");
  if (!(cfg.theta >= 0.0)) throw ConfigError("train.theta must be >= 0");
}

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double recorded_logp(const agent::CompositeAction& a) {
  if (a.part_logps.empty()) throw DataError("action is missing reference log-likelihoods");
  const double v = a.joint_logp();
  if (!std::isfinite(v)) throw DataError("action has a non-finite reference log-likelihood");
  return v;
}

void add_scaled(agent::Gradient& into, const agent::Gradient& g, double scale) {
  for (const auto& [k, v] : g) into[k] += scale * v;
}

double sum_logp(const agent::PolicyParams& params, const agent::Trajectory& t) {
  double s = 0.0;
  for (const auto& step : t.steps) s += agent::action_logp(params, step.history, step.action);
  return s;
}

agent::Gradient sum_grad(const agent::PolicyParams& params, const agent::Trajectory& t) {
  agent::Gradient g;
  for (const auto& step : t.steps) add_scaled(g, agent::action_logp_grad(params, step.history, step.action), 1.0);
  return g;
}

double sum_ref(const agent::Trajectory& t) {
  double s = 0.0;
  for (const auto& step : t.steps) s += recorded_logp(step.action);
  return s;
}

}  // namespace

LossGrad dpo_step_loss(const agent::PolicyParams& params, const preference::PreferencePair& pair, double beta) {
  if (!std::isfinite(pair.ref_logp_w) || !std::isfinite(pair.ref_logp_l)) {
    throw DataError("preference pair is missing reference log-likelihoods");
  }
  const double lw = agent::action_logp(params, pair.history, pair.winner);
  const double ll = agent::action_logp(params, pair.history, pair.loser);
  const double z = beta * (lw - pair.ref_logp_w) - beta * (ll - pair.ref_logp_l);
  LossGrad out;
  out.loss = softplus(-z);
  const double c = -sigmoid(-z) * beta;
  add_scaled(out.grad, agent::action_logp_grad(params, pair.history, pair.winner), c);
  add_scaled(out.grad, agent::action_logp_grad(params, pair.history, pair.loser), -c);
  return out;
}

double dpo_step_loss_live_reference(const agent::PolicyParams& params, const agent::PolicyParams& reference,
                                    const preference::PreferencePair& pair, double beta) {
  const double rw = agent::action_logp(reference, pair.history, pair.winner);
  const double rl = agent::action_logp(reference, pair.history, pair.loser);
  const double lw = agent::action_logp(params, pair.history, pair.winner);
  const double ll = agent::action_logp(params, pair.history, pair.loser);
  return softplus(-(beta * (lw - rw) - beta * (ll - rl)));
}

LossGrad dpo_trajectory_loss(const agent::PolicyParams& params, const preference::TrajectoryPair& pair,
                             double beta) {
  const double z = beta * (sum_logp(params, pair.winner) - sum_ref(pair.winner)) -
                   beta * (sum_logp(params, pair.loser) - sum_ref(pair.loser));
  LossGrad out;
  out.loss = softplus(-z);
  const double c = -sigmoid(-z) * beta;
  add_scaled(out.grad, sum_grad(params, pair.winner), c);
  add_scaled(out.grad, sum_grad(params, pair.loser), -c);
  return out;
}

LossGrad rft_loss(const agent::PolicyParams& params, const std::vector<agent::Trajectory>& dataset) {
  if (dataset.empty()) throw DataError("RFT dataset is empty");
  const double n = static_cast<double>(dataset.size());
  LossGrad out;
  for (const auto& t : dataset) {
    out.loss -= sum_logp(params, t) / n;
    add_scaled(out.grad, sum_grad(params, t), -1.0 / n);
  }
  return out;
}

std::size_t TrainData::size() const {
  switch (objective) {
    case Objective::Rft: return trajectories.size();
    case Objective::StepDpo: return pairs.size();
    case Objective::TrajectoryDpo: return trajectory_pairs.size();
  }
  return 0;
}

// ---------------------------------------------------------------- training

namespace {

/// One weight-independent training item: the compiled actions on each side
/// and the summed reference log-likelihoods.
struct Item {
  std::vector<agent::CompiledAction> win;
  std::vector<agent::CompiledAction> lose;
  double ref_w = 0.0;
  double ref_l = 0.0;
  double weight = 1.0;
};

std::vector<agent::CompiledAction> compile_traj(const agent::PolicyParams& p, const agent::Trajectory& t) {
  std::vector<agent::CompiledAction> out;
  for (const auto& s : t.steps) out.push_back(agent::compile(p, s.history, s.action));
  return out;
}

std::vector<Item> compile_data(const agent::PolicyParams& p, const TrainData& data) {
  std::vector<Item> items;
  switch (data.objective) {
    case Objective::StepDpo:
      for (const auto& pr : data.pairs) {
        if (!std::isfinite(pr.ref_logp_w) || !std::isfinite(pr.ref_logp_l)) {
          throw DataError("preference pair is missing reference log-likelihoods");
        }
        items.push_back({{agent::compile(p, pr.history, pr.winner)},
                         {agent::compile(p, pr.history, pr.loser)},
                         pr.ref_logp_w,
                         pr.ref_logp_l,
                         pr.weight});
      }
      break;
    case Objective::TrajectoryDpo:
      for (const auto& pr : data.trajectory_pairs) {
        items.push_back({compile_traj(p, pr.winner), compile_traj(p, pr.loser), sum_ref(pr.winner),
                         sum_ref(pr.loser), 1.0});
      }
      break;
    case Objective::Rft:
      for (const auto& t : data.trajectories) items.push_back({compile_traj(p, t), {}, 0.0, 0.0, 1.0});
      break;
  }
  return items;
}

struct Eval {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<double> grad;
};

Eval evaluate(const agent::PolicyParams& p, Objective obj, double beta, const std::vector<Item>& items,
              const std::vector<std::size_t>& idx) {
  Eval e;
  e.grad.assign(p.dimension(), 0.0);
  double total_w = 0.0;
  for (auto i : idx) total_w += items[i].weight;
  const std::span<const double> w(p.weights);
  const double T = p.temperature;
  for (auto i : idx) {
    const Item& it = items[i];
    const double wt = it.weight / total_w;
    double lw = 0.0;
    for (const auto& ca : it.win) lw += agent::compiled_logp(w, T, ca);
    if (obj == Objective::Rft) {
      e.loss -= wt * lw;
      e.accuracy += wt;
      for (const auto& ca : it.win) agent::accumulate_grad(w, T, ca, -wt, e.grad);
      continue;
    }
    double ll = 0.0;
    for (const auto& ca : it.lose) ll += agent::compiled_logp(w, T, ca);
    const double z = beta * (lw - it.ref_w) - beta * (ll - it.ref_l);
    e.loss += wt * softplus(-z);
    if (z > 0) e.accuracy += wt;
    const double c = -sigmoid(-z) * beta * wt;
    for (const auto& ca : it.win) agent::accumulate_grad(w, T, ca, c, e.grad);
    for (const auto& ca : it.lose) agent::accumulate_grad(w, T, ca, -c, e.grad);
  }
  return e;
}

double norm(const std::vector<double>& g) {
  double s = 0.0;
  for (double x : g) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TrainResult train(const TrainState& start, const TrainData& data, const TrainConfig& cfg,
                  std::optional<int> stop_after) {
  validate(cfg);
  if (data.size() == 0) throw DataError("no training data for objective " + to_string(data.objective));
  TrainResult out;
  out.state = start;
  auto& st = out.state;
  if (st.velocity.empty()) st.velocity.assign(st.params.dimension(), 0.0);
  if (st.velocity.size() != st.params.dimension()) throw DataError("optimizer state dimension mismatch");
  const auto items = compile_data(st.params, data);
  std::vector<std::size_t> all(items.size());
  std::iota(all.begin(), all.end(), 0);
  const int end = std::min(cfg.epochs, stop_after.value_or(cfg.epochs));

  auto apply = [&](const std::vector<double>& g) {
    for (std::size_t k = 0; k < g.size(); ++k) {
      st.velocity[k] = cfg.momentum * st.velocity[k] + g[k];
      st.params.weights[k] -= cfg.learning_rate * st.velocity[k];
    }
  };

  for (int epoch = st.epoch; epoch < end; ++epoch) {
    Eval full = evaluate(st.params, data.objective, cfg.beta, items, all);
    const double gn = norm(full.grad);
    out.reports.push_back({epoch, full.loss, gn, full.accuracy});
    if (!std::isfinite(full.loss) || !std::isfinite(gn) || gn > cfg.divergence_threshold) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "training diverged at epoch %d: loss %.6g, grad_norm %.6g (limit %.6g)", epoch,
                    full.loss, gn, cfg.divergence_threshold);
      throw DivergenceError(buf);
    }
    if (cfg.batch_size == 0 || static_cast<std::size_t>(cfg.batch_size) >= items.size()) {
      apply(full.grad);
    } else {
      std::vector<std::size_t> order = all;
      Rng rng(derive_seed(cfg.seed, "epoch:" + std::to_string(epoch)));
      rng.shuffle(order);
      for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
        std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b),
                                       order.begin() + static_cast<std::ptrdiff_t>(
                                                           std::min(order.size(), b + cfg.batch_size)));
        apply(evaluate(st.params, data.objective, cfg.beta, items, batch).grad);
      }
    }
    st.epoch = epoch + 1;
  }
  return out;
}

TrainResult train(const agent::PolicyParams& init, const TrainData& data, const TrainConfig& cfg) {
  return train(TrainState{init, {}, 0}, data, cfg);
}

LossReport evaluate_loss(const agent::PolicyParams& params, const TrainData& data, const TrainConfig& cfg) {
  if (data.size() == 0) throw DataError("no training data for objective " + to_string(data.objective));
  const auto items = compile_data(params, data);
  std::vector<std::size_t> all(items.size());
  std::iota(all.begin(), all.end(), 0);
  const Eval e = evaluate(params, data.objective, cfg.beta, items, all);
  return {0, e.loss, norm(e.grad), e.accuracy};
}

TrainData make_train_data(const preference::ReplayBuffer& buffer, const TrainConfig& cfg) {
  TrainData d;
  d.objective = cfg.objective;
  switch (cfg.objective) {
    case Objective::StepDpo: d.pairs = buffer.pairs(); break;
    case Objective::TrajectoryDpo:
      d.trajectory_pairs = preference::build_trajectory_pairs(buffer, cfg.trajectory_pair_cap, cfg.seed);
      break;
    case Objective::Rft: d.trajectories = preference::build_rft_dataset(buffer); break;
  }
  return d;
}

// ---------------------------------------------------------------- loop

std::vector<TaskOutcome> evaluate_zero_shot(const agent::Policy& policy, const std::vector<env::TaskSpec>& tasks) {
  std::vector<TaskOutcome> out(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    const auto& t = tasks[i];
    auto [s, obs] = env::env_reset(t.world, t, t.layout.seed);
    const auto traj = agent::rollout(policy, s, agent::initial_history(t, obs), t.layout.horizon,
                                     agent::Decode::Greedy, 0);
    out[i] = {t.task_id, traj.terminal ? traj.terminal_reward : 0, traj.total_steps};
  });
  return out;
}

double success_rate(const std::vector<TaskOutcome>& outcomes) {
  if (outcomes.empty()) return 0.0;
  double s = 0.0;
  for (const auto& o : outcomes) s += o.reward;
  return s / static_cast<double>(outcomes.size());
}

LoopState initial_loop_state(const agent::PolicyParams& params0) {
  LoopState s;
  s.params = params0;
  return s;
}

LoopState agentq_loop(const std::vector<env::TaskSpec>& train_tasks, const std::vector<env::TaskSpec>& eval_tasks,
                      LoopState state, const CriticFactory& make_critic, const mcts::SearchConfig& search_cfg,
                      const TrainConfig& train_cfg, const LoopHooks& hooks) {
  validate(train_cfg);
  mcts::validate(search_cfg);
  if (train_tasks.empty()) throw ConfigError("agentq_loop needs at least one training task");
  if (state.metrics.empty()) {
    IterationMetrics m;
    m.eval_success_rate = success_rate(evaluate_zero_shot(agent::SoftmaxPolicy(state.params), eval_tasks));
    state.metrics.push_back(m);
    if (hooks.on_iteration) hooks.on_iteration(state, {});
  }
  for (int i = state.iteration + 1; i <= train_cfg.iterations; ++i) {
    std::vector<std::size_t> idx(train_tasks.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(train_cfg.seed, "tasks:" + std::to_string(i)));
    rng.shuffle(idx);
    idx.resize(std::min(idx.size(), static_cast<std::size_t>(train_cfg.tasks_per_iteration)));
    std::sort(idx.begin(), idx.end());

    const agent::SoftmaxPolicy policy(state.params, 8, search_cfg.rollout_temperature);
    mcts::SearchConfig scfg = search_cfg;
    scfg.seed = derive_seed(search_cfg.seed, "iteration:" + std::to_string(i));
    std::vector<mcts::SearchResult> results(idx.size());
    parallel_for(idx.size(), [&](std::size_t k) {
      const auto& task = train_tasks[idx[k]];
      auto critic = make_critic(task);
      results[k] = mcts::run_search(task, policy, *critic, scfg, state.params.version);
    });
    for (const auto& r : results) {
      state.buffer.add_trajectories(r.trajectories);
      state.buffer.add_pairs(preference::build_pairs(r.tree, search_cfg.alpha, train_cfg.theta));
    }

    IterationMetrics m;
    m.iteration = i;
    const TrainData data = make_train_data(state.buffer, train_cfg);
    if (data.size() > 0) {
      TrainResult tr = train(state.params, data, train_cfg);
      state.params = std::move(tr.state.params);
      if (!tr.reports.empty()) {
        m.loss = tr.reports.back().loss;
        m.pair_accuracy = tr.reports.back().pair_accuracy;
      }
    }
    state.params.version = i;
    m.eval_success_rate = success_rate(evaluate_zero_shot(agent::SoftmaxPolicy(state.params), eval_tasks));
    m.buffer_pairs = state.buffer.pairs().size();
    m.buffer_trajectories = state.buffer.trajectories().size();
    state.metrics.push_back(m);
    state.iteration = i;
    if (hooks.on_iteration) hooks.on_iteration(state, results);
  }
  return state;
}

}  // namespace treeq::trainers
