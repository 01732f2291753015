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

// Reward-filtered fine-tuning, trajectory-level DPO and step-level DPO on
// stored reference likelihoods, optimized by full-batch (or seeded
// mini-batch) gradient descent, plus the outer search-and-train loop.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "treeq/critic.hpp"
#include "treeq/mcts.hpp"
#include "treeq/policy.hpp"
#include "treeq/preference.hpp"

namespace treeq::trainers {

enum class Objective { Rft, StepDpo, TrajectoryDpo };

std::string to_string(Objective o);
Objective objective_from_string(const std::string& s);

struct TrainConfig {
  double beta = 1.0;
  double learning_rate = 0.1;
  int epochs = 300;
  /// 0 trains on the full batch each step.
  int batch_size = 0;
  double momentum = 0.0;
  Objective objective = Objective::StepDpo;
  int iterations = 1;
  int tasks_per_iteration = 50;
  int trajectory_pair_cap = 8;
  /// Minimum mixed-Q gap for a step-level pair.
  double theta = 0.25;
  double divergence_threshold = 1e6;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct LossReport {
  int epoch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  /// Fraction of pairs with a positive implied reward margin (1 for RFT).
  double pair_accuracy = 0.0;
};

struct LossGrad {
  double loss = 0.0;
  agent::Gradient grad;
};

/// -log sigmoid(beta (logpi(w) - ref_w) - beta (logpi(l) - ref_l)).
LossGrad dpo_step_loss(const agent::PolicyParams& params, const preference::PreferencePair& pair, double beta);

/// The same loss with reference log-likelihoods evaluated live under a
/// frozen policy instead of read from the pair.
double dpo_step_loss_live_reference(const agent::PolicyParams& params, const agent::PolicyParams& reference,
                                    const preference::PreferencePair& pair, double beta);

/// Sums each trajectory's per-step log-ratios over its own length.
LossGrad dpo_trajectory_loss(const agent::PolicyParams& params, const preference::TrajectoryPair& pair,
                             double beta);

/// Negative mean over trajectories of the summed action log-likelihoods.
LossGrad rft_loss(const agent::PolicyParams& params, const std::vector<agent::Trajectory>& dataset);

struct TrainData {
  Objective objective = Objective::StepDpo;
  std::vector<preference::PreferencePair> pairs;
  std::vector<preference::TrajectoryPair> trajectory_pairs;
  std::vector<agent::Trajectory> trajectories;

  std::size_t size() const;
};

/// Optimizer state sufficient to resume training exactly.
struct TrainState {
  agent::PolicyParams params;
  std::vector<double> velocity;
  int epoch = 0;
};

struct TrainResult {
  TrainState state;
  std::vector<LossReport> reports;
};

/// Runs epochs state.epoch .. min(cfg.epochs, stop_after) - 1. Each epoch
/// records a report at its starting parameters and then applies its updates.
/// Throws DataError on empty data and DivergenceError when the gradient norm
/// exceeds cfg.divergence_threshold or the loss is not finite.
TrainResult train(const TrainState& start, const TrainData& data, const TrainConfig& cfg,
                  std::optional<int> stop_after = std::nullopt);

/// Convenience overload starting from parameters at epoch 0.
TrainResult train(const agent::PolicyParams& init, const TrainData& data, const TrainConfig& cfg);

/// Full-data loss, gradient norm and pair accuracy at the given parameters.
LossReport evaluate_loss(const agent::PolicyParams& params, const TrainData& data, const TrainConfig& cfg);

/// Builds the training set for an objective from a buffer.
TrainData make_train_data(const preference::ReplayBuffer& buffer, const TrainConfig& cfg);

// ---------------------------------------------------------------- loop

struct TaskOutcome {
  std::string task_id;
  int reward = 0;
  int steps = 0;
};

/// Greedy decoding of a policy on each task from reset to terminal.
std::vector<TaskOutcome> evaluate_zero_shot(const agent::Policy& policy, const std::vector<env::TaskSpec>& tasks);

double success_rate(const std::vector<TaskOutcome>& outcomes);

using CriticFactory = std::function<std::unique_ptr<critic::Critic>(const env::TaskSpec&)>;

struct IterationMetrics {
  int iteration = 0;
  double loss = 0.0;
  double pair_accuracy = 0.0;
  double eval_success_rate = 0.0;
  std::size_t buffer_pairs = 0;
  std::size_t buffer_trajectories = 0;
};

struct LoopState {
  int iteration = 0;
  agent::PolicyParams params;
  preference::ReplayBuffer buffer;
  std::vector<IterationMetrics> metrics;
};

struct LoopHooks {
  /// Called after every completed iteration (including the iteration-0
  /// evaluation) with the state to persist.
  std::function<void(const LoopState&, const std::vector<mcts::SearchResult>&)> on_iteration;
};

/// Algorithm loop. Iteration 0 only evaluates the starting policy. Each
/// later iteration samples B training tasks, searches them with the current
/// policy, appends trajectories and pairs to the buffer, trains on the whole
/// buffer from the current parameters and evaluates greedily on eval_tasks.
LoopState agentq_loop(const std::vector<env::TaskSpec>& train_tasks, const std::vector<env::TaskSpec>& eval_tasks,
                      LoopState state, const CriticFactory& make_critic, const mcts::SearchConfig& search_cfg,
                      const TrainConfig& train_cfg, const LoopHooks& hooks = {});

/// Starts a loop state from initial parameters.
LoopState initial_loop_state(const agent::PolicyParams& params0);

}  // namespace treeq::trainers
