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

// Experiment driver behind the treeq command line: configuration, the five
// subcommands and their on-disk artifacts.
//
// Every artifact carries the hash of the resolved configuration that made
// it. Timestamps appear only in run.log, so reruns of the same configuration
// produce byte-identical artifacts.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "treeq/env.hpp"
#include "treeq/mcts.hpp"
#include "treeq/policy.hpp"
#include "treeq/serialize.hpp"
#include "treeq/trainers.hpp"

namespace treeq::harness {

enum class CriticKind { Oracle, Noisy, External };
enum class PolicyKind { Prior, Checkpoint, ScriptedOptimal, Uniform, External };
enum class EvalMode { ZeroShot, Mcts };

std::string to_string(CriticKind k);
std::string to_string(PolicyKind k);
std::string to_string(EvalMode m);

struct TaskSplit {
  int train = 50;
  int eval = 200;
  std::uint64_t seed = 0;
};

struct CriticSpec {
  CriticKind kind = CriticKind::Oracle;
  double noise = 0.0;
  std::uint64_t seed = 0;
  /// argv of the adapter process for the external kind.
  std::vector<std::string> command;
  int timeout_ms = 10'000;
};

struct PolicySpec {
  PolicyKind kind = PolicyKind::Prior;
  std::string checkpoint;
  agent::PriorConfig prior;
  std::vector<std::string> command;
  int timeout_ms = 10'000;
};

struct EvalSpec {
  EvalMode mode = EvalMode::ZeroShot;
  /// Sample actions instead of decoding greedily (zero_shot only).
  bool sample = false;
};

struct OracleSpec {
  int depth_limit = 6;
  std::int64_t max_states = static_cast<std::int64_t>(oracle::kDefaultMaxStates);
};

/// Inputs of the train subcommand.
struct DataSpec {
  std::string pairs;
  std::string trajectories;
  /// Checkpoint to continue training from (same configuration).
  std::string resume_checkpoint;
  /// Stop after this many epochs in total; 0 runs all configured epochs.
  int stop_after_epoch = 0;
};

struct ExperimentConfig {
  env::World world = env::World::Shop;
  std::uint64_t seed = 0;
  TaskSplit tasks;
  env::EnvConfig env;
  mcts::SearchConfig search;
  trainers::TrainConfig train;
  CriticSpec critic;
  PolicySpec policy;
  EvalSpec eval;
  OracleSpec oracle;
  DataSpec data;
  std::string output_dir = "out";
};

/// Parses a configuration object. Absent fields take documented defaults;
/// sub-seeds absent from the file derive from the top-level seed, which
/// `seed_override` replaces. Unknown keys and wrong types raise ConfigError.
ExperimentConfig config_from_json(const Json& j, std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override = std::nullopt);

/// Every field, defaults included.
Json config_to_json(const ExperimentConfig& cfg);

/// Throws ConfigError on out-of-range values and on inconsistent settings.
void validate(const ExperimentConfig& cfg);

/// 16 hex digits of FNV-1a over the resolved configuration without its
/// output directory.
std::string config_hash(const ExperimentConfig& cfg);

/// Training tasks are the first tasks.train of the generated set; evaluation
/// tasks are the rest, so the two never overlap.
std::vector<env::TaskSpec> train_tasks(const ExperimentConfig& cfg);
std::vector<env::TaskSpec> eval_tasks(const ExperimentConfig& cfg);

/// Wilson score interval.
struct Interval {
  double low = 0.0;
  double high = 0.0;
};
Interval binomial_ci95(int successes, int n);

/// Process exit code for an error escaping a subcommand: 2 configuration, 3
/// data, 4 numerical divergence, 1 anything else.
int exit_code_for(const std::exception& e);

struct SearchSummary {
  int tasks = 0;
  int trajectories = 0;
  int successes = 0;
  int pairs = 0;
};

struct TrainSummary {
  int epochs = 0;
  double final_loss = 0.0;
  std::string checkpoint_path;
};

struct EvalReport {
  EvalMode mode = EvalMode::ZeroShot;
  std::vector<trainers::TaskOutcome> outcomes;
  int successes = 0;
  double success_rate = 0.0;
  Interval ci;
};

struct OracleSummary {
  int tasks = 0;
  int solvable = 0;
};

struct LoopReport {
  std::vector<trainers::IterationMetrics> metrics;
};

// Each subcommand creates out_dir, echoes resolved_config.json into it and
// appends to out_dir/run.log.

/// trees/<task>.json and rollouts/<task>.jsonl per training task, the
/// replay buffer (pairs.jsonl, trajectories.jsonl) and summary.csv.
SearchSummary cmd_search(const ExperimentConfig& cfg, const std::string& out_dir);

/// checkpoint.json and metrics.csv (one row per epoch).
TrainSummary cmd_train(const ExperimentConfig& cfg, const std::string& out_dir);

/// outcomes.csv and report.json over the evaluation tasks.
EvalReport cmd_eval(const ExperimentConfig& cfg, const std::string& out_dir);

/// oracle/<task>.json per evaluation task and summary.csv.
OracleSummary cmd_oracle(const ExperimentConfig& cfg, const std::string& out_dir);

/// iter-<i>/{checkpoint.json,pairs.jsonl,trajectories.jsonl}, metrics.csv
/// and report.json. With resume, continues after the last complete
/// iteration found in out_dir; a missing artifact raises DataError.
LoopReport cmd_loop(const ExperimentConfig& cfg, const std::string& out_dir, bool resume = false);

/// Parameters stored in a checkpoint written by cmd_train or cmd_loop.
agent::PolicyParams load_checkpoint_params(const std::string& path);

}  // namespace treeq::harness
