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

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "treeq/harness.hpp"

using namespace treeq;

int main(int argc, char** argv) {
  CLI::App app{"Tree-search agent training harness"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool resume = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--out", out, "output directory (default: output_dir from the config)");
    sub->add_option("--seed", seed, "override the top-level seed");
  };
  auto* search = app.add_subcommand("search", "run tree search on the training tasks");
  auto* train = app.add_subcommand("train", "train a policy from saved pairs or trajectories");
  auto* eval = app.add_subcommand("eval", "evaluate a policy on the held-out tasks");
  auto* oracle = app.add_subcommand("oracle", "solve the held-out tasks exactly");
  auto* loop = app.add_subcommand("loop", "alternate search and training");
  for (auto* sub : {search, train, eval, oracle, loop}) add_common(sub);
  loop->add_flag("--resume", resume, "continue from the last completed iteration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const harness::ExperimentConfig cfg = harness::load_config(config_path, seed);
    const std::string dir = out.empty() ? cfg.output_dir : out;
    if (search->parsed()) {
      const auto s = harness::cmd_search(cfg, dir);
      std::cout << "search: " << s.tasks << " tasks, " << s.trajectories << " trajectories, " << s.successes
                << " successes, " << s.pairs << " pairs\n";
    } else if (train->parsed()) {
      const auto s = harness::cmd_train(cfg, dir);
      std::cout << "train: epoch " << s.epochs << ", final loss " << s.final_loss << ", checkpoint "
                << s.checkpoint_path << "\n";
    } else if (eval->parsed()) {
      const auto r = harness::cmd_eval(cfg, dir);
      std::cout << "eval (" << harness::to_string(r.mode) << "): " << r.successes << "/" << r.outcomes.size()
                << " success rate " << r.success_rate << " [" << r.ci.low << ", " << r.ci.high << "]\n";
    } else if (oracle->parsed()) {
      const auto s = harness::cmd_oracle(cfg, dir);
      std::cout << "oracle: " << s.solvable << "/" << s.tasks << " solvable\n";
    } else {
      const auto r = harness::cmd_loop(cfg, dir, resume);
      const auto& last = r.metrics.back();
      std::cout << "loop: " << last.iteration << " iterations, success " << r.metrics.front().eval_success_rate
                << " -> " << last.eval_success_rate << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "treeq: " << e.what() << "\n";
    return harness::exit_code_for(e);
  }
}
