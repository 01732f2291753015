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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "treeq/harness.hpp"

using namespace treeq;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("treeq-harness-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

harness::ExperimentConfig small_config() {
  return harness::config_from_json(Json{{"world", "shopworld"},
                                        {"seed", 5},
                                        {"tasks", {{"train", 4}, {"eval", 6}}},
                                        {"search", {{"rollouts_per_task", 6}}},
                                        {"train", {{"epochs", 10}, {"iterations", 2}, {"tasks_per_iteration", 3}}}});
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(TREEQ_BIN) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("defaults and derived seeds") {
    const auto c = harness::config_from_json(Json::object());
    CHECK(c.world == env::World::Shop);
    CHECK(c.tasks.train == 50);
    CHECK(c.tasks.eval == 200);
    CHECK(c.search.seed == derive_seed(0, "search"));
    CHECK(c.train.seed == derive_seed(0, "train"));
    const auto o = harness::config_from_json(Json{{"seed", 1}, {"search", {{"seed", 77}}}}, 9);
    CHECK(o.seed == 9);
    CHECK(o.search.seed == 77);
    CHECK(o.tasks.seed == derive_seed(9, "tasks"));
  }

  TEST_CASE("strict config parsing") {
    CHECK_THROWS_WITH_AS(harness::config_from_json(Json{{"sede", 1}}), doctest::Contains("sede"), ConfigError);
    CHECK_THROWS_WITH_AS(harness::config_from_json(Json{{"search", {{"kk", 3}}}}), doctest::Contains("search.kk"),
                         ConfigError);
    CHECK_THROWS_AS(harness::config_from_json(Json{{"search", {{"k", "five"}}}}), ConfigError);
    CHECK_THROWS_AS(harness::config_from_json(Json{{"search", {{"k", 1}}}}), ConfigError);
    CHECK_THROWS_AS(harness::config_from_json(Json{{"world", "mars"}}), Error);
    CHECK_THROWS_AS(harness::config_from_json(Json{{"env", {{"shop", {{"p_deep", 2.0}}}}}}), ConfigError);
    CHECK_THROWS_AS(harness::config_from_json(Json{{"critic", {{"kind", "external"}}}}), ConfigError);
    CHECK_THROWS_AS(harness::config_from_json(Json{{"policy", {{"kind", "checkpoint"}}}}), ConfigError);
    CHECK_THROWS_AS(harness::config_from_json(Json{{"eval", {{"mode", "fast"}}}}), ConfigError);
    CHECK_THROWS_AS(harness::config_from_json(Json{{"train", 3}}), ConfigError);
    CHECK_THROWS_AS(harness::load_config("/nonexistent/config.json"), ConfigError);
  }

  TEST_CASE("resolved config round trips and hashes stably") {
    const auto c = small_config();
    const auto back = harness::config_from_json(harness::config_to_json(c));
    CHECK(harness::config_to_json(back) == harness::config_to_json(c));
    CHECK(harness::config_hash(back) == harness::config_hash(c));
    CHECK(harness::config_hash(c).size() == 16);
    auto moved = c;
    moved.output_dir = "elsewhere";
    moved.train.iterations = 7;
    CHECK(harness::config_hash(moved) == harness::config_hash(c));
    auto changed = c;
    changed.search.k = 3;
    CHECK(harness::config_hash(changed) != harness::config_hash(c));
  }

  TEST_CASE("Wilson interval") {
    auto ci = harness::binomial_ci95(5, 10);
    CHECK(ci.low == doctest::Approx(0.23659309051256394));
    CHECK(ci.high == doctest::Approx(0.7634069094874361));
    ci = harness::binomial_ci95(0, 20);
    CHECK(ci.low == 0.0);
    CHECK(ci.high == doctest::Approx(0.1611251580528194));
    ci = harness::binomial_ci95(37, 200);
    CHECK(ci.low == doctest::Approx(0.13730192800616045));
    CHECK(ci.high == doctest::Approx(0.24457062761151752));
  }

  TEST_CASE("exit codes") {
    CHECK(harness::exit_code_for(ConfigError("x")) == 2);
    CHECK(harness::exit_code_for(DataError("x")) == 3);
    CHECK(harness::exit_code_for(DivergenceError("x")) == 4);
    CHECK(harness::exit_code_for(std::runtime_error("x")) == 1);
  }

  TEST_CASE("task split") {
    const auto c = small_config();
    const auto train = harness::train_tasks(c);
    const auto eval = harness::eval_tasks(c);
    CHECK(train.size() == 4);
    CHECK(eval.size() == 6);
    CHECK(train.back().task_id < eval.front().task_id);
  }

  TEST_CASE("search, train and eval artifacts") {
    const auto dir = scratch("pipeline");
    auto c = small_config();
    const auto s = harness::cmd_search(c, (dir / "s").string());
    CHECK(s.tasks == 4);
    CHECK(s.trajectories == 24);
    for (const char* f : {"resolved_config.json", "run.log", "summary.csv", "pairs.jsonl", "trajectories.jsonl"}) {
      CHECK(fs::exists(dir / "s" / f));
    }
    CHECK(std::distance(fs::directory_iterator(dir / "s" / "trees"), fs::directory_iterator{}) == 4);

    c.train.objective = trainers::Objective::Rft;
    CHECK_THROWS_AS(harness::cmd_train(c, (dir / "t").string()), ConfigError);
    c.data.trajectories = (dir / "missing.jsonl").string();
    CHECK_THROWS_AS(harness::cmd_train(c, (dir / "t").string()), DataError);
    c.data.trajectories = (dir / "s" / "trajectories.jsonl").string();
    const auto t = harness::cmd_train(c, (dir / "t").string());
    CHECK(t.epochs == 10);
    CHECK(std::isfinite(t.final_loss));

    auto e = small_config();
    e.policy.kind = harness::PolicyKind::Checkpoint;
    e.policy.checkpoint = t.checkpoint_path;
    const auto rep = harness::cmd_eval(e, (dir / "e").string());
    CHECK(rep.outcomes.size() == 6);
    CHECK(rep.ci.low <= rep.success_rate);
    CHECK(rep.success_rate <= rep.ci.high);
    const Json report = read_json_file((dir / "e" / "report.json").string());
    CHECK(report.at("config_hash") == harness::config_hash(e));

    auto opt = small_config();
    opt.policy.kind = harness::PolicyKind::ScriptedOptimal;
    CHECK(harness::cmd_eval(opt, (dir / "opt").string()).success_rate == 1.0);
    auto uni = small_config();
    uni.policy.kind = harness::PolicyKind::Uniform;
    CHECK_NOTHROW(harness::cmd_eval(uni, (dir / "uni").string()));
    fs::remove_all(dir);
  }

  TEST_CASE("train resumes from a checkpoint") {
    const auto dir = scratch("resume-train");
    auto c = small_config();
    harness::cmd_search(c, (dir / "s").string());
    c.data.pairs = (dir / "s" / "pairs.jsonl").string();
    c.train.objective = trainers::Objective::StepDpo;
    harness::cmd_train(c, (dir / "full").string());
    auto a = c;
    a.data.stop_after_epoch = 4;
    harness::cmd_train(a, (dir / "a").string());
    auto b = c;
    b.data.resume_checkpoint = (dir / "a" / "checkpoint.json").string();
    harness::cmd_train(b, (dir / "b").string());
    CHECK(read_text_file((dir / "b" / "checkpoint.json").string()) ==
          read_text_file((dir / "full" / "checkpoint.json").string()));
    CHECK(read_text_file((dir / "b" / "metrics.csv").string()) ==
          read_text_file((dir / "full" / "metrics.csv").string()));
    auto other = b;
    other.train.beta = 3.0;
    CHECK_THROWS_AS(harness::cmd_train(other, (dir / "x").string()), ConfigError);
    fs::remove_all(dir);
  }

  TEST_CASE("loop resumes and detects missing artifacts") {
    const auto dir = scratch("resume-loop");
    auto one = small_config();
    one.train.iterations = 1;
    harness::cmd_loop(one, (dir / "r").string(), false);
    const auto resumed = harness::cmd_loop(small_config(), (dir / "r").string(), true);
    const auto fresh = harness::cmd_loop(small_config(), (dir / "f").string(), false);
    REQUIRE(resumed.metrics.size() == 3);
    CHECK(read_text_file((dir / "r" / "metrics.csv").string()) == read_text_file((dir / "f" / "metrics.csv").string()));
    CHECK(read_text_file((dir / "r" / "iter-2" / "checkpoint.json").string()) ==
          read_text_file((dir / "f" / "iter-2" / "checkpoint.json").string()));
    fs::remove(dir / "f" / "iter-1" / "pairs.jsonl");
    CHECK_THROWS_WITH_AS(harness::cmd_loop(small_config(), (dir / "f").string(), true),
                         doctest::Contains("missing artifact"), DataError);
    CHECK_THROWS_AS(harness::cmd_loop(small_config(), (dir / "empty").string(), true), DataError);
    fs::remove_all(dir);
  }

  TEST_CASE("oracle subcommand") {
    const auto dir = scratch("oracle");
    const auto s = harness::cmd_oracle(small_config(), dir.string());
    CHECK(s.tasks == 6);
    CHECK(s.solvable == 6);
    fs::remove_all(dir);
  }

  TEST_CASE("command line exit codes") {
    const auto dir = scratch("cli");
    std::ofstream(dir / "bad.json") << "{\"unknown\": 1}";
    std::ofstream(dir / "good.json") << "{\"tasks\": {\"train\": 2, \"eval\": 2}, \"search\": {\"rollouts_per_task\": 2}}";
    std::ofstream(dir / "train.json") << "{\"data\": {\"pairs\": \"" + (dir / "none.jsonl").string() + "\"}}";
    CHECK(run_cli("eval --config " + (dir / "bad.json").string()) == 2);
    CHECK(run_cli("eval --config " + (dir / "missing.json").string()) == 2);
    CHECK(run_cli("train --config " + (dir / "train.json").string() + " --out " + (dir / "t").string()) == 3);
    CHECK(run_cli("fly --config x") == 2);
    CHECK(run_cli("search --config " + (dir / "good.json").string() + " --out " + (dir / "s").string()) == 0);
    CHECK(run_cli("eval --config " + (dir / "good.json").string() + " --seed 4 --out " + (dir / "e").string()) == 0);
    const Json resolved = read_json_file((dir / "e" / "resolved_config.json").string());
    CHECK(resolved.at("seed") == 4);
    fs::remove_all(dir);
  }
}
