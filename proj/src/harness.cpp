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

#include "treeq/harness.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>

#include "treeq/adapter.hpp"
#include "treeq/critic.hpp"
#include "treeq/oracle.hpp"
#include "treeq/preference.hpp"

namespace fs = std::filesystem;

namespace treeq::harness {

std::string to_string(CriticKind k) {
  switch (k) {
    case CriticKind::Oracle: return "oracle";
    case CriticKind::Noisy: return "noisy";
    case CriticKind::External: return "external";
  }
  return "oracle";
}

std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::Prior: return "prior";
    case PolicyKind::Checkpoint: return "checkpoint";
    case PolicyKind::ScriptedOptimal: return "scripted-optimal";
    case PolicyKind::Uniform: return "uniform";
    case PolicyKind::External: return "external";
  }
  return "prior";
}

std::string to_string(EvalMode m) { return m == EvalMode::Mcts ? "mcts" : "zero_shot"; }

namespace {

CriticKind critic_kind_from(const std::string& s) {
  for (auto k : {CriticKind::Oracle, CriticKind::Noisy, CriticKind::External}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("critic.kind: unknown value '" + s + "' (expected oracle, noisy or external)");
}

PolicyKind policy_kind_from(const std::string& s) {
  for (auto k : {PolicyKind::Prior, PolicyKind::Checkpoint, PolicyKind::ScriptedOptimal, PolicyKind::Uniform,
                 PolicyKind::External}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("policy.kind: unknown value '" + s +
                    "' (expected prior, checkpoint, scripted-optimal, uniform or external)");
}

EvalMode eval_mode_from(const std::string& s) {
  if (s == "zero_shot") return EvalMode::ZeroShot;
  if (s == "mcts") return EvalMode::Mcts;
  throw ConfigError("eval.mode: unknown value '" + s + "' (expected zero_shot or mcts)");
}

// ---------------------------------------------------------------- config reader

/// A JSON object being read field by field. Keys never read are reported as
/// unknown by finish().
class Section {
 public:
  Section(const Json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) const { return j_ && j_->contains(key); }

  int get_int(const std::string& key, int def) {
    const Json* v = field(key);
    if (!v) return def;
    if (!v->is_number_integer()) throw ConfigError(name(key) + " must be an integer");
    const auto x = v->get<std::int64_t>();
    if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(name(key) + " is out of range");
    return static_cast<int>(x);
  }

  std::int64_t get_int64(const std::string& key, std::int64_t def) {
    const Json* v = field(key);
    if (!v) return def;
    if (!v->is_number_integer()) throw ConfigError(name(key) + " must be an integer");
    return v->get<std::int64_t>();
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t def) {
    const Json* v = field(key);
    if (!v) return def;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v->get<std::int64_t>());
    throw ConfigError(name(key) + " must be a non-negative integer");
  }

  double get_double(const std::string& key, double def) {
    const Json* v = field(key);
    if (!v) return def;
    if (!v->is_number()) throw ConfigError(name(key) + " must be a number");
    return v->get<double>();
  }

  bool get_bool(const std::string& key, bool def) {
    const Json* v = field(key);
    if (!v) return def;
    if (!v->is_boolean()) throw ConfigError(name(key) + " must be true or false");
    return v->get<bool>();
  }

  std::string get_string(const std::string& key, const std::string& def) {
    const Json* v = field(key);
    if (!v) return def;
    if (!v->is_string()) throw ConfigError(name(key) + " must be a string");
    return v->get<std::string>();
  }

  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& def) {
    const Json* v = field(key);
    if (!v) return def;
    if (!v->is_array()) throw ConfigError(name(key) + " must be an array of strings");
    std::vector<std::string> out;
    for (const auto& e : *v) {
      if (!e.is_string()) throw ConfigError(name(key) + " must be an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  Section sub(const std::string& key) { return Section(field(key), name(key)); }

  void finish() const {
    if (!j_) return;
    for (const auto& [k, v] : j_->items()) {
      if (!used_.contains(k)) throw ConfigError("unknown configuration key " + name(k));
    }
  }

 private:
  const Json* field(const std::string& key) {
    used_.insert(key);
    if (!j_) return nullptr;
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }
  std::string where() const { return path_.empty() ? "configuration" : path_; }
  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* j_;
  std::string path_;
  std::set<std::string> used_;
};

std::string hex16(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

}  // namespace

ExperimentConfig config_from_json(const Json& j, std::optional<std::uint64_t> seed_override) {
  ExperimentConfig c;
  Section root(&j, "");
  c.world = env::world_from_string(root.get_string("world", env::to_string(c.world)));
  c.seed = seed_override.value_or(root.get_u64("seed", 0));
  c.output_dir = root.get_string("output_dir", c.output_dir);

  Section tasks = root.sub("tasks");
  c.tasks.train = tasks.get_int("train", c.tasks.train);
  c.tasks.eval = tasks.get_int("eval", c.tasks.eval);
  c.tasks.seed = tasks.get_u64("seed", derive_seed(c.seed, "tasks"));
  tasks.finish();

  Section envs = root.sub("env");
  Section shop = envs.sub("shop");
  c.env.shop.page_size = shop.get_int("page_size", c.env.shop.page_size);
  c.env.shop.catalog_size = shop.get_int("catalog_size", c.env.shop.catalog_size);
  c.env.shop.max_pages = shop.get_int("max_pages", c.env.shop.max_pages);
  c.env.shop.p_deep = shop.get_double("p_deep", c.env.shop.p_deep);
  c.env.shop.horizon = shop.get_int("horizon", c.env.shop.horizon);
  shop.finish();
  Section book = envs.sub("book");
  c.env.book.horizon = book.get_int("horizon", c.env.book.horizon);
  c.env.book.p_city_change = book.get_double("p_city_change", c.env.book.p_city_change);
  c.env.book.start_stage = book.get_int("start_stage", c.env.book.start_stage);
  book.finish();
  envs.finish();

  Section s = root.sub("search");
  c.search.k = s.get_int("k", c.search.k);
  c.search.c_exp = s.get_double("c_exp", c.search.c_exp);
  c.search.rollouts_per_task = s.get_int("rollouts_per_task", c.search.rollouts_per_task);
  c.search.max_depth = s.get_int("max_depth", c.search.max_depth);
  c.search.alpha = s.get_double("alpha", c.search.alpha);
  c.search.mixed_q_in_ucb = s.get_bool("mixed_q_in_ucb", c.search.mixed_q_in_ucb);
  c.search.rollout_temperature = s.get_double("rollout_temperature", c.search.rollout_temperature);
  c.search.seed = s.get_u64("seed", derive_seed(c.seed, "search"));
  s.finish();

  Section t = root.sub("train");
  c.train.objective = trainers::objective_from_string(t.get_string("objective", to_string(c.train.objective)));
  c.train.beta = t.get_double("beta", c.train.beta);
  c.train.learning_rate = t.get_double("learning_rate", c.train.learning_rate);
  c.train.epochs = t.get_int("epochs", c.train.epochs);
  c.train.batch_size = t.get_int("batch_size", c.train.batch_size);
  c.train.momentum = t.get_double("momentum", c.train.momentum);
  c.train.iterations = t.get_int("iterations", c.train.iterations);
  c.train.tasks_per_iteration = t.get_int("tasks_per_iteration", c.train.tasks_per_iteration);
  c.train.trajectory_pair_cap = t.get_int("trajectory_pair_cap", c.train.trajectory_pair_cap);
  c.train.theta = t.get_double("theta", c.train.theta);
  c.train.divergence_threshold = t.get_double("divergence_threshold", c.train.divergence_threshold);
  c.train.seed = t.get_u64("seed", derive_seed(c.seed, "train"));
  t.finish();

  Section cr = root.sub("critic");
  c.critic.kind = critic_kind_from(cr.get_string("kind", to_string(c.critic.kind)));
  c.critic.noise = cr.get_double("noise", c.critic.noise);
  c.critic.seed = cr.get_u64("seed", derive_seed(c.seed, "critic"));
  c.critic.command = cr.get_strings("command", c.critic.command);
  c.critic.timeout_ms = cr.get_int("timeout_ms", c.critic.timeout_ms);
  cr.finish();

  Section p = root.sub("policy");
  c.policy.kind = policy_kind_from(p.get_string("kind", to_string(c.policy.kind)));
  c.policy.checkpoint = p.get_string("checkpoint", c.policy.checkpoint);
  c.policy.command = p.get_strings("command", c.policy.command);
  c.policy.timeout_ms = p.get_int("timeout_ms", c.policy.timeout_ms);
  Section pr = p.sub("prior");
  c.policy.prior.match = pr.get_double("match", c.policy.prior.match);
  c.policy.prior.back_penalty = pr.get_double("back_penalty", c.policy.prior.back_penalty);
  c.policy.prior.pagination_link = pr.get_double("pagination_link", c.policy.prior.pagination_link);
  c.policy.prior.commit = pr.get_double("commit", c.policy.prior.commit);
  c.policy.prior.habit = pr.get_double("habit", c.policy.prior.habit);
  pr.finish();
  p.finish();

  Section e = root.sub("eval");
  c.eval.mode = eval_mode_from(e.get_string("mode", to_string(c.eval.mode)));
  c.eval.sample = e.get_bool("sample", c.eval.sample);
  e.finish();

  Section o = root.sub("oracle");
  c.oracle.depth_limit = o.get_int("depth_limit", c.oracle.depth_limit);
  c.oracle.max_states = o.get_int64("max_states", c.oracle.max_states);
  o.finish();

  Section d = root.sub("data");
  c.data.pairs = d.get_string("pairs", c.data.pairs);
  c.data.trajectories = d.get_string("trajectories", c.data.trajectories);
  c.data.resume_checkpoint = d.get_string("resume_checkpoint", c.data.resume_checkpoint);
  c.data.stop_after_epoch = d.get_int("stop_after_epoch", c.data.stop_after_epoch);
  d.finish();

  root.finish();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override) {
  Json j;
  try {
    j = read_json_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j, seed_override);
}

Json config_to_json(const ExperimentConfig& c) {
  return Json{
      {"world", env::to_string(c.world)},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"tasks", {{"train", c.tasks.train}, {"eval", c.tasks.eval}, {"seed", c.tasks.seed}}},
      {"env",
       {{"shop",
         {{"page_size", c.env.shop.page_size},
          {"catalog_size", c.env.shop.catalog_size},
          {"max_pages", c.env.shop.max_pages},
          {"p_deep", c.env.shop.p_deep},
          {"horizon", c.env.shop.horizon}}},
        {"book",
         {{"horizon", c.env.book.horizon},
          {"p_city_change", c.env.book.p_city_change},
          {"start_stage", c.env.book.start_stage}}}}},
      {"search",
       {{"k", c.search.k},
        {"c_exp", c.search.c_exp},
        {"rollouts_per_task", c.search.rollouts_per_task},
        {"max_depth", c.search.max_depth},
        {"alpha", c.search.alpha},
        {"mixed_q_in_ucb", c.search.mixed_q_in_ucb},
        {"rollout_temperature", c.search.rollout_temperature},
        {"seed", c.search.seed}}},
      {"train",
       {{"objective", to_string(c.train.objective)},
        {"beta", c.train.beta},
        {"learning_rate", c.train.learning_rate},
        {"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"momentum", c.train.momentum},
        {"iterations", c.train.iterations},
        {"tasks_per_iteration", c.train.tasks_per_iteration},
        {"trajectory_pair_cap", c.train.trajectory_pair_cap},
        {"theta", c.train.theta},
        {"divergence_threshold", c.train.divergence_threshold},
        {"seed", c.train.seed}}},
      {"critic",
       {{"kind", to_string(c.critic.kind)},
        {"noise", c.critic.noise},
        {"seed", c.critic.seed},
        {"command", c.critic.command},
        {"timeout_ms", c.critic.timeout_ms}}},
      {"policy",
       {{"kind", to_string(c.policy.kind)},
        {"checkpoint", c.policy.checkpoint},
        {"command", c.policy.command},
        {"timeout_ms", c.policy.timeout_ms},
        {"prior",
         {{"match", c.policy.prior.match},
          {"back_penalty", c.policy.prior.back_penalty},
          {"pagination_link", c.policy.prior.pagination_link},
          {"commit", c.policy.prior.commit},
          {"habit", c.policy.prior.habit}}}}},
      {"eval", {{"mode", to_string(c.eval.mode)}, {"sample", c.eval.sample}}},
      {"oracle", {{"depth_limit", c.oracle.depth_limit}, {"max_states", c.oracle.max_states}}},
      {"data",
       {{"pairs", c.data.pairs},
        {"trajectories", c.data.trajectories},
        {"resume_checkpoint", c.data.resume_checkpoint},
        {"stop_after_epoch", c.data.stop_after_epoch}}},
  };
}

void validate(const ExperimentConfig& c) {
  if (c.tasks.train < 0 || c.tasks.eval < 0) throw ConfigError("tasks.train and tasks.eval must be >= 0");
  if (c.tasks.train + c.tasks.eval < 1) throw ConfigError("tasks.train + tasks.eval must be >= 1");
  if (!(c.env.shop.p_deep >= 0.0 && c.env.shop.p_deep <= 1.0)) throw ConfigError("env.shop.p_deep must lie in [0, 1]");
  if (!(c.env.book.p_city_change >= 0.0 && c.env.book.p_city_change <= 1.0)) {
    throw ConfigError("env.book.p_city_change must lie in [0, 1]");
  }
  if (c.env.shop.horizon < 1 || c.env.book.horizon < 1) throw ConfigError("env horizons must be >= 1");
  if (c.env.shop.page_size < 1 || c.env.shop.catalog_size < 1 || c.env.shop.max_pages < 1) {
    throw ConfigError("env.shop sizes must be >= 1");
  }
  if (c.env.book.start_stage != 0 && c.env.book.start_stage != 3) {
    throw ConfigError("env.book.start_stage must be 0 or 3");
  }
  mcts::validate(c.search);
  trainers::validate(c.train);
  if (!(c.critic.noise >= 0.0 && c.critic.noise <= 1.0)) throw ConfigError("critic.noise must lie in [0, 1]");
  if (c.critic.kind == CriticKind::External && c.critic.command.empty()) {
    throw ConfigError("critic.command is required for the external critic");
  }
  if (c.critic.timeout_ms < 1 || c.policy.timeout_ms < 1) throw ConfigError("timeout_ms must be >= 1");
  if (c.policy.kind == PolicyKind::Checkpoint && c.policy.checkpoint.empty()) {
    throw ConfigError("policy.checkpoint is required for the checkpoint policy");
  }
  if (c.policy.kind == PolicyKind::External && c.policy.command.empty()) {
    throw ConfigError("policy.command is required for the external policy");
  }
  if (c.oracle.depth_limit < 1) throw ConfigError("oracle.depth_limit must be >= 1");
  if (c.oracle.max_states < 1) throw ConfigError("oracle.max_states must be >= 1");
  if (c.data.stop_after_epoch < 0) throw ConfigError("data.stop_after_epoch must be >= 0");
}

std::string config_hash(const ExperimentConfig& cfg) {
  Json j = config_to_json(cfg);
  // Where artifacts go, how a run is split into sessions and how many loop
  // iterations are requested do not change what earlier artifacts contain.
  j.erase("output_dir");
  j["train"].erase("iterations");
  j["data"].erase("resume_checkpoint");
  j["data"].erase("stop_after_epoch");
  return hex16(fnv1a(j.dump()));
}

namespace {

std::vector<env::TaskSpec> all_tasks(const ExperimentConfig& cfg) {
  return env::generate_task_set(cfg.world, cfg.tasks.train + cfg.tasks.eval, cfg.tasks.seed, cfg.env);
}

}  // namespace

std::vector<env::TaskSpec> train_tasks(const ExperimentConfig& cfg) {
  return env::split_tasks(all_tasks(cfg), static_cast<std::size_t>(cfg.tasks.train)).first;
}

std::vector<env::TaskSpec> eval_tasks(const ExperimentConfig& cfg) {
  return env::split_tasks(all_tasks(cfg), static_cast<std::size_t>(cfg.tasks.train)).second;
}

Interval binomial_ci95(int successes, int n) {
  if (n <= 0) return {0.0, 1.0};
  const double z = 1.959963984540054;
  const double p = static_cast<double>(successes) / n;
  const double z2n = z * z / n;
  const double center = (p + z2n / 2.0) / (1.0 + z2n);
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / (1.0 + z2n);
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const DivergenceError*>(&e)) return 4;
  return 1;
}

// ---------------------------------------------------------------- run plumbing

namespace {

/// Output directory, resolved config echo, hash and the timestamped log.
class Run {
 public:
  Run(const ExperimentConfig& cfg, const std::string& out_dir, const std::string& command)
      : cfg_(cfg), dir_(out_dir), hash_(config_hash(cfg)) {
    make_dir(dir_);
    Json resolved = config_to_json(cfg);
    resolved["config_hash"] = hash_;
    write_text_file(path("resolved_config.json"), resolved.dump(2) + "\n");
    log(command + " started, config " + hash_);
  }

  static void make_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec || !fs::is_directory(p)) throw DataError("cannot create output directory " + p.string());
  }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }
  const std::string& hash() const { return hash_; }
  const ExperimentConfig& cfg() const { return cfg_; }

  void log(const std::string& msg) {
    std::lock_guard lock(mu_);
    std::ofstream out(path("run.log"), std::ios::app);
    if (!out) throw DataError("cannot write " + path("run.log"));
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char ts[32];
    std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", &tm);
    out << ts << ' ' << msg << '\n';
  }

  void write_json(const std::string& rel, Json j) const {
    j["config_hash"] = hash_;
    write_text_file(path(rel), j.dump(2) + "\n");
  }

 private:
  const ExperimentConfig& cfg_;
  fs::path dir_;
  std::string hash_;
  std::mutex mu_;
};

/// Writes a CSV with a config_hash column appended to every row.
class Csv {
 public:
  Csv(std::vector<std::string> columns, std::string hash) : hash_(std::move(hash)) {
    columns.push_back("config_hash");
    text_ = join(columns);
  }
  void row(std::vector<std::string> cells) {
    cells.push_back(hash_);
    text_ += join(cells);
  }
  const std::string& text() const { return text_; }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) s += ',';
      s += cells[i];
    }
    return s + '\n';
  }
  std::string hash_;
  std::string text_;
};

/// A policy together with whatever backs it.
struct PolicyHandle {
  std::unique_ptr<adapter::ProcessChannel> channel;
  std::unique_ptr<agent::Policy> policy;
  std::optional<agent::PolicyParams> params;
  int version = 0;
};

agent::PolicyParams initial_params(const ExperimentConfig& cfg) {
  switch (cfg.policy.kind) {
    case PolicyKind::Prior: return agent::make_prior_policy(cfg.world, cfg.policy.prior);
    case PolicyKind::Checkpoint: return load_checkpoint_params(cfg.policy.checkpoint);
    case PolicyKind::Uniform: return agent::PolicyParams{};
    default: break;
  }
  throw ConfigError("policy.kind " + to_string(cfg.policy.kind) + " has no trainable parameters");
}

PolicyHandle make_policy(const ExperimentConfig& cfg, double rollout_temperature) {
  PolicyHandle h;
  switch (cfg.policy.kind) {
    case PolicyKind::ScriptedOptimal:
      h.policy = std::make_unique<agent::ScriptedPolicy>(cfg.world == env::World::Shop ? agent::shop_optimal_script()
                                                                                       : agent::book_optimal_script());
      return h;
    case PolicyKind::External:
      h.channel = std::make_unique<adapter::ProcessChannel>(cfg.policy.command, cfg.policy.timeout_ms);
      h.policy = std::make_unique<adapter::ExternalPolicy>(*h.channel);
      return h;
    default: break;
  }
  h.params = initial_params(cfg);
  h.version = h.params->version;
  h.policy = std::make_unique<agent::SoftmaxPolicy>(*h.params, 8, rollout_temperature);
  return h;
}

/// Builds per-task critics. External critics share one adapter process.
class CriticPool {
 public:
  explicit CriticPool(const ExperimentConfig& cfg) : cfg_(cfg) {
    if (cfg.critic.kind == CriticKind::External) {
      channel_ = std::make_unique<adapter::ProcessChannel>(cfg.critic.command, cfg.critic.timeout_ms);
    }
  }

  std::unique_ptr<critic::Critic> make(const env::TaskSpec& task) const {
    switch (cfg_.critic.kind) {
      case CriticKind::Oracle:
        return std::make_unique<critic::OracleCritic>(static_cast<std::size_t>(cfg_.oracle.max_states));
      case CriticKind::Noisy:
        return std::make_unique<critic::NoisyCritic>(cfg_.critic.noise, derive_seed(cfg_.critic.seed, task.task_id));
      case CriticKind::External: return std::make_unique<critic::ExternalCritic>(*channel_);
    }
    throw ConfigError("unknown critic kind");
  }

  trainers::CriticFactory factory() const {
    return [this](const env::TaskSpec& t) { return make(t); };
  }

 private:
  const ExperimentConfig& cfg_;
  std::unique_ptr<adapter::ProcessChannel> channel_;
};

Json sparse(const std::vector<double>& v) {
  Json j = Json::object();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0) j[std::to_string(i)] = v[i];
  }
  return j;
}

std::vector<double> dense(const Json& j, std::size_t n, const std::string& what) {
  std::vector<double> v(n, 0.0);
  for (const auto& [k, x] : j.items()) {
    std::size_t idx = 0;
    try {
      idx = std::stoul(k);
    } catch (const std::exception&) {
      throw DataError(what + ": bad index '" + k + "'");
    }
    if (idx >= n) throw DataError(what + ": index " + k + " out of range");
    v[idx] = x.get<double>();
  }
  return v;
}

Json reports_json(const std::vector<trainers::LossReport>& reports) {
  Json a = Json::array();
  for (const auto& r : reports) {
    a.push_back({{"epoch", r.epoch}, {"loss", r.loss}, {"grad_norm", r.grad_norm}, {"pair_accuracy", r.pair_accuracy}});
  }
  return a;
}

std::vector<trainers::LossReport> reports_from(const Json& a) {
  std::vector<trainers::LossReport> out;
  for (const auto& r : a) {
    out.push_back({r.at("epoch").get<int>(), r.at("loss").get<double>(), r.at("grad_norm").get<double>(),
                   r.at("pair_accuracy").get<double>()});
  }
  return out;
}

Json metrics_json(const std::vector<trainers::IterationMetrics>& ms) {
  Json a = Json::array();
  for (const auto& m : ms) {
    a.push_back({{"iteration", m.iteration},
                 {"loss", m.loss},
                 {"pair_accuracy", m.pair_accuracy},
                 {"eval_success_rate", m.eval_success_rate},
                 {"buffer_pairs", m.buffer_pairs},
                 {"buffer_trajectories", m.buffer_trajectories}});
  }
  return a;
}

std::vector<trainers::IterationMetrics> metrics_from(const Json& a) {
  std::vector<trainers::IterationMetrics> out;
  for (const auto& m : a) {
    trainers::IterationMetrics x;
    x.iteration = m.at("iteration").get<int>();
    x.loss = m.at("loss").get<double>();
    x.pair_accuracy = m.at("pair_accuracy").get<double>();
    x.eval_success_rate = m.at("eval_success_rate").get<double>();
    x.buffer_pairs = m.at("buffer_pairs").get<std::size_t>();
    x.buffer_trajectories = m.at("buffer_trajectories").get<std::size_t>();
    out.push_back(x);
  }
  return out;
}

Json read_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw DataError("missing checkpoint " + path);
  Json j = read_json_file(path);
  if (j.value("schema_version", 0) != kSchemaVersion) throw DataError(path + ": unsupported checkpoint schema_version");
  if (!j.contains("params")) throw DataError(path + ": checkpoint has no params");
  return j;
}

}  // namespace

agent::PolicyParams load_checkpoint_params(const std::string& path) {
  const Json j = read_checkpoint(path);
  try {
    return j.at("params").get<agent::PolicyParams>();
  } catch (const Json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------- search

SearchSummary cmd_search(const ExperimentConfig& cfg, const std::string& out_dir) {
  Run run(cfg, out_dir, "search");
  const auto tasks = train_tasks(cfg);
  if (tasks.empty()) throw ConfigError("search needs tasks.train >= 1");
  const PolicyHandle ph = make_policy(cfg, cfg.search.rollout_temperature);
  const CriticPool critics(cfg);

  std::vector<mcts::SearchResult> results(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    auto critic = critics.make(tasks[i]);
    results[i] = mcts::run_search(tasks[i], *ph.policy, *critic, cfg.search, ph.version);
  });

  Run::make_dir(run.path("trees"));
  Run::make_dir(run.path("rollouts"));
  preference::ReplayBuffer buffer;
  SearchSummary sum;
  Csv csv({"task_id", "trajectories", "successes", "tree_nodes", "pairs", "best_path_reward"}, run.hash());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& r = results[i];
    const auto& id = tasks[i].task_id;
    run.write_json("trees/" + id + ".json", mcts::tree_to_json(r.tree));
    write_text_file(run.path("rollouts/" + id + ".jsonl"), preference::to_jsonl(r.trajectories, run.hash()));
    const auto pairs = preference::build_pairs(r.tree, cfg.search.alpha, cfg.train.theta);
    buffer.add_trajectories(r.trajectories);
    buffer.add_pairs(pairs);
    int wins = 0;
    for (const auto& t : r.trajectories) wins += t.terminal ? t.terminal_reward : 0;
    const auto best = mcts::best_path(r);
    csv.row({id, std::to_string(r.trajectories.size()), std::to_string(wins), std::to_string(r.tree.nodes.size()),
             std::to_string(pairs.size()), std::to_string(best.terminal ? best.terminal_reward : 0)});
    sum.trajectories += static_cast<int>(r.trajectories.size());
    sum.successes += wins;
    sum.pairs += static_cast<int>(pairs.size());
  }
  sum.tasks = static_cast<int>(tasks.size());
  buffer.save(run.path("pairs.jsonl"), run.path("trajectories.jsonl"), run.hash());
  write_text_file(run.path("summary.csv"), csv.text());
  run.log("search finished: " + std::to_string(sum.tasks) + " tasks, " + std::to_string(sum.trajectories) +
          " trajectories, " + std::to_string(sum.pairs) + " pairs");
  return sum;
}

// ---------------------------------------------------------------- train

TrainSummary cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  const auto obj = cfg.train.objective;
  const bool needs_pairs = obj == trainers::Objective::StepDpo;
  const std::string& src = needs_pairs ? cfg.data.pairs : cfg.data.trajectories;
  if (src.empty()) {
    throw ConfigError(std::string("data.") + (needs_pairs ? "pairs" : "trajectories") + " is required for " +
                      to_string(obj));
  }
  if (!fs::exists(src)) throw DataError("missing training data " + src);
  preference::ReplayBuffer buffer;
  if (needs_pairs) {
    buffer.add_pairs(preference::pairs_from_jsonl(read_text_file(src), src));
  } else {
    buffer.add_trajectories(preference::trajectories_from_jsonl(read_text_file(src), src));
  }
  const trainers::TrainData data = trainers::make_train_data(buffer, cfg.train);
  if (data.size() == 0) throw DataError("no " + to_string(obj) + " training examples in " + src);

  Run run(cfg, out_dir, "train");
  trainers::TrainState start{initial_params(cfg), {}, 0};
  std::vector<trainers::LossReport> reports;
  if (!cfg.data.resume_checkpoint.empty()) {
    const Json ck = read_checkpoint(cfg.data.resume_checkpoint);
    if (ck.value("config_hash", "") != run.hash()) {
      throw ConfigError("checkpoint " + cfg.data.resume_checkpoint + " was written by config " +
                        ck.value("config_hash", std::string("?")) + ", not " + run.hash());
    }
    start.params = ck.at("params").get<agent::PolicyParams>();
    start.epoch = ck.at("epoch").get<int>();
    start.velocity = dense(ck.at("velocity"), start.params.dimension(), cfg.data.resume_checkpoint);
    reports = reports_from(ck.at("reports"));
    run.log("resuming at epoch " + std::to_string(start.epoch));
  }
  std::optional<int> stop;
  if (cfg.data.stop_after_epoch > 0) stop = cfg.data.stop_after_epoch;
  trainers::TrainResult tr = trainers::train(start, data, cfg.train, stop);
  reports.insert(reports.end(), tr.reports.begin(), tr.reports.end());
  const trainers::LossReport final_report = trainers::evaluate_loss(tr.state.params, data, cfg.train);

  Csv csv({"epoch", "loss", "grad_norm", "pair_accuracy"}, run.hash());
  for (const auto& r : reports) csv.row({std::to_string(r.epoch), fmt(r.loss), fmt(r.grad_norm), fmt(r.pair_accuracy)});
  write_text_file(run.path("metrics.csv"), csv.text());
  run.write_json("checkpoint.json", Json{{"schema_version", kSchemaVersion},
                                         {"objective", to_string(obj)},
                                         {"params", tr.state.params},
                                         {"epoch", tr.state.epoch},
                                         {"velocity", sparse(tr.state.velocity)},
                                         {"reports", reports_json(reports)},
                                         {"final_loss", final_report.loss}});
  run.log("train finished at epoch " + std::to_string(tr.state.epoch) + ", loss " + fmt(final_report.loss));
  return {tr.state.epoch, final_report.loss, run.path("checkpoint.json")};
}

// ---------------------------------------------------------------- eval

EvalReport cmd_eval(const ExperimentConfig& cfg, const std::string& out_dir) {
  Run run(cfg, out_dir, "eval");
  const auto tasks = eval_tasks(cfg);
  if (tasks.empty()) throw ConfigError("eval needs tasks.eval >= 1");
  const bool mcts_mode = cfg.eval.mode == EvalMode::Mcts;
  const PolicyHandle ph = make_policy(cfg, mcts_mode ? cfg.search.rollout_temperature : 0.0);
  const CriticPool critics(cfg);

  EvalReport rep;
  rep.mode = cfg.eval.mode;
  rep.outcomes.resize(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    const auto& t = tasks[i];
    agent::Trajectory traj;
    if (mcts_mode) {
      auto critic = critics.make(t);
      traj = mcts::best_path(mcts::run_search(t, *ph.policy, *critic, cfg.search, ph.version));
    } else {
      auto [s, obs] = env::env_reset(t.world, t, t.layout.seed);
      const auto decode = cfg.eval.sample ? agent::Decode::Sample : agent::Decode::Greedy;
      traj = agent::rollout(*ph.policy, s, agent::initial_history(t, obs), t.layout.horizon, decode,
                            derive_seed(cfg.seed, "eval:" + t.task_id));
    }
    rep.outcomes[i] = {t.task_id, traj.terminal ? traj.terminal_reward : 0, traj.total_steps};
  });

  Csv csv({"task_id", "reward", "steps"}, run.hash());
  for (const auto& o : rep.outcomes) {
    rep.successes += o.reward;
    csv.row({o.task_id, std::to_string(o.reward), std::to_string(o.steps)});
  }
  const int n = static_cast<int>(rep.outcomes.size());
  rep.success_rate = static_cast<double>(rep.successes) / n;
  rep.ci = binomial_ci95(rep.successes, n);
  write_text_file(run.path("outcomes.csv"), csv.text());
  run.write_json("report.json", Json{{"schema_version", kSchemaVersion},
                                     {"mode", to_string(rep.mode)},
                                     {"tasks", n},
                                     {"successes", rep.successes},
                                     {"success_rate", rep.success_rate},
                                     {"ci95_low", rep.ci.low},
                                     {"ci95_high", rep.ci.high}});
  run.log("eval finished: " + std::to_string(rep.successes) + "/" + std::to_string(n));
  return rep;
}

// ---------------------------------------------------------------- oracle

OracleSummary cmd_oracle(const ExperimentConfig& cfg, const std::string& out_dir) {
  Run run(cfg, out_dir, "oracle");
  const auto tasks = eval_tasks(cfg);
  if (tasks.empty()) throw ConfigError("oracle needs tasks.eval >= 1");
  std::vector<oracle::ExactSolution> sols(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    sols[i] = oracle::solve_exact(cfg.world, tasks[i], cfg.oracle.depth_limit,
                                  static_cast<std::size_t>(cfg.oracle.max_states));
  });
  Run::make_dir(run.path("oracle"));
  OracleSummary sum;
  Csv csv({"task_id", "states", "success_value", "min_steps"}, run.hash());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    Json j = sols[i];
    j["schema_version"] = kSchemaVersion;
    run.write_json("oracle/" + tasks[i].task_id + ".json", j);
    const bool ok = sols[i].min_steps != oracle::kUnreachable;
    sum.solvable += ok ? 1 : 0;
    csv.row({tasks[i].task_id, std::to_string(sols[i].q_star.size()), fmt(sols[i].success_value),
             ok ? std::to_string(sols[i].min_steps) : ""});
  }
  sum.tasks = static_cast<int>(tasks.size());
  write_text_file(run.path("summary.csv"), csv.text());
  run.log("oracle finished: " + std::to_string(sum.solvable) + "/" + std::to_string(sum.tasks) + " solvable");
  return sum;
}

// ---------------------------------------------------------------- loop

namespace {

std::string iter_dir(int i) { return "iter-" + std::to_string(i); }

void write_loop_metrics(Run& run, const std::vector<trainers::IterationMetrics>& ms) {
  Csv csv({"iteration", "loss", "pair_accuracy", "eval_success_rate", "buffer_pairs", "buffer_trajectories"},
          run.hash());
  for (const auto& m : ms) {
    const bool trained = m.iteration > 0;
    csv.row({std::to_string(m.iteration), trained ? fmt(m.loss) : "", trained ? fmt(m.pair_accuracy) : "",
             fmt(m.eval_success_rate), std::to_string(m.buffer_pairs), std::to_string(m.buffer_trajectories)});
  }
  write_text_file(run.path("metrics.csv"), csv.text());
}

trainers::LoopState resume_state(Run& run) {
  int last = -1;
  while (fs::exists(run.path(iter_dir(last + 1)))) ++last;
  if (last < 0) throw DataError("nothing to resume in " + run.path(""));
  for (int i = 0; i <= last; ++i) {
    for (const char* f : {"checkpoint.json", "pairs.jsonl", "trajectories.jsonl"}) {
      const std::string p = run.path(iter_dir(i) + "/" + f);
      if (!fs::exists(p)) throw DataError("missing artifact " + p);
    }
  }
  const std::string dir = iter_dir(last);
  const Json ck = read_checkpoint(run.path(dir + "/checkpoint.json"));
  if (ck.value("config_hash", "") != run.hash()) {
    throw ConfigError("loop artifacts in " + run.path("") + " were written by config " +
                      ck.value("config_hash", std::string("?")) + ", not " + run.hash());
  }
  trainers::LoopState st;
  st.iteration = ck.at("iteration").get<int>();
  st.params = ck.at("params").get<agent::PolicyParams>();
  st.metrics = metrics_from(ck.at("metrics"));
  st.buffer = preference::ReplayBuffer::load(run.path(dir + "/pairs.jsonl"), run.path(dir + "/trajectories.jsonl"));
  run.log("resuming after iteration " + std::to_string(st.iteration));
  return st;
}

}  // namespace

LoopReport cmd_loop(const ExperimentConfig& cfg, const std::string& out_dir, bool resume) {
  Run run(cfg, out_dir, resume ? "loop --resume" : "loop");
  const auto train = train_tasks(cfg);
  const auto eval = eval_tasks(cfg);
  if (train.empty()) throw ConfigError("loop needs tasks.train >= 1");
  const CriticPool critics(cfg);

  trainers::LoopState state = resume ? resume_state(run) : trainers::initial_loop_state(initial_params(cfg));
  trainers::LoopHooks hooks;
  hooks.on_iteration = [&](const trainers::LoopState& s, const std::vector<mcts::SearchResult>&) {
    const std::string dir = iter_dir(s.iteration);
    Run::make_dir(run.path(dir));
    s.buffer.save(run.path(dir + "/pairs.jsonl"), run.path(dir + "/trajectories.jsonl"), run.hash());
    run.write_json(dir + "/checkpoint.json", Json{{"schema_version", kSchemaVersion},
                                                  {"iteration", s.iteration},
                                                  {"params", s.params},
                                                  {"metrics", metrics_json(s.metrics)}});
    write_loop_metrics(run, s.metrics);
    run.log("iteration " + std::to_string(s.iteration) + " eval " + fmt(s.metrics.back().eval_success_rate));
  };
  state = trainers::agentq_loop(train, eval, std::move(state), critics.factory(), cfg.search, cfg.train, hooks);

  const auto& first = state.metrics.front();
  const auto& last = state.metrics.back();
  run.write_json("report.json", Json{{"schema_version", kSchemaVersion},
                                     {"iterations", last.iteration},
                                     {"eval_tasks", eval.size()},
                                     {"initial_success_rate", first.eval_success_rate},
                                     {"final_success_rate", last.eval_success_rate},
                                     {"gain", last.eval_success_rate - first.eval_success_rate},
                                     {"metrics", metrics_json(state.metrics)}});
  run.log("loop finished");
  return {state.metrics};
}

}  // namespace treeq::harness
