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

#include "treeq/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace treeq::agent {

TemplateVocab TemplateVocab::defaults() {
  return TemplateVocab{
      {"search-then-scan", "search-then-paginate", "fill-form-in-order", "verify-then-commit"},
      {"find-exact-match", "look-further", "select-option", "enter-details", "confirm", "backtrack"},
      {"matches-goal", "exploring", "correcting", "finishing"},
  };
}

std::uint32_t feature_index(const std::string& world, const std::string& feature, std::size_t dimension) {
  const std::uint64_t h = fnv1a(feature, fnv1a("|", fnv1a(world)));
  return static_cast<std::uint32_t>(h % dimension);
}

namespace {

struct Context {
  std::string world;
  std::string page_id;
  std::string page_kind;
  int maxmatch = 0;
  int pagematch = 0;
  std::vector<std::string> goal;
  std::string history_plan;
  std::string prev_verb;
};

// Match counts above this share one feature bucket.
constexpr int kMaxMatchBucket = 8;

std::string page_kind_of(const std::string& page_id) {
  for (const char* prefix : {"results-", "item-"}) {
    const std::string p(prefix);
    if (page_id.rfind(p, 0) == 0) return p.substr(0, p.size() - 1);
  }
  return page_id;
}

Context make_context(const AgentHistory& h) {
  Context ctx;
  ctx.world = env::to_string(h.task.world);
  ctx.page_id = h.current_obs.page_id;
  ctx.page_kind = h.current_obs.kind == env::ObsKind::UserQuery ? "query" : page_kind_of(ctx.page_id);
  ctx.goal = goal_tokens(h.task);
  for (const auto& c : env::candidate_commands(h.current_obs)) {
    if (c.verb == env::Verb::Back) continue;
    ctx.maxmatch = std::max(ctx.maxmatch, goal_overlap(ctx.goal, h.current_obs, c));
  }
  ctx.maxmatch = std::min(ctx.maxmatch, kMaxMatchBucket);
  const auto page_toks = split_tokens(h.current_obs.text);
  for (const auto& g : ctx.goal) {
    if (std::find(page_toks.begin(), page_toks.end(), g) != page_toks.end()) ++ctx.pagematch;
  }
  ctx.pagematch = std::min(ctx.pagematch, kMaxMatchBucket);
  if (!h.past_actions.empty()) {
    ctx.history_plan = h.past_actions.front().plan.value_or("none");
    ctx.prev_verb = env::to_string(h.past_actions.back().env_cmd.verb);
  } else {
    ctx.history_plan = "none";
    ctx.prev_verb = "none";
  }
  return ctx;
}

class FeatureBuilder {
 public:
  FeatureBuilder(const PolicyParams& params, const Context& ctx) : params_(params), ctx_(ctx) {}

  std::uint32_t idx(const std::string& f) const { return feature_index(ctx_.world, f, params_.dimension()); }

  bool tabular() const { return params_.extractor == kTabularExtractor; }

  std::vector<std::uint32_t> plan(const std::string& p) const {
    if (tabular()) return {idx("P|" + ctx_.page_id + "|" + p)};
    return {idx("P|" + p), idx("P|pk=" + ctx_.page_kind + "|" + p)};
  }

  std::vector<std::uint32_t> thought(const std::string& t, const std::string& plan) const {
    if (tabular()) return {idx("T|" + ctx_.page_id + "|" + t)};
    const std::string mm = std::to_string(ctx_.maxmatch);
    const std::string pm = std::to_string(ctx_.pagematch);
    return {idx("T|pk=" + ctx_.page_kind + "|mm=" + mm + "|" + t),
            idx("T|pk=" + ctx_.page_kind + "|mm=" + mm + "|pm=" + pm + "|" + t),
            idx("T|plan=" + plan + "|mm=" + mm + "|" + t),
            idx("T|prev=" + ctx_.prev_verb + "|mm=" + mm + "|" + t)};
  }

  std::vector<std::uint32_t> env(const env::Observation& obs, const env::EnvCommand& c,
                                 const std::string& thought) const {
    if (tabular()) return {idx("E|" + ctx_.page_id + "|" + env::canonical(c))};
    const std::string v = env::to_string(c.verb);
    const std::string mm = std::to_string(ctx_.maxmatch);
    std::vector<std::uint32_t> out = {idx("E|pk=" + ctx_.page_kind + "|mm=" + mm + "|v=" + v),
                                      idx("E|pk=" + ctx_.page_kind + "|mm=" + mm + "|pm=" + std::to_string(ctx_.pagematch) +
                                          "|v=" + v),
                                      idx("E|pk=" + ctx_.page_kind + "|mm=" + mm + "|prev=" + ctx_.prev_verb + "|v=" + v),
                                      idx("E|tht=" + thought + "|mm=" + mm + "|v=" + v)};
    const auto toks = command_tokens(obs, c);
    int matches = 0;
    for (const auto& g : ctx_.goal) {
      if (std::find(toks.begin(), toks.end(), g) == toks.end()) continue;
      out.push_back(idx("E|g=" + g + "|u=" + g));
      ++matches;
    }
    out.push_back(idx("E|pk=" + ctx_.page_kind + "|cm=" + std::to_string(std::min(matches, kMaxMatchBucket)) +
                      "|v=" + v));
    return out;
  }

  std::vector<std::uint32_t> explanation(const std::string& e, const env::EnvCommand& c,
                                         const std::string& thought) const {
    if (tabular()) return {idx("X|" + ctx_.page_id + "|" + e)};
    return {idx("X|v=" + env::to_string(c.verb) + "|" + e), idx("X|tht=" + thought + "|" + e)};
  }

 private:
  const PolicyParams& params_;
  const Context& ctx_;
};

double score(std::span<const double> w, double temperature, const std::vector<std::uint32_t>& feats) {
  double s = 0.0;
  for (auto f : feats) s += w[f];
  return s / temperature;
}

std::vector<double> scores_of(std::span<const double> w, double temperature,
                              const std::vector<std::vector<std::uint32_t>>& cands) {
  std::vector<double> s;
  s.reserve(cands.size());
  for (const auto& f : cands) s.push_back(score(w, temperature, f));
  return s;
}

double log_sum_exp(const std::vector<double>& s) {
  const double m = *std::max_element(s.begin(), s.end());
  double acc = 0.0;
  for (double x : s) acc += std::exp(x - m);
  return m + std::log(acc);
}

/// Softmax probabilities computed from the same log-normalizer used for
/// log-likelihoods.
std::vector<double> probabilities(const std::vector<double>& s) {
  const double lse = log_sum_exp(s);
  std::vector<double> p;
  p.reserve(s.size());
  for (double x : s) p.push_back(std::exp(x - lse));
  return p;
}

std::size_t argmax(const std::vector<double>& s) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] > s[best]) best = i;
  }
  return best;
}

template <class T>
std::size_t index_of(const std::vector<T>& v, const T& x, Part part) {
  auto it = std::find(v.begin(), v.end(), x);
  if (it == v.end()) throw DataError("out-of-vocabulary " + to_string(part) + " part");
  return static_cast<std::size_t>(it - v.begin());
}

/// Candidate feature lists for every part of one history.
struct Builder {
  const PolicyParams& params;
  const AgentHistory& h;
  Context ctx;
  FeatureBuilder fb;
  std::vector<env::EnvCommand> env_cands;

  Builder(const PolicyParams& p, const AgentHistory& hist)
      : params(p), h(hist), ctx(make_context(hist)), fb(p, ctx), env_cands(env::candidate_commands(hist.current_obs)) {
    if (env_cands.empty()) throw AdapterError("no candidate commands on page " + hist.current_obs.page_id);
  }

  std::vector<std::vector<std::uint32_t>> plan_feats() const {
    std::vector<std::vector<std::uint32_t>> out;
    for (const auto& p : params.vocab.plans) out.push_back(fb.plan(p));
    return out;
  }
  std::vector<std::vector<std::uint32_t>> thought_feats(const std::string& plan) const {
    std::vector<std::vector<std::uint32_t>> out;
    for (const auto& t : params.vocab.thoughts) out.push_back(fb.thought(t, plan));
    return out;
  }
  std::vector<std::vector<std::uint32_t>> env_feats(const std::string& thought) const {
    std::vector<std::vector<std::uint32_t>> out;
    for (const auto& c : env_cands) out.push_back(fb.env(h.current_obs, c, thought));
    return out;
  }
  std::vector<std::vector<std::uint32_t>> expl_feats(const env::EnvCommand& c, const std::string& thought) const {
    std::vector<std::vector<std::uint32_t>> out;
    for (const auto& e : params.vocab.explanations) out.push_back(fb.explanation(e, c, thought));
    return out;
  }
};


enum class Mode { Given, Sample, Greedy };

/// Walks the part chain in generation order. In Given mode the choices come
/// from `given`; otherwise each part is drawn (or argmaxed) from its softmax.
/// Returns the action with its part log-probabilities filled in. Sampling
/// draws at `sample_temperature` when positive; recorded log-probabilities
/// always use the parameters' temperature.
CompositeAction walk(const PolicyParams& params, const AgentHistory& h, Mode mode, const CompositeAction* given,
                     Rng* rng, CompiledAction* compiled, double sample_temperature = 0.0) {
  if (!(params.temperature > 0.0)) throw ConfigError("policy temperature must be positive");
  Builder b(params, h);
  const std::span<const double> w(params.weights);
  CompositeAction out;

  auto step = [&](Part part, std::vector<std::vector<std::uint32_t>> feats, std::size_t given_index) {
    const auto s = scores_of(w, params.temperature, feats);
    std::size_t choice = given_index;
    if (mode == Mode::Greedy) {
      choice = argmax(s);
    } else if (mode == Mode::Sample) {
      if (sample_temperature > 0.0) {
        choice = rng->categorical(probabilities(scores_of(w, sample_temperature, feats)));
      } else {
        choice = rng->categorical(probabilities(s));
      }
    }
    out.part_logps[to_string(part)] = s[choice] - log_sum_exp(s);
    if (compiled) compiled->parts.push_back({std::move(feats), choice});
    return choice;
  };

  const bool first = h.step_index() == 1;
  if (mode == Mode::Given && given->plan.has_value() != first) {
    throw DataError(first ? "step-1 action is missing its plan" : "plan given after step 1");
  }

  std::string plan = b.ctx.history_plan;
  if (first) {
    const std::size_t gi = mode == Mode::Given ? index_of(params.vocab.plans, *given->plan, Part::Plan) : 0;
    plan = params.vocab.plans[step(Part::Plan, b.plan_feats(), gi)];
    out.plan = plan;
  }

  std::size_t gi = mode == Mode::Given ? index_of(params.vocab.thoughts, given->thought, Part::Thought) : 0;
  out.thought = params.vocab.thoughts[step(Part::Thought, b.thought_feats(plan), gi)];

  gi = mode == Mode::Given ? index_of(b.env_cands, given->env_cmd, Part::Env) : 0;
  out.env_cmd = b.env_cands[step(Part::Env, b.env_feats(out.thought), gi)];

  gi = mode == Mode::Given ? index_of(params.vocab.explanations, given->explanation, Part::Explanation) : 0;
  out.explanation = params.vocab.explanations[step(Part::Explanation, b.expl_feats(out.env_cmd, out.thought), gi)];
  return out;
}

}  // namespace

CompiledAction compile(const PolicyParams& params, const AgentHistory& h, const CompositeAction& a) {
  CompiledAction ca;
  walk(params, h, Mode::Given, &a, nullptr, &ca);
  return ca;
}

double compiled_logp(std::span<const double> weights, double temperature, const CompiledAction& ca) {
  double total = 0.0;
  for (const auto& part : ca.parts) {
    const auto s = scores_of(weights, temperature, part.candidates);
    total += s[part.chosen] - log_sum_exp(s);
  }
  return total;
}

void accumulate_grad(std::span<const double> weights, double temperature, const CompiledAction& ca, double scale,
                     std::span<double> out) {
  const double k = scale / temperature;
  for (const auto& part : ca.parts) {
    const auto p = probabilities(scores_of(weights, temperature, part.candidates));
    for (auto f : part.candidates[part.chosen]) out[f] += k;
    for (std::size_t c = 0; c < part.candidates.size(); ++c) {
      for (auto f : part.candidates[c]) out[f] -= k * p[c];
    }
  }
}

double action_logp(const PolicyParams& params, const AgentHistory& h, const CompositeAction& a) {
  return walk(params, h, Mode::Given, &a, nullptr, nullptr).joint_logp();
}

Gradient action_logp_grad(const PolicyParams& params, const AgentHistory& h, const CompositeAction& a) {
  const CompiledAction ca = compile(params, h, a);
  const double k = 1.0 / params.temperature;
  Gradient g;
  for (const auto& part : ca.parts) {
    const auto p = probabilities(scores_of(params.weights, params.temperature, part.candidates));
    for (auto f : part.candidates[part.chosen]) g[f] += k;
    for (std::size_t c = 0; c < part.candidates.size(); ++c) {
      for (auto f : part.candidates[c]) g[f] -= k * p[c];
    }
  }
  return g;
}

PartDistribution part_distribution(const PolicyParams& params, const AgentHistory& h, Part part,
                                   const CompositeAction& earlier_parts) {
  Builder b(params, h);
  std::vector<std::vector<std::uint32_t>> feats;
  PartDistribution d;
  const std::string plan = h.step_index() == 1 ? earlier_parts.plan.value_or("") : b.ctx.history_plan;
  switch (part) {
    case Part::Plan:
      if (h.step_index() != 1) throw DataError("plan part exists only at step 1");
      feats = b.plan_feats();
      d.tokens = params.vocab.plans;
      break;
    case Part::Thought:
      feats = b.thought_feats(plan);
      d.tokens = params.vocab.thoughts;
      break;
    case Part::Env:
      feats = b.env_feats(earlier_parts.thought);
      for (const auto& c : b.env_cands) d.tokens.push_back(env::canonical(c));
      break;
    case Part::Explanation:
      feats = b.expl_feats(earlier_parts.env_cmd, earlier_parts.thought);
      d.tokens = params.vocab.explanations;
      break;
  }
  d.probs = probabilities(scores_of(params.weights, params.temperature, feats));
  return d;
}

// ---------------------------------------------------------------- sampling

CompositeAction SoftmaxPolicy::sample(const AgentHistory& h, Rng* rng) const {
  return walk(params_, h, rng ? Mode::Sample : Mode::Greedy, nullptr, rng, nullptr);
}

std::vector<CompositeAction> SoftmaxPolicy::propose(const AgentHistory& h, int k, std::uint64_t seed) const {
  if (k < 1) throw std::invalid_argument("propose: K must be >= 1");
  Rng rng(seed);
  const std::size_t distinct_available = env::candidate_commands(h.current_obs).size();
  std::vector<CompositeAction> out;
  std::vector<env::EnvCommand> seen;
  for (int i = 0; i < k; ++i) {
    CompositeAction a = sample(h, &rng);
    // A negative budget retries until a fresh command appears, as long as
    // one can.
    for (int retry = 0; retry_budget_ < 0 || retry < retry_budget_; ++retry) {
      if (std::find(seen.begin(), seen.end(), a.env_cmd) == seen.end()) break;
      if (seen.size() >= distinct_available) break;
      a = sample(h, &rng);
    }
    if (std::find(seen.begin(), seen.end(), a.env_cmd) == seen.end()) seen.push_back(a.env_cmd);
    out.push_back(std::move(a));
  }
  return out;
}

CompositeAction SoftmaxPolicy::act(const AgentHistory& h, Decode decode, std::uint64_t seed) const {
  if (decode == Decode::Greedy) return sample(h, nullptr);
  Rng rng(seed);
  return walk(params_, h, Mode::Sample, nullptr, &rng, nullptr, rollout_temperature_);
}

double SoftmaxPolicy::logp(const AgentHistory& h, const CompositeAction& a) const {
  return action_logp(params_, h, a);
}

// ---------------------------------------------------------------- prior

namespace {

std::vector<std::string> page_kinds(env::World world) {
  if (world == env::World::Shop) return {"landing", "results", "item"};
  return {"landing", "location", "search", "results", "date", "time", "find-table",
          "party", "seating", "continue", "name", "phone", "email", "complete"};
}

}  // namespace

PolicyParams make_prior_policy(env::World world, const PriorConfig& cfg, std::size_t dimension) {
  PolicyParams p;
  p.weights.assign(dimension, 0.0);
  const std::string w = env::to_string(world);
  auto add = [&](const std::string& f, double v) { p.weights[feature_index(w, f, dimension)] += v; };
  for (const auto& t : env::attribute_vocabulary(world)) add("E|g=" + t + "|u=" + t, cfg.match);
  add("P|" + p.vocab.plans.front(), cfg.habit);
  for (int m = 0; m <= kMaxMatchBucket; ++m) {
    const std::string mm = "|mm=" + std::to_string(m);
    add("T|plan=" + p.vocab.plans.front() + mm + "|" + p.vocab.thoughts.front(), cfg.habit);
    for (const auto& pk : page_kinds(world)) add("E|pk=" + pk + mm + "|v=back", -cfg.back_penalty);
    add("E|tht=look-further" + mm + "|v=next", cfg.pagination_link);
    if (world == env::World::Shop) add("E|pk=item" + mm + "|v=buy", cfg.commit);
  }
  return p;
}

}  // namespace treeq::agent
