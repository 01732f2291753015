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

// Log-linear softmax policy over composite actions. Each part is a softmax
// over a small candidate vocabulary, conditioned on the history and on the
// parts generated before it:
//
//   step 1:  plan -> thought -> env -> explanation
//   later:   thought -> env -> explanation
//
// Candidate scores are sums of hashed feature weights divided by the
// temperature, so every likelihood and gradient is exact.

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "treeq/agent.hpp"

namespace treeq::agent {

struct TemplateVocab {
  std::vector<std::string> plans;
  std::vector<std::string> thoughts;
  std::vector<std::string> explanations;

  static TemplateVocab defaults();
  bool operator==(const TemplateVocab&) const = default;
};

inline constexpr const char* kHashedConjExtractor = "hashed-conj-v1";
/// One indicator feature per (page, part, candidate): a plain lookup table.
inline constexpr const char* kTabularExtractor = "tabular-v1";
inline constexpr std::size_t kDefaultDimension = std::size_t{1} << 18;

struct PolicyParams {
  std::vector<double> weights = std::vector<double>(kDefaultDimension, 0.0);
  std::string extractor = kHashedConjExtractor;
  double temperature = 1.0;
  TemplateVocab vocab = TemplateVocab::defaults();
  int version = 0;

  std::size_t dimension() const { return weights.size(); }
  bool operator==(const PolicyParams&) const = default;
};

/// Sparse gradient keyed by weight index, ordered for deterministic output.
using Gradient = std::map<std::uint32_t, double>;

/// Feature indices of every candidate of one part, and which one was taken.
struct CompiledPart {
  std::vector<std::vector<std::uint32_t>> candidates;
  std::size_t chosen = 0;
};

/// Weight-independent form of (history, action): enough to evaluate the
/// log-likelihood and its gradient for any weight vector.
struct CompiledAction {
  std::vector<CompiledPart> parts;
};

/// Throws AdapterError if any part of the action is outside the candidate
/// vocabulary the policy offers for this history.
CompiledAction compile(const PolicyParams& params, const AgentHistory& h, const CompositeAction& a);

double compiled_logp(std::span<const double> weights, double temperature, const CompiledAction& ca);

/// Adds scale * d logp / d weights into a dense accumulator.
void accumulate_grad(std::span<const double> weights, double temperature, const CompiledAction& ca, double scale,
                     std::span<double> out);

double action_logp(const PolicyParams& params, const AgentHistory& h, const CompositeAction& a);
Gradient action_logp_grad(const PolicyParams& params, const AgentHistory& h, const CompositeAction& a);

/// Probabilities of every candidate of one part given the earlier parts.
struct PartDistribution {
  std::vector<std::string> tokens;
  std::vector<double> probs;
};

PartDistribution part_distribution(const PolicyParams& params, const AgentHistory& h, Part part,
                                   const CompositeAction& earlier_parts);

class SoftmaxPolicy : public Policy {
 public:
  /// `rollout_temperature` > 0 overrides the sampling temperature of act()
  /// without changing the recorded log-probabilities.
  explicit SoftmaxPolicy(PolicyParams params, int retry_budget = 8, double rollout_temperature = 0.0)
      : params_(std::move(params)), retry_budget_(retry_budget), rollout_temperature_(rollout_temperature) {}

  std::vector<CompositeAction> propose(const AgentHistory& h, int k, std::uint64_t seed) const override;
  CompositeAction act(const AgentHistory& h, Decode decode, std::uint64_t seed) const override;
  double logp(const AgentHistory& h, const CompositeAction& a) const override;

  const PolicyParams& params() const { return params_; }

 private:
  CompositeAction sample(const AgentHistory& h, Rng* rng) const;

  PolicyParams params_;
  int retry_budget_;
  double rollout_temperature_;
};

struct PriorConfig {
  /// Weight on goal-token/candidate-token equality features.
  double match = 1.5;
  /// Preference for non-backtracking commands.
  double back_penalty = 1.5;
  /// How strongly the "look-further" thought steers toward pagination.
  double pagination_link = 6.0;
  /// Preference for committing (buy/submit) over leaving a page.
  double commit = 2.0;
  /// Margin of the default plan and thought over the alternatives.
  double habit = 0.5;
};

/// Hand-initialized weights standing in for a pretrained base model: it
/// prefers candidates that echo the goal and rarely paginates unless its
/// thought says so. Greedy decoding of this policy is page-0 greedy.
PolicyParams make_prior_policy(env::World world, const PriorConfig& cfg = {},
                               std::size_t dimension = kDefaultDimension);

/// Weight index of a hashed feature string for a world.
std::uint32_t feature_index(const std::string& world, const std::string& feature, std::size_t dimension);

}  // namespace treeq::agent
