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

// JSON forms of the core value types. Commands are stored in their
// canonical text form; trajectories store one observation per step and
// rebuild history snapshots on load.

#pragma once

#include <string>

#include "json.hpp"
#include "treeq/agent.hpp"
#include "treeq/env.hpp"
#include "treeq/oracle.hpp"
#include "treeq/policy.hpp"

namespace treeq {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Parses text as JSON, raising DataError with `what` in the message.
Json parse_json(const std::string& text, const std::string& what);

/// Reads and parses a file; DataError on IO or syntax failure.
Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace treeq

namespace treeq::env {

void to_json(Json& j, const InteractiveElement& e);
void from_json(const Json& j, InteractiveElement& e);
void to_json(Json& j, const Observation& o);
void from_json(const Json& j, Observation& o);
void to_json(Json& j, const EnvCommand& c);
void from_json(const Json& j, EnvCommand& c);
void to_json(Json& j, const TaskLayout& l);
void from_json(const Json& j, TaskLayout& l);
void to_json(Json& j, const TaskSpec& t);
void from_json(const Json& j, TaskSpec& t);

}  // namespace treeq::env

namespace treeq::agent {

void to_json(Json& j, const CompositeAction& a);
void from_json(const Json& j, CompositeAction& a);
void to_json(Json& j, const AgentHistory& h);
void from_json(const Json& j, AgentHistory& h);
void to_json(Json& j, const Trajectory& t);
void from_json(const Json& j, Trajectory& t);
void to_json(Json& j, const TemplateVocab& v);
void from_json(const Json& j, TemplateVocab& v);
/// Weights are stored sparsely as {"index": value} for nonzero entries.
void to_json(Json& j, const PolicyParams& p);
void from_json(const Json& j, PolicyParams& p);

}  // namespace treeq::agent

namespace treeq::oracle {

void to_json(Json& j, const ExactSolution& s);
void from_json(const Json& j, ExactSolution& s);

}  // namespace treeq::oracle
