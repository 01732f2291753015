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

// Line-delimited JSON adapters for external policies, critics and judges.
// Every request is one JSON object on one line; every response likewise.
// Timeouts, closed streams and malformed replies raise AdapterError.

#pragma once

#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "treeq/agent.hpp"
#include "treeq/serialize.hpp"

namespace treeq::adapter {

class Channel {
 public:
  virtual ~Channel() = default;
  /// Sends one line (without the newline) and returns one response line.
  virtual std::string request(const std::string& line) = 0;
};

/// Talks to a child process over its stdin/stdout.
class ProcessChannel : public Channel {
 public:
  ProcessChannel(std::vector<std::string> argv, int timeout_ms);
  ~ProcessChannel() override;
  ProcessChannel(const ProcessChannel&) = delete;
  ProcessChannel& operator=(const ProcessChannel&) = delete;

  std::string request(const std::string& line) override;

 private:
  std::vector<std::string> argv_;
  int timeout_ms_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string pending_;
  std::mutex mu_;
};

/// In-process channel, mainly for tests.
class CallbackChannel : public Channel {
 public:
  explicit CallbackChannel(std::function<std::string(const std::string&)> fn) : fn_(std::move(fn)) {}
  std::string request(const std::string& line) override { return fn_(line); }

 private:
  std::function<std::string(const std::string&)> fn_;
};

/// Sends a request object and parses the reply. A reply carrying an
/// "error" field is surfaced as AdapterError.
Json call(Channel& channel, const Json& request);

class ExternalPolicy : public agent::Policy {
 public:
  explicit ExternalPolicy(Channel& channel) : channel_(channel) {}

  std::vector<agent::CompositeAction> propose(const agent::AgentHistory& h, int k, std::uint64_t seed) const override;
  agent::CompositeAction act(const agent::AgentHistory& h, agent::Decode decode, std::uint64_t seed) const override;
  double logp(const agent::AgentHistory& h, const agent::CompositeAction& a) const override;

 private:
  Channel& channel_;
};

/// Outcome judge behind the adapter: {"type":"judge","trajectory":...} ->
/// {"reward":0|1}.
class ExternalJudge {
 public:
  explicit ExternalJudge(Channel& channel) : channel_(channel) {}
  int judge(const agent::Trajectory& traj) const;

 private:
  Channel& channel_;
};

}  // namespace treeq::adapter
