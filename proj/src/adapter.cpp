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

#include "treeq/adapter.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace treeq::adapter {

ProcessChannel::ProcessChannel(std::vector<std::string> argv, int timeout_ms)
    : argv_(std::move(argv)), timeout_ms_(timeout_ms) {
  if (argv_.empty()) throw ConfigError("adapter command is empty");
  ::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0) {
    throw AdapterError(std::string("pipe failed: ") + std::strerror(errno));
  }
  pid_ = ::fork();
  if (pid_ < 0) throw AdapterError(std::string("fork failed: ") + std::strerror(errno));
  if (pid_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    std::vector<char*> args;
    for (auto& a : argv_) args.push_back(a.data());
    args.push_back(nullptr);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

ProcessChannel::~ProcessChannel() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    ::kill(pid_, SIGTERM);
    ::waitpid(pid_, nullptr, 0);
  }
}

std::string ProcessChannel::request(const std::string& line) {
  std::lock_guard<std::mutex> lock(mu_);
  const std::string out = line + "\n";
  std::size_t sent = 0;
  while (sent < out.size()) {
    const ssize_t n = ::write(to_child_, out.data() + sent, out.size() - sent);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw AdapterError("adapter '" + argv_[0] + "' stream closed while writing");
    }
    sent += static_cast<std::size_t>(n);
  }
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
  for (;;) {
    if (auto nl = pending_.find('\n'); nl != std::string::npos) {
      std::string reply = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      return reply;
    }
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
    if (left <= 0) {
      throw AdapterError("adapter '" + argv_[0] + "' timed out after " + std::to_string(timeout_ms_) + " ms");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int r = ::poll(&pfd, 1, static_cast<int>(left));
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) continue;
    char buf[4096];
    const ssize_t n = ::read(from_child_, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw AdapterError("adapter '" + argv_[0] + "' closed its output stream");
    pending_.append(buf, static_cast<std::size_t>(n));
  }
}

Json call(Channel& channel, const Json& request) {
  const std::string reply = channel.request(request.dump());
  Json j;
  try {
    j = Json::parse(reply);
  } catch (const Json::exception&) {
    throw AdapterError("adapter protocol violation: reply is not JSON: '" + reply.substr(0, 80) + "'");
  }
  if (!j.is_object()) throw AdapterError("adapter protocol violation: reply is not an object");
  if (j.contains("error")) throw AdapterError("adapter reported error: " + j.at("error").dump());
  return j;
}

namespace {

template <class F>
auto protocol(const char* what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw AdapterError(std::string("adapter protocol violation in ") + what + " reply: " + e.what());
  } catch (const EnvError& e) {
    throw AdapterError(std::string("adapter protocol violation in ") + what + " reply: " + e.what());
  }
}

}  // namespace

std::vector<agent::CompositeAction> ExternalPolicy::propose(const agent::AgentHistory& h, int k,
                                                            std::uint64_t seed) const {
  const Json reply = call(channel_, Json{{"type", "propose"}, {"history", h}, {"k", k}, {"seed", seed}});
  auto actions = protocol("propose", [&] { return reply.at("actions").get<std::vector<agent::CompositeAction>>(); });
  if (static_cast<int>(actions.size()) != k) {
    throw AdapterError("adapter protocol violation: expected " + std::to_string(k) + " actions, got " +
                       std::to_string(actions.size()));
  }
  for (const auto& a : actions) {
    if (a.plan.has_value() != (h.step_index() == 1)) {
      throw AdapterError("adapter protocol violation: plan present iff step 1");
    }
  }
  return actions;
}

agent::CompositeAction ExternalPolicy::act(const agent::AgentHistory& h, agent::Decode, std::uint64_t seed) const {
  return propose(h, 1, seed).front();
}

double ExternalPolicy::logp(const agent::AgentHistory& h, const agent::CompositeAction& a) const {
  const Json reply = call(channel_, Json{{"type", "logp"}, {"history", h}, {"action", a}});
  return protocol("logp", [&] { return reply.at("logp").get<double>(); });
}

int ExternalJudge::judge(const agent::Trajectory& traj) const {
  const Json reply = call(channel_, Json{{"type", "judge"}, {"trajectory", traj}});
  const int r = protocol("judge", [&] { return reply.at("reward").get<int>(); });
  if (r != 0 && r != 1) throw AdapterError("adapter protocol violation: judge reward must be 0 or 1");
  return r;
}

}  // namespace treeq::adapter
