// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "execgraph/config.hpp"
#include "execgraph/kernel.hpp"
#include "execgraph/reasoning.hpp"
#include "execgraph/tools.hpp"

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace execgraph {

struct ServiceOptions {
  /// Exposes GET /runs/{id}/audit. Off by default.
  bool audit_enabled = false;
  /// Used by runs whose request carries no script.
  std::vector<RemoteEndpointConfig> remote;
  MockToolOptions tools;
  bool enable_bash = false;
};

/// HTTP front end for runs: POST /runs, GET /runs/{id}/events,
/// POST /runs/{id}/interject, GET /runs/{id}/outcome, GET /runs/{id}/audit.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread. Port 0 picks a free port.
  /// Returns the bound port. Throws Error{config_error} if binding fails.
  int start(const std::string& host, int port);
  /// Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

  /// Starts a run directly; returns its id.
  std::string create_run(RunRequest request);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct StubRule {
  std::string tool;               // empty matches any tool
  Value match = Value::object();  // every key must equal the call parameter
  std::string pattern;            // optional regex over the compact parameter JSON
  enum class Action { allow, deny, delay } action = Action::allow;
  std::string reason;
  std::chrono::milliseconds delay{0};
  bool then_allow = true;  // verdict sent after a delay
};

/// {"rules": [{"tool", "match"?, "pattern"?, "action": "allow"|"deny"|"delay",
///   "reason"?, "delay_ms"?, "then"?: "allow"|"deny"}]}. No match allows.
std::vector<StubRule> parse_stub_rules(const Value& doc);

/// Clearance authority speaking the wire protocol, driven by rules.
class ClearanceStub {
 public:
  explicit ClearanceStub(std::vector<StubRule> rules);
  ~ClearanceStub();
  ClearanceStub(const ClearanceStub&) = delete;
  ClearanceStub& operator=(const ClearanceStub&) = delete;

  int start(const std::string& host, int port);
  void listen(const std::string& host, int port);
  void stop();

  /// First matching rule, or nullptr.
  const StubRule* match(const std::string& tool, const Value& params) const;
  std::size_t requests() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace execgraph
