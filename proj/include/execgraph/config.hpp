// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "execgraph/kernel.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace execgraph {

/// Trigger-side policy: scopes, intent ceiling, clearance authority, user.
struct Policy {
  ScopeSet scope;
  IntentCeiling intent{ImpactLevel::control};
  std::optional<ClearanceConfig> clearance;
  std::string user = "operator";
};

/// {"scopes": [{"tools": [...], "caps": {tool: 0..2}}], "intent": 0..2,
///  "clearance": {"endpoint", "timeout_ms"}, "user"}. Errors name the key.
Policy parse_policy(const Value& doc);

/// Reads and parses a JSON file. Throws Error{config_error}.
Value load_json_file(const std::string& path);

/// {"max_provider_calls", "wall_clock_ms", "max_micro_plans_per_node"}; absent
/// keys keep their defaults.
Budget parse_budget(const Value& doc);

void apply_policy(RunConfig& config, const Policy& policy);

/// Body of POST /runs and the input of the run command.
struct RunRequest {
  std::string task;
  RunConfig config;
  std::optional<std::vector<ScriptEntry>> script;  // absent: use the remote provider
};

/// {"task", "mode", "policy", "budget"?, "aggregator"?, "script"?,
///  "interjection"?}. The policy may be inline or a path string.
RunRequest parse_run_request(const Value& doc);

/// [{"endpoint", "model", "role"}...] or a single object.
std::vector<RemoteEndpointConfig> parse_remote_configs(const Value& doc);

}  // namespace execgraph
