// SPDX-License-Identifier: Apache-2.0
// Helpers shared by the unit tests and the acceptance binary.
#pragma once

#include "execgraph/events.hpp"
#include "execgraph/kernel.hpp"
#include "execgraph/reasoning.hpp"
#include "execgraph/tools.hpp"

#include <chrono>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace execgraph::testing {

inline Value step(std::uint64_t i, std::string tool, Value params,
                  std::vector<std::uint64_t> deps = {}, Value refs = Value::object()) {
  if (params.is_null()) params = Value::object();
  if (refs.is_null()) refs = Value::object();
  return Value{{"step", i},       {"tool", std::move(tool)}, {"params", std::move(params)},
               {"param_refs", std::move(refs)}, {"depends_on", deps}};
}

inline ScriptEntry plan_entry(Value steps) { return {CallKind::plan, std::move(steps)}; }
inline ScriptEntry conclude(std::string text, CallKind kind = CallKind::reflect) {
  return {kind, Value{{"kind", "conclude"}, {"text", std::move(text)}}};
}
inline ScriptEntry proceed(CallKind kind = CallKind::reflect) {
  return {kind, Value{{"kind", "continue"}}};
}
inline ScriptEntry replan(Value steps) {
  return {CallKind::reflect, Value{{"kind", "replan"}, {"steps", std::move(steps)}}};
}

/// Scope holding every mock tool (and bash), intent ceiling 2.
inline RunConfig open_config(Mode mode = Mode::reflect()) {
  RunConfig cfg;
  cfg.mode = mode;
  cfg.scope.tools = {"echo", "sleep", "fail", "kv_fetch", "synth_result", "bash"};
  cfg.intent = IntentCeiling(ImpactLevel::control);
  cfg.budget.wall_clock = std::chrono::milliseconds(30000);
  return cfg;
}

inline ToolRegistry mock_registry(MockToolOptions opts = {}) {
  ToolRegistry r;
  register_mock_tools(r, std::move(opts));
  return r;
}

inline std::size_t count_kind(const Graph& g, NodeKind kind) {
  std::size_t n = 0;
  for (const auto& [id, node] : g.nodes())
    if (node.kind == kind) ++n;
  return n;
}

inline std::vector<Event> events_of(const std::vector<Event>& log, EventKind kind) {
  std::vector<Event> out;
  for (const auto& e : log)
    if (e.kind == kind) out.push_back(e);
  return out;
}

/// The audit-scenario script: one-step plan, replan 4, replan 2 with a
/// cross-wave reference to node 4, conclude.
inline std::vector<ScriptEntry> audit_script() {
  return {
      plan_entry(Value::array({step(0, "kv_fetch", {{"key", "disk_usage"}})})),
      replan(Value::array({step(0, "kv_fetch", {{"key", "net_info"}}),
                           step(1, "kv_fetch", {{"key", "find_repos"}}),
                           step(2, "kv_fetch", {{"key", "uname"}}),
                           step(3, "kv_fetch", {{"key", "env_list"}})})),
      replan(Value::array(
          {step(0, "kv_fetch", Value::object(), {},
                {{"key", {{"node", 4}, {"field", "kernel"}, {"template", "cve_{value}"}}}}),
           step(1, "kv_fetch", {{"key", "secret_scan"}})})),
      conclude("kernel 6.1.0 has two advisories; /var is 93% full; a password sits in .env"),
  };
}

inline Value audit_fixtures() {
  return Value{{"disk_usage", {{"var_used_pct", 93}}},
               {"net_info", {{"listening", {22, 80}}}},
               {"find_repos", {{"count", 2}}},
               {"uname", {{"kernel", "6.1.0"}}},
               {"env_list", {{"vars", {"PATH", "DB_PASSWORD"}}}},
               {"cve_6.1.0", {{"advisories", {"CVE-2023-0001", "CVE-2023-0002"}}}},
               {"secret_scan", {{"hits", 1}}}};
}

/// Dependencies of nodes still pending, folded from the log.
inline std::map<NodeId, std::set<NodeId>> pending_deps_from(const std::vector<Event>& log) {
  std::map<NodeId, std::set<NodeId>> deps;
  for (const auto& e : log) {
    if (e.kind == EventKind::node_added) {
      std::set<NodeId> d;
      for (const auto& x : e.payload.at("depends_on")) d.insert(NodeId{x.get<std::uint64_t>()});
      deps[*e.node_id] = d;
      for (const auto& g : e.payload.value("gates", Value::array())) deps[NodeId{g.get<std::uint64_t>()}].insert(*e.node_id);
    } else if (e.kind == EventKind::state_changed) {
      deps.erase(*e.node_id);
    }
  }
  return deps;
}

/// Polls until `count` nodes have entered running.
inline void wait_running(Run& run, std::size_t count) {
  for (int i = 0; i < 500; ++i) {
    std::size_t running = 0;
    for (const auto& e : run.events().snapshot())
      if (e.kind == EventKind::state_changed && e.payload.value("to", "") == "running") ++running;
    if (running >= count) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

}  // namespace execgraph::testing
