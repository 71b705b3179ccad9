// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "execgraph/events.hpp"
#include "execgraph/gate.hpp"
#include "execgraph/graph.hpp"
#include "execgraph/reasoning.hpp"
#include "execgraph/tools.hpp"

#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace execgraph {

struct Mode {
  enum class Kind { reflect, nreflect, orchestrator };
  Kind kind = Kind::reflect;
  std::size_t n = 4;  // nreflect only

  static Mode reflect() { return {Kind::reflect, 4}; }
  static Mode nreflect(std::size_t n) { return {Kind::nreflect, n}; }
  static Mode orchestrator() { return {Kind::orchestrator, 4}; }

  bool operator==(const Mode&) const = default;
};

/// "reflect", "orchestrator", "nreflect" (N=4) or "nreflect=N".
Mode parse_mode(std::string_view text);
std::string to_string(const Mode& mode);

struct Budget {
  std::size_t max_provider_calls = 25;
  std::chrono::milliseconds wall_clock{120000};
  std::size_t max_micro_plans_per_node = 2;
};

enum class AggregatorMode { disabled, executor_model, reasoning_model };
std::string_view to_string(AggregatorMode mode) noexcept;
AggregatorMode aggregator_mode_from_string(std::string_view text);

struct RunConfig {
  Mode mode;
  Budget budget;
  AggregatorMode aggregator = AggregatorMode::disabled;
  ScopeSet scope;
  IntentCeiling intent{ImpactLevel::control};
  std::optional<ClearanceConfig> clearance;
  /// Used instead of an HTTP client for `clearance` when set.
  std::shared_ptr<ClearanceAuthority> clearance_authority;
  std::string user = "operator";
  bool interjection_enabled = true;
  std::size_t max_concurrency = 16;
  std::size_t max_entry_tokens = 8192;
  /// Base context shown to the planner only.
  std::string planner_preamble;
};

/// Throws Error{config_error} naming the offending field.
void validate(const RunConfig& config);

enum class Termination { concluded, budget, wall_clock };
std::string_view to_string(Termination t) noexcept;

struct Counters {
  std::size_t provider_calls = 0;
  std::size_t tool_executions = 0;
  std::size_t waves = 0;
  std::size_t tokens_in = 0;
  std::size_t tokens_out = 0;

  bool operator==(const Counters&) const = default;
};

Value to_json(const Counters& c);

/// Recomputes the outcome counters from an event log.
Counters fold_counters(std::span<const Event> log);

struct RunOutcome {
  std::string verdict_text;
  Graph graph;
  Counters counters;
  Termination termination = Termination::concluded;
};

Value outcome_to_json(const RunOutcome& outcome);

/// One execution of a task. The registry and provider must outlive the run.
class Run {
 public:
  Run(std::string task, RunConfig config, const ToolRegistry& registry, Provider& provider);
  ~Run();
  Run(const Run&) = delete;
  Run& operator=(const Run&) = delete;

  void start();

  /// Gates every pending node behind a new interjection node and returns its
  /// id. Throws Error{run_not_active} once the run has concluded or stopped.
  NodeId interject(std::string message);

  /// Blocks until the run has finished.
  const RunOutcome& wait();

  bool done() const;
  std::optional<RunOutcome> outcome() const;

  EventLog& events();
  const GateStats& gate_stats() const;
  const std::string& task() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs to completion on the calling thread's behalf.
RunOutcome run(std::string task, RunConfig config, const ToolRegistry& registry,
               Provider& provider);

}  // namespace execgraph
