// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "execgraph/graph.hpp"
#include "execgraph/tools.hpp"
#include "execgraph/value.hpp"

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace execgraph {

enum class CallKind { plan, reflect, observe, micro_plan, aggregate };
enum class ModelRole { reasoning, executor };

std::string_view to_string(CallKind kind) noexcept;
std::string_view to_string(ModelRole role) noexcept;
CallKind call_kind_from_string(std::string_view text);
ModelRole model_role_from_string(std::string_view text);

// ---------------------------------------------------------------------------
// Wire documents
// ---------------------------------------------------------------------------

/// Reference from a plan step to a value: either an earlier step of the same
/// plan (`step`) or an existing graph node (`node`).
struct PlanRef {
  std::optional<std::uint64_t> step;
  std::optional<NodeId> node;
  std::string field;
  std::optional<std::string> template_text;

  bool operator==(const PlanRef&) const = default;
};

struct PlanStep {
  std::uint64_t step = 0;
  std::string tool;
  Value params = Value::object();
  std::map<std::string, PlanRef> param_refs;
  std::vector<std::uint64_t> depends_on;

  bool operator==(const PlanStep&) const = default;
};

using Plan = std::vector<PlanStep>;

struct Verdict {
  enum class Kind { continue_run, conclude, replan };
  Kind kind = Kind::continue_run;
  std::string text;
  Plan steps;

  bool operator==(const Verdict&) const = default;
};

struct ObserverAction {
  enum class Kind { continue_run, inject, cancel, trigger_reflection };
  Kind kind = Kind::continue_run;
  Plan steps;
  std::vector<NodeId> cancel;

  bool operator==(const ObserverAction&) const = default;
};

struct Replacement {
  enum class Kind { retry, substitute, skip };
  Kind kind = Kind::skip;
  Value params = Value::object();  // retry
  PlanStep step;                   // substitute

  bool operator==(const Replacement&) const = default;
};

/// All parsers throw Error{provider_parse_error} on schema violations.
Plan parse_plan(const Value& doc);
Verdict parse_verdict(const Value& doc);
ObserverAction parse_observer_action(const Value& doc);
Replacement parse_replacement(const Value& doc);
std::string parse_aggregate(const Value& doc);

Value to_json(const PlanStep& step);
Value to_json(const Plan& plan);
Value to_json(const Verdict& verdict);
Value to_json(const ObserverAction& action);
Value to_json(const Replacement& replacement);

/// Parses `text` as a JSON document. On failure, retries once on the span
/// from the first '{' or '[' to the last matching closer, dropping any prose
/// around it. Throws Error{provider_parse_error}.
Value extract_document(std::string_view text);

// ---------------------------------------------------------------------------
// Context assembly
// ---------------------------------------------------------------------------

struct EvidenceEntry {
  NodeId node_id;
  std::string tool;
  std::string text;  // rendered result, or the generic error for failures
  bool ok = true;
};

struct Evidence {
  std::vector<EvidenceEntry> entries;
};

/// Cumulative evidence from the resolved and failed tool nodes of `graph`,
/// in id order. Failed entries carry only the generic error. Entries longer
/// than `max_entry_tokens` are truncated.
Evidence collect_evidence(const Graph& graph, std::size_t max_entry_tokens);

EvidenceEntry evidence_entry(const Node& node, std::size_t max_entry_tokens);

struct ProviderInput {
  CallKind kind = CallKind::plan;
  std::string text;
  std::size_t tokens = 0;
};

/// `preamble` is base context placed before the task (system text, prior
/// conversation); only the planner receives it.
ProviderInput build_planner_context(std::string_view task, std::span<const ToolIndexEntry> index,
                                    std::string_view preamble = {});
/// `note` is an extra line of evidence with no origin label.
ProviderInput build_reflection_context(std::string_view task, const Evidence& evidence,
                                       std::optional<std::string_view> note = std::nullopt);
ProviderInput build_observer_context(std::string_view task, const EvidenceEntry& result);
ProviderInput build_micro_planner_context(std::string_view task, const Node& failed,
                                          std::span<const EvidenceEntry> siblings);
ProviderInput build_aggregator_context(std::string_view task, const Evidence& evidence);

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

struct ProviderOutput {
  Value document;
  std::string raw;
  std::size_t tokens = 0;
};

/// The reasoning layer as the kernel sees it. Implementations must tolerate
/// concurrent calls.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual ProviderOutput call(CallKind kind, ModelRole role, const ProviderInput& input) = 0;
};

struct ScriptEntry {
  CallKind kind;
  Value output;
};

struct RecordedCall {
  CallKind kind;
  ModelRole role;
  ProviderInput input;
  std::optional<ProviderOutput> output;
};

/// Replays canned outputs in order. One consumer at a time.
class ScriptedProvider final : public Provider {
 public:
  explicit ScriptedProvider(std::vector<ScriptEntry> script);

  /// Throws Error{script_exhausted} or Error{kind_mismatch}.
  ProviderOutput call(CallKind kind, ModelRole role, const ProviderInput& input) override;

  std::vector<RecordedCall> calls() const;
  std::size_t remaining() const;

 private:
  mutable std::mutex mu_;
  std::vector<ScriptEntry> script_;
  std::size_t cursor_ = 0;
  std::vector<RecordedCall> calls_;
};

/// Script file format: [{"kind": "plan", "output": <document>}, ...].
std::vector<ScriptEntry> parse_script(const Value& doc);
std::vector<ScriptEntry> load_script(const std::string& path);
Value script_to_json(std::span<const ScriptEntry> script);

struct RemoteEndpointConfig {
  std::string endpoint;  // chat-completions URL
  std::string model;
  ModelRole role = ModelRole::reasoning;
  std::string api_key_env;  // name of an environment variable; empty for none
  std::chrono::milliseconds timeout{60000};
};

/// {"endpoint": URL, "model": string, "role": "reasoning"|"executor"}.
RemoteEndpointConfig parse_remote_config(const Value& doc);

/// Chat-completions adapter. Calls go to the endpoint configured for the
/// requested role; when only one endpoint exists it serves both.
class RemoteProvider final : public Provider {
 public:
  explicit RemoteProvider(std::vector<RemoteEndpointConfig> endpoints);

  /// Throws Error{provider_transport} or Error{provider_parse_error}.
  ProviderOutput call(CallKind kind, ModelRole role, const ProviderInput& input) override;

  const RemoteEndpointConfig& endpoint_for(ModelRole role) const;

 private:
  std::vector<RemoteEndpointConfig> endpoints_;
};

/// Output schema instructions sent as the system message for each call kind.
std::string_view output_instructions(CallKind kind) noexcept;

}  // namespace execgraph
