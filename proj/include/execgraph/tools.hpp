// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "execgraph/gate.hpp"
#include "execgraph/value.hpp"

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace execgraph {

enum class ParamType { string, integer, number, boolean, object, array, any };

std::string_view to_string(ParamType t) noexcept;

struct ParamSpec {
  ParamType type = ParamType::any;
  bool required = false;
  std::string description;
};

struct ToolDescriptor {
  std::string name;
  std::string summary;  // one line, no schema
  std::map<std::string, ParamSpec> param_schema;
  ImpactLevel static_impact = ImpactLevel::observe;
  std::vector<ImpactRule> impact_rules;
  std::optional<std::chrono::milliseconds> simulated_latency;
  bool reentrant = true;
};

struct ToolResult {
  Value value;
  std::size_t size_tokens = 0;
};

/// What the planner sees per tool: name and one-line summary.
struct ToolIndexEntry {
  std::string name;
  std::string summary;
};

/// Pure function of its parameters; throws to signal failure.
using ToolExecutor = std::function<Value(const Value& params)>;

/// Longest summary accepted at registration, in tokens.
inline constexpr std::size_t kMaxSummaryTokens = 40;

class ToolRegistry {
 public:
  ToolRegistry() = default;
  ToolRegistry(ToolRegistry&&) = default;
  ToolRegistry& operator=(ToolRegistry&&) = default;

  /// Throws Error{duplicate_name}; Error{config_error} for an over-long summary.
  void register_tool(ToolDescriptor descriptor, ToolExecutor executor);

  const ToolDescriptor* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }
  std::vector<std::string> names() const;
  std::size_t size() const { return tools_.size(); }

  /// Index entries for registered tools inside `scope`, by name.
  std::vector<ToolIndexEntry> compiled_index(const ScopeSet& scope) const;

  /// Full parameter schema document, resolved only at execution time.
  Value full_schema(std::string_view name) const;

  ImpactProfile impact_profile(std::string_view name) const;

  /// Validates params against the schema, honours simulated latency, runs the
  /// executor. Throws unknown_tool, param_validation, or tool_error.
  ToolResult dispatch(std::string_view name, const Value& params) const;

 private:
  struct Entry {
    ToolDescriptor descriptor;
    ToolExecutor executor;
    std::unique_ptr<std::mutex> serial;  // held around non-reentrant executors
  };
  std::map<std::string, Entry, std::less<>> tools_;
};

/// Throws Error{param_validation} naming the first bad parameter.
void validate_params(const ToolDescriptor& descriptor, const Value& params);

std::string index_entry_text(const ToolIndexEntry& entry);

struct MockToolOptions {
  Value fixtures = Value::object();  // key -> value store for kv_fetch
  std::optional<std::chrono::milliseconds> synth_latency;
};

/// echo, sleep, fail, kv_fetch, synth_result.
void register_mock_tools(ToolRegistry& registry, MockToolOptions options = {});

/// Real shell tool: impact 1, rm/mkfs/dd raise it to 2. Not registered unless
/// asked for.
void register_bash_tool(ToolRegistry& registry);

/// Reads a JSON object of key -> value from disk.
Value load_fixture_store(const std::string& path);

/// Text of exactly `tokens` tokens, deterministic in (`tokens`, `tag`).
std::string synth_text(std::size_t tokens, std::string_view tag);

}  // namespace execgraph
