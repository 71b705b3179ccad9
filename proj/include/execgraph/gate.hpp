// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "execgraph/value.hpp"

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace execgraph {

/// 0 observe/read, 1 operate/write, 2 control/delete.
enum class ImpactLevel : int { observe = 0, operate = 1, control = 2 };

ImpactLevel impact_from_int(int level);
constexpr int to_int(ImpactLevel l) noexcept { return static_cast<int>(l); }

/// Operational ceiling of a run. Set by whoever triggers the run, fixed for
/// its lifetime. Nothing a reasoning provider returns can construct one.
class IntentCeiling {
 public:
  explicit constexpr IntentCeiling(ImpactLevel level) noexcept : level_(level) {}
  constexpr ImpactLevel level() const noexcept { return level_; }

 private:
  ImpactLevel level_;
};

/// Tool allowlist with optional per-tool impact ceilings. Absent cap means
/// control (2). Absent tool means denied.
struct ScopeSet {
  std::set<std::string> tools;
  std::map<std::string, ImpactLevel> caps;

  bool allows(std::string_view tool) const { return tools.contains(std::string(tool)); }
  ImpactLevel cap_for(std::string_view tool) const;

  bool operator==(const ScopeSet&) const = default;
};

/// Tools by union, caps by minimum. Throws Error{empty_scope_list}.
ScopeSet merge_scopes(std::span<const ScopeSet> scopes);

/// Regex searched against the compact JSON of the call parameters.
class ImpactRule {
 public:
  ImpactRule(std::string pattern, ImpactLevel level);

  const std::string& pattern() const { return pattern_; }
  ImpactLevel level() const { return level_; }
  bool matches(const std::string& serialized_params) const;

 private:
  std::string pattern_;
  ImpactLevel level_;
  std::shared_ptr<const std::regex> re_;
};

/// Maximum level among matching rules, else `static_level`.
ImpactLevel classify_impact(std::string_view tool, const Value& params,
                            std::span<const ImpactRule> rules, ImpactLevel static_level);

struct ClearanceConfig {
  std::string endpoint;  // http://host:port/path
  std::chrono::milliseconds timeout{2000};
  std::string identity;
};

struct ClearanceVerdict {
  bool allow = false;
  std::string reason;
};

/// Resource-level authority consulted as the last gate stage.
class ClearanceAuthority {
 public:
  virtual ~ClearanceAuthority() = default;
  virtual ClearanceVerdict check(std::string_view tool, const Value& params,
                                 std::string_view user) = 0;
};

/// Speaks the clearance wire protocol over HTTP. Any transport anomaly,
/// non-2xx status, or malformed body is a denial.
class HttpClearance final : public ClearanceAuthority {
 public:
  explicit HttpClearance(ClearanceConfig config);
  ClearanceVerdict check(std::string_view tool, const Value& params,
                         std::string_view user) override;
  const ClearanceConfig& config() const { return config_; }

 private:
  ClearanceConfig config_;
};

ClearanceVerdict check_clearance(const ClearanceConfig& config, std::string_view tool,
                                 const Value& params, std::string_view user);

enum class GateStage { scope, intent, clearance, passed };
std::string_view to_string(GateStage stage) noexcept;

/// `internal_reason` is audit-only and never reaches a provider.
struct GateDecision {
  bool allow = false;
  GateStage stage = GateStage::scope;
  std::string internal_reason;
  std::optional<ImpactLevel> impact;
};

/// What the gate needs to know about the tool being called.
struct ImpactProfile {
  ImpactLevel static_level = ImpactLevel::control;
  std::span<const ImpactRule> rules;
};

/// Stage work counters; used to confirm short-circuiting.
struct GateStats {
  std::atomic<std::uint64_t> impact_classifications{0};
  std::atomic<std::uint64_t> clearance_requests{0};
};

/// Scope, then impact against min(intent, cap), then clearance. Stops at the
/// first denial. `clearance` may be null (stage skipped).
GateDecision evaluate(std::string_view tool, const Value& params, std::string_view user,
                      const ImpactProfile& impact, const ScopeSet& scope, IntentCeiling intent,
                      ClearanceAuthority* clearance, GateStats* stats = nullptr);

/// Text shown in place of any blocked node's real reason.
inline constexpr std::string_view kGenericToolError = "tool execution failed";

}  // namespace execgraph
