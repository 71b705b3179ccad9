// SPDX-License-Identifier: Apache-2.0
#include "execgraph/gate.hpp"

#include "execgraph/error.hpp"

#include <algorithm>

namespace execgraph {

ImpactLevel impact_from_int(int level) {
  if (level < 0 || level > 2)
    throw Error(Errc::config_error, "impact level " + std::to_string(level) + " outside 0..2");
  return static_cast<ImpactLevel>(level);
}

ImpactLevel ScopeSet::cap_for(std::string_view tool) const {
  auto it = caps.find(std::string(tool));
  return it == caps.end() ? ImpactLevel::control : it->second;
}

ScopeSet merge_scopes(std::span<const ScopeSet> scopes) {
  if (scopes.empty()) throw Error(Errc::empty_scope_list, "cannot merge an empty scope list");
  ScopeSet out;
  for (const ScopeSet& s : scopes) out.tools.insert(s.tools.begin(), s.tools.end());
  for (const std::string& tool : out.tools) {
    ImpactLevel cap = ImpactLevel::control;
    for (const ScopeSet& s : scopes)
      if (s.allows(tool)) cap = std::min(cap, s.cap_for(tool));
    if (cap != ImpactLevel::control) out.caps.emplace(tool, cap);
  }
  return out;
}

ImpactRule::ImpactRule(std::string pattern, ImpactLevel level)
    : pattern_(std::move(pattern)),
      level_(level),
      re_(std::make_shared<const std::regex>(pattern_, std::regex::ECMAScript)) {}

bool ImpactRule::matches(const std::string& serialized_params) const {
  return std::regex_search(serialized_params, *re_);
}

ImpactLevel classify_impact(std::string_view, const Value& params,
                            std::span<const ImpactRule> rules, ImpactLevel static_level) {
  if (rules.empty()) return static_level;
  const std::string text = params.dump();
  std::optional<ImpactLevel> best;
  for (const ImpactRule& rule : rules)
    if (rule.matches(text) && (!best || rule.level() > *best)) best = rule.level();
  return best.value_or(static_level);
}

std::string_view to_string(GateStage stage) noexcept {
  switch (stage) {
    case GateStage::scope: return "scope";
    case GateStage::intent: return "intent";
    case GateStage::clearance: return "clearance";
    case GateStage::passed: return "passed";
  }
  return "scope";
}

GateDecision evaluate(std::string_view tool, const Value& params, std::string_view user,
                      const ImpactProfile& impact, const ScopeSet& scope, IntentCeiling intent,
                      ClearanceAuthority* clearance, GateStats* stats) {
  GateDecision d;
  if (!scope.allows(tool)) {
    d.stage = GateStage::scope;
    d.internal_reason = "scope: '" + std::string(tool) + "' not in allowed tools";
    return d;
  }

  if (stats) ++stats->impact_classifications;
  const ImpactLevel level = classify_impact(tool, params, impact.rules, impact.static_level);
  d.impact = level;
  const ImpactLevel ceiling = std::min(intent.level(), scope.cap_for(tool));
  if (level > ceiling) {
    d.stage = GateStage::intent;
    d.internal_reason = "intent: impact " + std::to_string(to_int(level)) + " > min(" +
                        std::to_string(to_int(intent.level())) + ", " +
                        std::to_string(to_int(scope.cap_for(tool))) +
                        "); clearance not reached (short-circuited)";
    return d;
  }

  if (clearance) {
    if (stats) ++stats->clearance_requests;
    ClearanceVerdict v = clearance->check(tool, params, user);
    if (!v.allow) {
      d.stage = GateStage::clearance;
      d.internal_reason = "clearance: " + (v.reason.empty() ? std::string("denied") : v.reason);
      return d;
    }
  }

  d.allow = true;
  d.stage = GateStage::passed;
  return d;
}

}  // namespace execgraph
