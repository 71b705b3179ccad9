// SPDX-License-Identifier: Apache-2.0
// Direct three-clause predicate used as the reference for the gate.
#pragma once

#include "execgraph/gate.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <vector>

namespace execgraph::testing {

/// Clearance authority answering from a fixed verdict and counting calls.
class FixedClearance final : public ClearanceAuthority {
 public:
  explicit FixedClearance(bool allow) : allow_(allow) {}
  ClearanceVerdict check(std::string_view, const Value&, std::string_view) override {
    ++calls;
    return {allow_, allow_ ? "" : "resource locked"};
  }
  std::size_t calls = 0;

 private:
  bool allow_;
};

struct GateCase {
  std::string tool;
  Value params;
  ScopeSet scope;
  ImpactLevel intent = ImpactLevel::control;
  ImpactLevel static_level = ImpactLevel::observe;
  // Literal word -> level. Each becomes a regex rule of the same text.
  std::vector<std::pair<std::string, ImpactLevel>> rules;
  bool has_clearance = false;
  bool clearance_allows = true;
};

/// Impact by literal substring scan of the compact parameter JSON.
inline ImpactLevel oracle_impact(const GateCase& c) {
  const std::string text = c.params.dump();
  int best = -1;
  for (const auto& [word, level] : c.rules)
    if (text.find(word) != std::string::npos) best = std::max(best, to_int(level));
  return best < 0 ? c.static_level : static_cast<ImpactLevel>(best);
}

/// allow = in scope AND impact <= min(intent, cap) AND clearance.
inline bool oracle_allow(const GateCase& c) {
  const bool in_scope = c.scope.tools.contains(c.tool);
  auto cap_it = c.scope.caps.find(c.tool);
  const int cap = cap_it == c.scope.caps.end() ? 2 : to_int(cap_it->second);
  const bool within = to_int(oracle_impact(c)) <= std::min(to_int(c.intent), cap);
  const bool cleared = !c.has_clearance || c.clearance_allows;
  return in_scope && within && cleared;
}

inline GateCase random_gate_case(std::mt19937_64& rng) {
  static const std::vector<std::string> tools{"bash", "navigate", "read_file", "deploy"};
  static const std::vector<std::string> words{"rm", "mkfs", "write", "zone", "ls", "cat"};
  auto level = [&] { return static_cast<ImpactLevel>(rng() % 3); };
  GateCase c;
  c.tool = tools[rng() % tools.size()];
  Value args = Value::array();
  for (int i = 0, n = static_cast<int>(rng() % 3); i < n; ++i) args.push_back(words[rng() % words.size()]);
  c.params = Value{{"args", args}};
  for (const auto& t : tools) {
    if (rng() % 2) c.scope.tools.insert(t);
    if (rng() % 3 == 0) c.scope.caps[t] = level();
  }
  c.intent = level();
  c.static_level = level();
  for (int i = 0, n = static_cast<int>(rng() % 3); i < n; ++i)
    c.rules.emplace_back(words[rng() % words.size()], level());
  c.has_clearance = rng() % 4 != 0;
  c.clearance_allows = rng() % 3 != 0;
  return c;
}

struct GateOracleReport {
  std::size_t cases = 0;
  std::size_t disagreements = 0;
  std::size_t stage_errors = 0;
  // Clearance calls made after a scope or intent denial (must be zero).
  std::size_t clearance_after_denial = 0;
  // Impact classifications made after a scope denial (must be zero).
  std::size_t impact_after_scope_denial = 0;
};

inline GateOracleReport run_gate_oracle(std::size_t cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GateOracleReport rep;
  for (std::size_t i = 0; i < cases; ++i) {
    const GateCase c = random_gate_case(rng);
    std::vector<ImpactRule> rules;
    for (const auto& [w, l] : c.rules) rules.emplace_back(w, l);
    FixedClearance authority(c.clearance_allows);
    GateStats stats;
    const ImpactProfile profile{c.static_level, rules};
    const GateDecision d =
        evaluate(c.tool, c.params, "operator", profile, c.scope, IntentCeiling(c.intent),
                 c.has_clearance ? &authority : nullptr, &stats);
    ++rep.cases;
    if (d.allow != oracle_allow(c)) ++rep.disagreements;

    const bool in_scope = c.scope.tools.contains(c.tool);
    auto cap_it = c.scope.caps.find(c.tool);
    const int cap = cap_it == c.scope.caps.end() ? 2 : to_int(cap_it->second);
    const bool within = to_int(oracle_impact(c)) <= std::min(to_int(c.intent), cap);
    GateStage expect = GateStage::passed;
    if (!in_scope)
      expect = GateStage::scope;
    else if (!within)
      expect = GateStage::intent;
    else if (c.has_clearance && !c.clearance_allows)
      expect = GateStage::clearance;
    if (d.stage != expect) ++rep.stage_errors;
    if ((!in_scope || !within) && (authority.calls > 0 || stats.clearance_requests > 0))
      ++rep.clearance_after_denial;
    if (!in_scope && stats.impact_classifications > 0) ++rep.impact_after_scope_denial;
  }
  return rep;
}

}  // namespace execgraph::testing
