// SPDX-License-Identifier: Apache-2.0
#include "execgraph/config.hpp"

#include "execgraph/error.hpp"

#include <fstream>

namespace execgraph {

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw Error(Errc::config_error, key + ": " + what);
}

int level_at(const Value& v, const std::string& key) {
  if (!v.is_number_integer()) bad(key, "must be an integer 0..2");
  const auto n = v.get<std::int64_t>();
  if (n < 0 || n > 2) bad(key, "must be an integer 0..2");
  return static_cast<int>(n);
}

std::int64_t positive_at(const Value& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) bad(key, "must be a positive integer");
  return v.get<std::int64_t>();
}

}  // namespace

Value load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open '" + path + "'");
  Value doc = Value::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(Errc::config_error, "'" + path + "' is not valid JSON");
  return doc;
}

Policy parse_policy(const Value& doc) {
  if (!doc.is_object()) bad("policy", "must be a JSON object");
  Policy p;

  if (!doc.contains("scopes")) bad("scopes", "is required");
  const Value& scopes = doc["scopes"];
  if (!scopes.is_array() || scopes.empty()) bad("scopes", "must be a non-empty list");
  std::vector<ScopeSet> sets;
  for (std::size_t i = 0; i < scopes.size(); ++i) {
    const std::string key = "scopes[" + std::to_string(i) + "]";
    const Value& s = scopes[i];
    if (!s.is_object()) bad(key, "must be an object");
    ScopeSet set;
    if (!s.contains("tools") || !s["tools"].is_array()) bad(key + ".tools", "must be a list");
    for (const auto& t : s["tools"]) {
      if (!t.is_string()) bad(key + ".tools", "entries must be strings");
      set.tools.insert(t.get<std::string>());
    }
    if (s.contains("caps")) {
      if (!s["caps"].is_object()) bad(key + ".caps", "must be an object");
      for (const auto& [tool, lvl] : s["caps"].items()) {
        if (!set.tools.contains(tool)) bad(key + ".caps." + tool, "names a tool outside the scope");
        set.caps[tool] = impact_from_int(level_at(lvl, key + ".caps." + tool));
      }
    }
    sets.push_back(std::move(set));
  }
  p.scope = merge_scopes(sets);

  if (!doc.contains("intent")) bad("intent", "is required");
  p.intent = IntentCeiling(impact_from_int(level_at(doc["intent"], "intent")));

  if (doc.contains("clearance") && !doc["clearance"].is_null()) {
    const Value& c = doc["clearance"];
    if (!c.is_object()) bad("clearance", "must be an object");
    ClearanceConfig cfg;
    if (!c.contains("endpoint") || !c["endpoint"].is_string())
      bad("clearance.endpoint", "must be a string URL");
    cfg.endpoint = c["endpoint"].get<std::string>();
    if (c.contains("timeout_ms"))
      cfg.timeout = std::chrono::milliseconds(positive_at(c["timeout_ms"], "clearance.timeout_ms"));
    p.clearance = cfg;
  }
  if (doc.contains("user")) {
    if (!doc["user"].is_string()) bad("user", "must be a string");
    p.user = doc["user"].get<std::string>();
  }
  if (p.clearance) p.clearance->identity = p.user;
  return p;
}

Budget parse_budget(const Value& doc) {
  Budget b;
  if (doc.is_null()) return b;
  if (!doc.is_object()) bad("budget", "must be an object");
  if (doc.contains("max_provider_calls"))
    b.max_provider_calls = positive_at(doc["max_provider_calls"], "budget.max_provider_calls");
  if (doc.contains("wall_clock_ms"))
    b.wall_clock = std::chrono::milliseconds(positive_at(doc["wall_clock_ms"], "budget.wall_clock_ms"));
  if (doc.contains("max_micro_plans_per_node"))
    b.max_micro_plans_per_node =
        positive_at(doc["max_micro_plans_per_node"], "budget.max_micro_plans_per_node");
  return b;
}

void apply_policy(RunConfig& config, const Policy& policy) {
  config.scope = policy.scope;
  config.intent = policy.intent;
  config.clearance = policy.clearance;
  config.user = policy.user;
}

RunRequest parse_run_request(const Value& doc) {
  if (!doc.is_object()) bad("request", "must be a JSON object");
  RunRequest r;
  if (!doc.contains("task") || !doc["task"].is_string()) bad("task", "must be a string");
  r.task = doc["task"].get<std::string>();
  if (doc.contains("mode")) {
    if (!doc["mode"].is_string()) bad("mode", "must be a string");
    r.config.mode = parse_mode(doc["mode"].get<std::string>());
  }
  if (!doc.contains("policy")) bad("policy", "is required");
  const Value policy = doc["policy"].is_string() ? load_json_file(doc["policy"].get<std::string>())
                                                 : doc["policy"];
  apply_policy(r.config, parse_policy(policy));
  if (doc.contains("budget")) r.config.budget = parse_budget(doc["budget"]);
  if (doc.contains("aggregator")) {
    if (!doc["aggregator"].is_string()) bad("aggregator", "must be a string");
    r.config.aggregator = aggregator_mode_from_string(doc["aggregator"].get<std::string>());
  }
  if (doc.contains("interjection")) {
    if (!doc["interjection"].is_boolean()) bad("interjection", "must be a boolean");
    r.config.interjection_enabled = doc["interjection"].get<bool>();
  }
  if (doc.contains("script")) {
    const Value script =
        doc["script"].is_string() ? load_json_file(doc["script"].get<std::string>()) : doc["script"];
    r.script = parse_script(script);
  }
  validate(r.config);
  return r;
}

std::vector<RemoteEndpointConfig> parse_remote_configs(const Value& doc) {
  std::vector<RemoteEndpointConfig> out;
  if (doc.is_array()) {
    for (const auto& e : doc) out.push_back(parse_remote_config(e));
  } else {
    out.push_back(parse_remote_config(doc));
  }
  if (out.empty()) bad("provider", "no endpoints configured");
  return out;
}

}  // namespace execgraph
