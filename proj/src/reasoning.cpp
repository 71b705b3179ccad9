// SPDX-License-Identifier: Apache-2.0
#include "execgraph/reasoning.hpp"

#include "execgraph/error.hpp"
#include "execgraph/gate.hpp"
#include "execgraph/tokens.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace execgraph {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(Errc::provider_parse_error, what); }

std::uint64_t get_index(const Value& v, const char* what) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    bad(std::string(what) + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

PlanRef parse_ref(const std::string& name, const Value& doc) {
  if (!doc.is_object()) bad("param_ref '" + name + "' must be an object");
  PlanRef ref;
  if (doc.contains("step")) ref.step = get_index(doc["step"], "param_ref step");
  if (doc.contains("node")) ref.node = NodeId{get_index(doc["node"], "param_ref node")};
  if (ref.step.has_value() == ref.node.has_value())
    bad("param_ref '" + name + "' needs exactly one of step or node");
  if (!doc.contains("field") || !doc["field"].is_string() || doc["field"].get<std::string>().empty())
    bad("param_ref '" + name + "' needs a non-empty field");
  ref.field = doc["field"].get<std::string>();
  if (doc.contains("template") && !doc["template"].is_null()) {
    if (!doc["template"].is_string()) bad("param_ref '" + name + "' template must be a string");
    ref.template_text = doc["template"].get<std::string>();
  }
  return ref;
}

PlanStep parse_step(const Value& doc) {
  if (!doc.is_object()) bad("plan step must be an object");
  PlanStep s;
  if (!doc.contains("step")) bad("plan step lacks 'step'");
  s.step = get_index(doc["step"], "step");
  if (!doc.contains("tool") || !doc["tool"].is_string() || doc["tool"].get<std::string>().empty())
    bad("plan step " + std::to_string(s.step) + " lacks a tool name");
  s.tool = doc["tool"].get<std::string>();
  if (doc.contains("params")) {
    if (!doc["params"].is_object()) bad("plan step " + std::to_string(s.step) + " params must be an object");
    s.params = doc["params"];
  }
  if (doc.contains("param_refs")) {
    if (!doc["param_refs"].is_object()) bad("param_refs must be an object");
    for (const auto& [name, r] : doc["param_refs"].items()) s.param_refs.emplace(name, parse_ref(name, r));
  }
  if (doc.contains("depends_on")) {
    if (!doc["depends_on"].is_array()) bad("depends_on must be a list");
    for (const auto& d : doc["depends_on"]) s.depends_on.push_back(get_index(d, "depends_on entry"));
  }
  return s;
}

Value ref_to_json(const PlanRef& r) {
  Value out = Value::object();
  if (r.step) out["step"] = *r.step;
  if (r.node) out["node"] = r.node->value;
  out["field"] = r.field;
  if (r.template_text) out["template"] = *r.template_text;
  return out;
}

std::string truncate_tokens(const std::string& text, std::size_t max_tokens) {
  if (max_tokens == 0 || count_tokens(text) <= max_tokens) return text;
  // Binary search on prefix length; count_tokens is monotone in prefix length.
  std::size_t lo = 0, hi = text.size();
  while (lo < hi) {
    std::size_t mid = (lo + hi + 1) / 2;
    if (count_tokens(std::string_view(text).substr(0, mid)) <= max_tokens)
      lo = mid;
    else
      hi = mid - 1;
  }
  return text.substr(0, lo);
}

ProviderInput make_input(CallKind kind, std::string text) {
  ProviderInput in{kind, std::move(text), 0};
  in.tokens = count_tokens(in.text);
  return in;
}

void append_entry(std::ostringstream& out, const EvidenceEntry& e) {
  out << '[' << e.node_id.value << "] " << e.tool << (e.ok ? " ok: " : " failed: ") << e.text
      << '\n';
}

}  // namespace

std::string_view to_string(CallKind kind) noexcept {
  switch (kind) {
    case CallKind::plan: return "plan";
    case CallKind::reflect: return "reflect";
    case CallKind::observe: return "observe";
    case CallKind::micro_plan: return "micro_plan";
    case CallKind::aggregate: return "aggregate";
  }
  return "plan";
}

std::string_view to_string(ModelRole role) noexcept {
  return role == ModelRole::reasoning ? "reasoning" : "executor";
}

CallKind call_kind_from_string(std::string_view text) {
  for (CallKind k : {CallKind::plan, CallKind::reflect, CallKind::observe, CallKind::micro_plan,
                     CallKind::aggregate})
    if (to_string(k) == text) return k;
  throw Error(Errc::config_error, "unknown call kind '" + std::string(text) + "'");
}

ModelRole model_role_from_string(std::string_view text) {
  if (text == "reasoning") return ModelRole::reasoning;
  if (text == "executor") return ModelRole::executor;
  throw Error(Errc::config_error, "unknown model role '" + std::string(text) + "'");
}

Plan parse_plan(const Value& doc) {
  const Value* list = &doc;
  if (doc.is_object() && doc.contains("steps")) list = &doc["steps"];
  if (!list->is_array()) bad("plan must be a list of steps");
  Plan plan;
  for (const auto& s : *list) plan.push_back(parse_step(s));
  std::sort(plan.begin(), plan.end(), [](const PlanStep& a, const PlanStep& b) { return a.step < b.step; });

  std::set<std::uint64_t> seen;
  for (const PlanStep& s : plan) {
    auto earlier = [&](std::uint64_t ref) {
      if (!seen.contains(ref))
        bad("step " + std::to_string(s.step) + " references step " + std::to_string(ref) +
            " which is not an earlier step");
    };
    for (std::uint64_t d : s.depends_on) earlier(d);
    for (const auto& [name, r] : s.param_refs)
      if (r.step) earlier(*r.step);
    if (!seen.insert(s.step).second) bad("duplicate step " + std::to_string(s.step));
  }
  return plan;
}

Verdict parse_verdict(const Value& doc) {
  if (!doc.is_object() || !doc.contains("kind") || !doc["kind"].is_string())
    bad("verdict must be an object with a string 'kind'");
  const auto kind = doc["kind"].get<std::string>();
  Verdict v;
  if (kind == "continue") {
    v.kind = Verdict::Kind::continue_run;
  } else if (kind == "conclude") {
    v.kind = Verdict::Kind::conclude;
    if (!doc.contains("text") || !doc["text"].is_string() || doc["text"].get<std::string>().empty())
      bad("conclude verdict needs non-empty text");
    v.text = doc["text"].get<std::string>();
  } else if (kind == "replan") {
    v.kind = Verdict::Kind::replan;
    v.steps = parse_plan(doc.value("steps", Value::array()));
    if (v.steps.empty()) bad("replan verdict needs at least one step");
  } else {
    bad("unknown verdict kind '" + kind + "'");
  }
  return v;
}

ObserverAction parse_observer_action(const Value& doc) {
  if (!doc.is_object() || !doc.contains("kind") || !doc["kind"].is_string())
    bad("observer action must be an object with a string 'kind'");
  const auto kind = doc["kind"].get<std::string>();
  ObserverAction a;
  if (kind == "continue") {
    a.kind = ObserverAction::Kind::continue_run;
  } else if (kind == "inject") {
    a.kind = ObserverAction::Kind::inject;
    a.steps = parse_plan(doc.value("steps", Value::array()));
    if (a.steps.empty()) bad("inject action needs at least one step");
  } else if (kind == "cancel") {
    a.kind = ObserverAction::Kind::cancel;
    const Value nodes = doc.value("nodes", Value::array());
    if (!nodes.is_array()) bad("cancel nodes must be a list");
    for (const auto& n : nodes) a.cancel.push_back(NodeId{get_index(n, "cancel node")});
  } else if (kind == "trigger_reflection") {
    a.kind = ObserverAction::Kind::trigger_reflection;
  } else {
    bad("unknown observer action '" + kind + "'");
  }
  return a;
}

Replacement parse_replacement(const Value& doc) {
  if (!doc.is_object() || !doc.contains("kind") || !doc["kind"].is_string())
    bad("replacement must be an object with a string 'kind'");
  const auto kind = doc["kind"].get<std::string>();
  Replacement r;
  if (kind == "retry") {
    r.kind = Replacement::Kind::retry;
    if (!doc.contains("params") || !doc["params"].is_object()) bad("retry needs params");
    r.params = doc["params"];
  } else if (kind == "substitute") {
    r.kind = Replacement::Kind::substitute;
    if (!doc.contains("step")) bad("substitute needs a step");
    Value step = doc["step"];
    if (step.is_object() && !step.contains("step")) step["step"] = 0;
    r.step = parse_step(step);
    if (!r.step.depends_on.empty()) bad("substitute step cannot depend on plan-local steps");
    for (const auto& [name, ref] : r.step.param_refs)
      if (ref.step) bad("substitute step refs must name graph nodes");
  } else if (kind == "skip") {
    r.kind = Replacement::Kind::skip;
  } else {
    bad("unknown replacement kind '" + kind + "'");
  }
  return r;
}

std::string parse_aggregate(const Value& doc) {
  if (doc.is_string()) return doc.get<std::string>();
  if (doc.is_object() && doc.contains("text") && doc["text"].is_string())
    return doc["text"].get<std::string>();
  bad("aggregate output must carry a 'text' string");
}

Value to_json(const PlanStep& s) {
  Value refs = Value::object();
  for (const auto& [name, r] : s.param_refs) refs[name] = ref_to_json(r);
  return Value{{"step", s.step},
               {"tool", s.tool},
               {"params", s.params},
               {"param_refs", std::move(refs)},
               {"depends_on", s.depends_on}};
}

Value to_json(const Plan& plan) {
  Value out = Value::array();
  for (const auto& s : plan) out.push_back(to_json(s));
  return out;
}

Value to_json(const Verdict& v) {
  switch (v.kind) {
    case Verdict::Kind::continue_run: return Value{{"kind", "continue"}};
    case Verdict::Kind::conclude: return Value{{"kind", "conclude"}, {"text", v.text}};
    case Verdict::Kind::replan: return Value{{"kind", "replan"}, {"steps", to_json(v.steps)}};
  }
  return nullptr;
}

Value to_json(const ObserverAction& a) {
  switch (a.kind) {
    case ObserverAction::Kind::continue_run: return Value{{"kind", "continue"}};
    case ObserverAction::Kind::inject: return Value{{"kind", "inject"}, {"steps", to_json(a.steps)}};
    case ObserverAction::Kind::cancel: {
      Value nodes = Value::array();
      for (NodeId n : a.cancel) nodes.push_back(n.value);
      return Value{{"kind", "cancel"}, {"nodes", std::move(nodes)}};
    }
    case ObserverAction::Kind::trigger_reflection: return Value{{"kind", "trigger_reflection"}};
  }
  return nullptr;
}

Value to_json(const Replacement& r) {
  switch (r.kind) {
    case Replacement::Kind::retry: return Value{{"kind", "retry"}, {"params", r.params}};
    case Replacement::Kind::substitute: return Value{{"kind", "substitute"}, {"step", to_json(r.step)}};
    case Replacement::Kind::skip: return Value{{"kind", "skip"}};
  }
  return nullptr;
}

Value extract_document(std::string_view text) {
  Value doc = Value::parse(text, nullptr, false);
  if (!doc.is_discarded()) return doc;

  const auto open = text.find_first_of("{[");
  if (open != std::string_view::npos) {
    const char closer = text[open] == '{' ? '}' : ']';
    const auto close = text.find_last_of(closer);
    if (close != std::string_view::npos && close > open) {
      doc = Value::parse(text.substr(open, close - open + 1), nullptr, false);
      if (!doc.is_discarded()) return doc;
    }
  }
  bad("reply is not a structured document");
}

EvidenceEntry evidence_entry(const Node& node, std::size_t max_entry_tokens) {
  EvidenceEntry e;
  e.node_id = node.id;
  e.tool = node.tool_name.value_or(std::string(to_string(node.kind)));
  e.ok = node.state == NodeState::resolved;
  e.text = e.ok ? truncate_tokens(render_value(node.result.value_or(Value(nullptr))), max_entry_tokens)
                : std::string(kGenericToolError);
  return e;
}

Evidence collect_evidence(const Graph& graph, std::size_t max_entry_tokens) {
  Evidence ev;
  for (const auto& [id, node] : graph.nodes()) {
    if (node.kind != NodeKind::tool) continue;
    if (node.state != NodeState::resolved && node.state != NodeState::failed) continue;
    ev.entries.push_back(evidence_entry(node, max_entry_tokens));
  }
  return ev;
}

ProviderInput build_planner_context(std::string_view task, std::span<const ToolIndexEntry> index,
                                    std::string_view preamble) {
  std::ostringstream out;
  if (!preamble.empty()) out << preamble << '\n';
  out << "Task: " << task << "\nTools:\n";
  for (const auto& e : index) out << "- " << index_entry_text(e) << '\n';
  return make_input(CallKind::plan, out.str());
}

ProviderInput build_reflection_context(std::string_view task, const Evidence& evidence,
                                       std::optional<std::string_view> note) {
  std::ostringstream out;
  out << "Task: " << task << "\nEvidence:\n";
  for (const auto& e : evidence.entries) append_entry(out, e);
  if (note) out << "Note: " << *note << '\n';
  return make_input(CallKind::reflect, out.str());
}

ProviderInput build_observer_context(std::string_view task, const EvidenceEntry& result) {
  std::ostringstream out;
  out << "Task: " << task << "\nResult:\n";
  append_entry(out, result);
  return make_input(CallKind::observe, out.str());
}

ProviderInput build_micro_planner_context(std::string_view task, const Node& failed,
                                          std::span<const EvidenceEntry> siblings) {
  std::ostringstream out;
  out << "Task: " << task << "\nFailed:\n[" << failed.id.value << "] "
      << failed.tool_name.value_or("?") << ' ' << failed.params.dump()
      << " error: " << failed.error.value_or(std::string(kGenericToolError)) << "\nContext:\n";
  for (const auto& e : siblings) append_entry(out, e);
  return make_input(CallKind::micro_plan, out.str());
}

ProviderInput build_aggregator_context(std::string_view task, const Evidence& evidence) {
  std::ostringstream out;
  out << "Task: " << task << "\nEvidence:\n";
  for (const auto& e : evidence.entries) append_entry(out, e);
  return make_input(CallKind::aggregate, out.str());
}

ScriptedProvider::ScriptedProvider(std::vector<ScriptEntry> script) : script_(std::move(script)) {}

ProviderOutput ScriptedProvider::call(CallKind kind, ModelRole role, const ProviderInput& input) {
  std::lock_guard lock(mu_);
  calls_.push_back({kind, role, input, std::nullopt});
  if (cursor_ >= script_.size())
    throw Error(Errc::script_exhausted, "script exhausted at " + std::string(to_string(kind)) +
                                            " call " + std::to_string(calls_.size()));
  const ScriptEntry& entry = script_[cursor_];
  if (entry.kind != kind)
    throw Error(Errc::kind_mismatch, "script entry " + std::to_string(cursor_) + " is " +
                                         std::string(to_string(entry.kind)) + ", call is " +
                                         std::string(to_string(kind)));
  ++cursor_;
  ProviderOutput out;
  out.document = entry.output;
  out.raw = entry.output.dump();
  out.tokens = count_tokens(out.raw);
  calls_.back().output = out;
  return out;
}

std::vector<RecordedCall> ScriptedProvider::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t ScriptedProvider::remaining() const {
  std::lock_guard lock(mu_);
  return script_.size() - cursor_;
}

std::vector<ScriptEntry> parse_script(const Value& doc) {
  if (!doc.is_array()) throw Error(Errc::config_error, "script must be a JSON list");
  std::vector<ScriptEntry> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const Value& e = doc[i];
    if (!e.is_object() || !e.contains("kind") || !e["kind"].is_string() || !e.contains("output"))
      throw Error(Errc::config_error,
                  "script entry " + std::to_string(i) + " needs 'kind' and 'output'");
    out.push_back({call_kind_from_string(e["kind"].get<std::string>()), e["output"]});
  }
  return out;
}

std::vector<ScriptEntry> load_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open script '" + path + "'");
  Value doc = Value::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(Errc::config_error, "script '" + path + "' is not JSON");
  return parse_script(doc);
}

Value script_to_json(std::span<const ScriptEntry> script) {
  Value out = Value::array();
  for (const auto& e : script) out.push_back(Value{{"kind", to_string(e.kind)}, {"output", e.output}});
  return out;
}

std::string_view output_instructions(CallKind kind) noexcept {
  switch (kind) {
    case CallKind::plan:
      return "Reply with only a JSON list of steps. Each step is "
             "{\"step\": int, \"tool\": name, \"params\": object, \"param_refs\": "
             "{param: {\"step\": int, \"field\": dot.path, \"template\"?: text with {value}}}, "
             "\"depends_on\": [int]}. Use only the listed tools.";
    case CallKind::reflect:
      return "Reply with only JSON: {\"kind\": \"continue\"} or {\"kind\": \"conclude\", "
             "\"text\": answer} or {\"kind\": \"replan\", \"steps\": [plan steps]}. Plan steps "
             "may reference evidence with {\"node\": id, \"field\": dot.path}.";
    case CallKind::observe:
      return "Reply with only JSON: {\"kind\": \"continue\"}, {\"kind\": \"inject\", \"steps\": "
             "[plan steps]}, {\"kind\": \"cancel\", \"nodes\": [ids]} or "
             "{\"kind\": \"trigger_reflection\"}.";
    case CallKind::micro_plan:
      return "Reply with only JSON: {\"kind\": \"retry\", \"params\": object}, "
             "{\"kind\": \"substitute\", \"step\": plan step} or {\"kind\": \"skip\"}.";
    case CallKind::aggregate:
      return "Reply with only JSON: {\"text\": final answer}.";
  }
  return "";
}

}  // namespace execgraph
