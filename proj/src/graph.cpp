// SPDX-License-Identifier: Apache-2.0
#include "execgraph/graph.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <utility>

namespace execgraph {

namespace {

constexpr std::array<std::string_view, 6> kKindNames = {
    "tool", "reflection", "observer", "micro_planner", "interjection", "aggregator"};
constexpr std::array<std::string_view, 5> kStateNames = {
    "pending", "running", "resolved", "failed", "skipped"};

std::string id_text(NodeId id) { return std::to_string(id.value); }

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

std::string_view to_string(NodeKind kind) noexcept {
  return kKindNames[static_cast<std::size_t>(kind)];
}

std::string_view to_string(NodeState state) noexcept {
  return kStateNames[static_cast<std::size_t>(state)];
}

NodeKind node_kind_from_string(std::string_view text) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == text) return static_cast<NodeKind>(i);
  throw Error(Errc::config_error, "unknown node kind '" + std::string(text) + "'");
}

NodeState node_state_from_string(std::string_view text) {
  for (std::size_t i = 0; i < kStateNames.size(); ++i)
    if (kStateNames[i] == text) return static_cast<NodeState>(i);
  throw Error(Errc::config_error, "unknown node state '" + std::string(text) + "'");
}

NodeId Graph::add_node(NodeSpec spec) {
  if (spec.kind == NodeKind::tool && (!spec.tool_name || spec.tool_name->empty()))
    throw Error(Errc::missing_tool_name, "tool node requires a tool name");

  auto require = [this](NodeId id, const char* role) {
    if (!nodes_.contains(id))
      throw Error(Errc::unknown_dependency,
                  std::string(role) + " references unknown node " + id_text(id));
  };

  for (const auto& [name, ref] : spec.param_refs) {
    require(ref.source, "param_ref");
    if (ref.field_path.empty())
      throw Error(Errc::missing_field, "param_ref '" + name + "' has an empty field path");
    spec.depends_on.insert(ref.source);
  }
  for (NodeId dep : spec.depends_on) require(dep, "depends_on");
  if (spec.spawned_by) require(*spec.spawned_by, "spawned_by");

  std::set<NodeId> downstream(spec.gates.begin(), spec.gates.end());
  if (!spec.retargets.empty() && !spec.spawned_by)
    throw Error(Errc::unknown_dependency, "retargets require spawned_by");
  downstream.insert(spec.retargets.begin(), spec.retargets.end());
  for (NodeId d : downstream) {
    require(d, "gate");
    if (nodes_.at(d).state != NodeState::pending)
      throw Error(Errc::illegal_transition,
                  "cannot re-wire non-pending node " + id_text(d));
  }

  // The new node's ancestors are its dependencies' ancestors; any re-wired
  // node found among them would close a cycle.
  for (NodeId d : downstream)
    for (NodeId dep : spec.depends_on)
      if (dep == d || reaches(dep, d))
        throw Error(Errc::cycle_detected,
                    "edge " + id_text(d) + " -> new node would close a cycle");

  const NodeId id{next_id_++};
  Node node;
  node.id = id;
  node.kind = spec.kind;
  node.tool_name = std::move(spec.tool_name);
  node.params = spec.params.is_null() ? Value::object() : std::move(spec.params);
  node.param_refs = std::move(spec.param_refs);
  node.depends_on = std::move(spec.depends_on);
  node.spawned_by = spec.spawned_by;

  Value payload = node_to_json(node);
  payload["gates"] = Value::array();
  payload["retargets"] = Value::array();
  nodes_.emplace(id, std::move(node));

  for (NodeId g : spec.gates) {
    nodes_.at(g).depends_on.insert(id);
    payload["gates"].push_back(g.value);
  }
  for (NodeId r : spec.retargets) {
    Node& target = nodes_.at(r);
    if (target.depends_on.erase(*spec.spawned_by) > 0) target.depends_on.insert(id);
    for (auto& [name, ref] : target.param_refs)
      if (ref.source == *spec.spawned_by) ref.source = id;
    target.depends_on.insert(id);
    payload["retargets"].push_back(r.value);
  }

  if (sink_) sink_("node_added", id, std::move(payload));
  return id;
}

std::vector<NodeId> Graph::ready_nodes() const {
  std::vector<NodeId> out;
  for (const auto& [id, node] : nodes_) {
    if (node.state != NodeState::pending) continue;
    bool ready = std::all_of(node.depends_on.begin(), node.depends_on.end(),
                             [this](NodeId d) { return is_terminal(nodes_.at(d).state); });
    if (ready) out.push_back(id);
  }
  return out;
}

void Graph::transition(NodeId id, NodeState to, const Value& payload, const Value& annotations) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw Error(Errc::unknown_node, "unknown node " + id_text(id));
  Node& node = it->second;
  const NodeState from = node.state;
  if (!is_legal_transition(from, to))
    throw Error(Errc::illegal_transition, "node " + id_text(id) + ": " +
                                              std::string(to_string(from)) + " -> " +
                                              std::string(to_string(to)));
  node.state = to;

  Value event = annotations.is_object() ? annotations : Value::object();
  event["from"] = to_string(from);
  event["to"] = to_string(to);
  if (to == NodeState::resolved) {
    node.result = payload;
    event["result"] = payload;
  } else if (to == NodeState::failed) {
    node.error = payload.is_string() ? payload.get<std::string>() : render_value(payload);
    event["error"] = *node.error;
  }
  if (sink_) sink_("state_changed", id, std::move(event));
}

std::set<NodeId> Graph::propagate_skip(NodeId origin) {
  const Node& start = node(origin);
  if (start.state != NodeState::failed && start.state != NodeState::skipped)
    throw Error(Errc::illegal_transition,
                "propagate_skip from non-failed node " + id_text(origin));

  std::set<NodeId> skipped;
  std::deque<NodeId> frontier{origin};
  while (!frontier.empty()) {
    NodeId cur = frontier.front();
    frontier.pop_front();
    for (NodeId dep : dependents(cur)) {
      const Node& n = nodes_.at(dep);
      if (n.state != NodeState::pending || is_checkpoint(n.kind)) continue;
      transition(dep, NodeState::skipped, nullptr,
                 Value{{"reason", "dependency " + id_text(cur) + " not resolved"}});
      skipped.insert(dep);
      frontier.push_back(dep);
    }
  }
  return skipped;
}

Value Graph::resolve_params(NodeId id) const {
  const Node& n = node(id);
  Value params = n.params.is_object() ? n.params : Value::object();
  for (const auto& [name, ref] : n.param_refs) {
    const Node& src = node(ref.source);
    if (src.state != NodeState::resolved || !src.result)
      throw Error(Errc::source_not_resolved, "param '" + name + "': source node " +
                                                 id_text(ref.source) + " is " +
                                                 std::string(to_string(src.state)));
    Value v = extract_field(*src.result, ref.field_path);
    if (ref.template_text)
      params[name] = apply_template(*ref.template_text, v);
    else
      params[name] = std::move(v);
  }
  return params;
}

const Node& Graph::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw Error(Errc::unknown_node, "unknown node " + id_text(id));
  return it->second;
}

std::vector<NodeId> Graph::dependents(NodeId id) const {
  std::vector<NodeId> out;
  for (const auto& [nid, n] : nodes_)
    if (n.depends_on.contains(id)) out.push_back(nid);
  return out;
}

bool Graph::reaches(NodeId from, NodeId target) const {
  std::set<NodeId> seen;
  std::vector<NodeId> stack{from};
  while (!stack.empty()) {
    NodeId cur = stack.back();
    stack.pop_back();
    if (cur == target) return true;
    if (!seen.insert(cur).second) continue;
    for (NodeId d : nodes_.at(cur).depends_on) stack.push_back(d);
  }
  return false;
}

Value Graph::to_json() const {
  Value nodes = Value::array();
  for (const auto& [id, n] : nodes_) nodes.push_back(node_to_json(n));
  return Value{{"next_id", next_id_}, {"nodes", std::move(nodes)}};
}

Value extract_field(const Value& value, std::string_view field_path) {
  const Value* cur = &value;
  std::size_t pos = 0;
  std::size_t index = 0;
  while (true) {
    std::size_t dot = field_path.find('.', pos);
    std::string_view seg = field_path.substr(pos, dot == std::string_view::npos ? dot : dot - pos);
    auto fail = [&](const char* why) {
      throw Error(Errc::missing_field, "field path '" + std::string(field_path) + "': segment " +
                                           std::to_string(index) + " '" + std::string(seg) +
                                           "' " + why);
    };
    if (seg.empty()) fail("is empty");
    if (cur->is_object()) {
      auto it = cur->find(std::string(seg));
      if (it == cur->end()) fail("not found");
      cur = &*it;
    } else if (cur->is_array()) {
      if (!all_digits(seg)) fail("is not a list index");
      std::size_t i = std::stoull(std::string(seg));
      if (i >= cur->size()) fail("is out of range");
      cur = &(*cur)[i];
    } else {
      fail("addresses into a scalar");
    }
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
    ++index;
  }
  return *cur;
}

std::string apply_template(std::string_view text, const Value& value) {
  static constexpr std::string_view kToken = "{value}";
  const std::string rendered = render_value(value);
  std::string out;
  std::size_t pos = 0;
  while (true) {
    std::size_t hit = text.find(kToken, pos);
    if (hit == std::string_view::npos) break;
    out.append(text.substr(pos, hit - pos));
    out.append(rendered);
    pos = hit + kToken.size();
  }
  out.append(text.substr(pos));
  return out;
}

Value node_to_json(const Node& n) {
  Value refs = Value::object();
  for (const auto& [name, ref] : n.param_refs) {
    Value r{{"source", ref.source.value}, {"field", ref.field_path}};
    r["template"] = ref.template_text ? Value(*ref.template_text) : Value(nullptr);
    refs[name] = std::move(r);
  }
  Value deps = Value::array();
  for (NodeId d : n.depends_on) deps.push_back(d.value);
  return Value{
      {"id", n.id.value},
      {"kind", to_string(n.kind)},
      {"tool_name", n.tool_name ? Value(*n.tool_name) : Value(nullptr)},
      {"params", n.params},
      {"param_refs", std::move(refs)},
      {"depends_on", std::move(deps)},
      {"state", to_string(n.state)},
      {"result", n.result ? *n.result : Value(nullptr)},
      {"error", n.error ? Value(*n.error) : Value(nullptr)},
      {"spawned_by", n.spawned_by ? Value(n.spawned_by->value) : Value(nullptr)},
  };
}

Node node_from_json(const Value& doc) {
  Node n;
  n.id = NodeId{doc.at("id").get<std::uint64_t>()};
  n.kind = node_kind_from_string(doc.at("kind").get<std::string>());
  if (doc.contains("tool_name") && !doc["tool_name"].is_null())
    n.tool_name = doc["tool_name"].get<std::string>();
  n.params = doc.value("params", Value::object());
  const Value refs = doc.value("param_refs", Value::object());
  for (const auto& [name, r] : refs.items()) {
    ParamRef ref{NodeId{r.at("source").get<std::uint64_t>()}, r.at("field").get<std::string>(), {}};
    if (r.contains("template") && !r["template"].is_null())
      ref.template_text = r["template"].get<std::string>();
    n.param_refs.emplace(name, std::move(ref));
  }
  for (const auto& d : doc.value("depends_on", Value::array()))
    n.depends_on.insert(NodeId{d.get<std::uint64_t>()});
  n.state = node_state_from_string(doc.value("state", std::string("pending")));
  if (doc.contains("result") && !doc["result"].is_null()) n.result = doc["result"];
  if (doc.contains("error") && !doc["error"].is_null()) n.error = doc["error"].get<std::string>();
  if (doc.contains("spawned_by") && !doc["spawned_by"].is_null())
    n.spawned_by = NodeId{doc["spawned_by"].get<std::uint64_t>()};
  return n;
}

}  // namespace execgraph
