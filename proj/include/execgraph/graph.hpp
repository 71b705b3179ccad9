// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "execgraph/error.hpp"
#include "execgraph/value.hpp"

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace execgraph {

/// Identifier of a node within one run. Assigned in creation order, never
/// reused.
struct NodeId {
  std::uint64_t value = 0;

  friend constexpr auto operator<=>(NodeId, NodeId) = default;
};

enum class NodeKind { tool, reflection, observer, micro_planner, interjection, aggregator };

enum class NodeState { pending, running, resolved, failed, skipped };

std::string_view to_string(NodeKind kind) noexcept;
std::string_view to_string(NodeState state) noexcept;
NodeKind node_kind_from_string(std::string_view text);
NodeState node_state_from_string(std::string_view text);

constexpr bool is_terminal(NodeState s) noexcept {
  return s == NodeState::resolved || s == NodeState::failed || s == NodeState::skipped;
}

/// Checkpoint kinds evaluate failures as evidence instead of being skipped by
/// them. Everything except `tool`.
constexpr bool is_checkpoint(NodeKind k) noexcept { return k != NodeKind::tool; }

/// Legal lifecycle edges. Everything else is an IllegalTransition.
constexpr bool is_legal_transition(NodeState from, NodeState to) noexcept {
  switch (from) {
    case NodeState::pending:
      return to == NodeState::running || to == NodeState::skipped;
    case NodeState::running:
      return to == NodeState::resolved || to == NodeState::failed;
    default:
      return false;
  }
}

/// Declarative data-flow edge: parameter value taken from `source`'s result at
/// `field_path`, optionally rendered into `template_text` at "{value}".
struct ParamRef {
  NodeId source;
  std::string field_path;
  std::optional<std::string> template_text;

  bool operator==(const ParamRef&) const = default;
};

struct Node {
  NodeId id;
  NodeKind kind = NodeKind::tool;
  std::optional<std::string> tool_name;
  Value params = Value::object();
  std::map<std::string, ParamRef> param_refs;
  std::set<NodeId> depends_on;
  NodeState state = NodeState::pending;
  std::optional<Value> result;
  std::optional<std::string> error;
  std::optional<NodeId> spawned_by;
};

/// Everything needed to create a node. `gates` lists existing pending nodes
/// that gain a dependency on the new node. `retargets` lists existing pending
/// nodes whose edges from `spawned_by` move to the new node.
struct NodeSpec {
  NodeKind kind = NodeKind::tool;
  std::optional<std::string> tool_name;
  Value params = Value::object();
  std::map<std::string, ParamRef> param_refs;
  std::set<NodeId> depends_on;
  std::optional<NodeId> spawned_by;
  std::vector<NodeId> gates;
  std::vector<NodeId> retargets;
};

/// Receives every graph mutation as (kind, node, payload). Kinds are
/// "node_added" and "state_changed".
using GraphSink = std::function<void(std::string_view kind, NodeId node, Value payload)>;

/// The live execution DAG. Append-only: nodes are never removed. Not
/// synchronized; one scheduler context owns it.
class Graph {
 public:
  Graph() = default;

  void set_sink(GraphSink sink) { sink_ = std::move(sink); }

  NodeId add_node(NodeSpec spec);

  /// Pending nodes whose dependencies are all terminal, ascending by id.
  std::vector<NodeId> ready_nodes() const;

  /// `payload` is the result for `resolved`, the error text for `failed`,
  /// ignored otherwise. `annotations` are merged into the emitted event.
  void transition(NodeId id, NodeState to, const Value& payload = nullptr,
                  const Value& annotations = Value::object());

  /// Marks the transitive pending dependents of a failed or skipped node as
  /// skipped. Checkpoint nodes stop the walk. Returns the nodes skipped.
  std::set<NodeId> propagate_skip(NodeId origin);

  /// Static params overlaid with values injected from param_refs.
  Value resolve_params(NodeId id) const;

  const Node& node(NodeId id) const;
  bool contains(NodeId id) const { return nodes_.contains(id); }
  const std::map<NodeId, Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  NodeId next_id() const { return NodeId{next_id_}; }

  /// Nodes that list `id` in depends_on.
  std::vector<NodeId> dependents(NodeId id) const;

  /// Canonical serialization; equal graphs produce equal documents.
  Value to_json() const;

 private:
  bool reaches(NodeId from, NodeId target) const;

  std::map<NodeId, Node> nodes_;
  std::uint64_t next_id_ = 0;
  GraphSink sink_;
};

/// Descends maps by key and lists by numeric index along a dot path.
/// Throws Error{missing_field} naming the first segment that cannot resolve.
Value extract_field(const Value& value, std::string_view field_path);

/// Replaces every "{value}" in `text` with the rendered value.
std::string apply_template(std::string_view text, const Value& value);

Value node_to_json(const Node& node);
Node node_from_json(const Value& doc);

}  // namespace execgraph

template <>
struct std::hash<execgraph::NodeId> {
  std::size_t operator()(execgraph::NodeId id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};
