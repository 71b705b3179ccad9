// SPDX-License-Identifier: Apache-2.0
#include "execgraph/events.hpp"

#include <algorithm>
#include <array>
#include <sstream>

namespace execgraph {

namespace {

constexpr std::array<std::string_view, 6> kEventNames = {
    "node_added",   "state_changed",         "gate_decision",
    "provider_call", "interjection_received", "run_completed"};

}  // namespace

std::string_view to_string(EventKind kind) noexcept {
  return kEventNames[static_cast<std::size_t>(kind)];
}

EventKind event_kind_from_string(std::string_view text) {
  for (std::size_t i = 0; i < kEventNames.size(); ++i)
    if (kEventNames[i] == text) return static_cast<EventKind>(i);
  throw Error(Errc::config_error, "unknown event kind '" + std::string(text) + "'");
}

Value event_to_json(const Event& e) {
  return Value{{"seq", e.seq},
               {"t_ms", e.t_ms},
               {"kind", to_string(e.kind)},
               {"node_id", e.node_id ? Value(e.node_id->value) : Value(nullptr)},
               {"payload", e.payload}};
}

std::string event_to_line(const Event& e) { return event_to_json(e).dump(); }

Event event_from_json(const Value& doc) {
  Event e;
  e.seq = doc.at("seq").get<std::uint64_t>();
  e.t_ms = doc.at("t_ms").get<std::int64_t>();
  e.kind = event_kind_from_string(doc.at("kind").get<std::string>());
  if (!doc.at("node_id").is_null()) e.node_id = NodeId{doc["node_id"].get<std::uint64_t>()};
  e.payload = doc.at("payload");
  return e;
}

Event redact_for_feed(const Event& e) {
  if (e.kind != EventKind::gate_decision) return e;
  Event out = e;
  out.payload = Value{{"allow", e.payload.value("allow", false)}};
  return out;
}

EventLog::EventLog()
    : start_(std::chrono::steady_clock::now()),
      started_unix_ms_(std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count()) {}

std::uint64_t EventLog::emit(EventKind kind, std::optional<NodeId> node, Value payload) {
  std::lock_guard lock(mu_);
  Event e;
  e.seq = events_.size();
  e.t_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start_)
               .count();
  e.kind = kind;
  e.node_id = node;
  e.payload = std::move(payload);
  events_.push_back(std::move(e));
  if (kind == EventKind::run_completed) completed_ = true;
  for (const auto& [token, fn] : subscribers_) fn(events_.back());
  cv_.notify_all();
  return events_.back().seq;
}

std::uint64_t EventLog::subscribe(Subscriber fn) {
  std::lock_guard lock(mu_);
  for (const Event& e : events_) fn(e);
  const std::uint64_t token = next_token_++;
  subscribers_.emplace_back(token, std::move(fn));
  return token;
}

void EventLog::unsubscribe(std::uint64_t token) {
  std::lock_guard lock(mu_);
  std::erase_if(subscribers_, [token](const auto& s) { return s.first == token; });
}

std::vector<Event> EventLog::snapshot() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::vector<Event> EventLog::since(std::uint64_t first_seq) const {
  std::lock_guard lock(mu_);
  if (first_seq >= events_.size()) return {};
  return {events_.begin() + static_cast<std::ptrdiff_t>(first_seq), events_.end()};
}

std::size_t EventLog::size() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

bool EventLog::wait_for(std::uint64_t first_seq, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return events_.size() > first_seq || completed_; });
  return events_.size() > first_seq;
}

bool EventLog::completed() const {
  std::lock_guard lock(mu_);
  return completed_;
}

Graph replay(std::span<const Event> log) {
  if (log.empty() || log.back().kind != EventKind::run_completed)
    throw Error(Errc::incomplete_log, "event log does not end with run_completed");

  Graph g;
  for (const Event& e : log) {
    if (e.kind == EventKind::node_added) {
      Node n = node_from_json(e.payload);
      NodeSpec spec;
      spec.kind = n.kind;
      spec.tool_name = n.tool_name;
      spec.params = n.params;
      spec.param_refs = n.param_refs;
      spec.depends_on = n.depends_on;
      spec.spawned_by = n.spawned_by;
      for (const auto& v : e.payload.value("gates", Value::array()))
        spec.gates.push_back(NodeId{v.get<std::uint64_t>()});
      for (const auto& v : e.payload.value("retargets", Value::array()))
        spec.retargets.push_back(NodeId{v.get<std::uint64_t>()});
      NodeId got = g.add_node(std::move(spec));
      if (got != n.id)
        throw Error(Errc::incomplete_log, "node_added id " + std::to_string(n.id.value) +
                                              " out of order (expected " +
                                              std::to_string(got.value) + ")");
    } else if (e.kind == EventKind::state_changed) {
      if (!e.node_id) throw Error(Errc::incomplete_log, "state_changed without node_id");
      const NodeState to = node_state_from_string(e.payload.at("to").get<std::string>());
      Value payload = nullptr;
      if (to == NodeState::resolved) payload = e.payload.value("result", Value(nullptr));
      if (to == NodeState::failed) payload = e.payload.value("error", Value(""));
      g.transition(*e.node_id, to, payload);
    }
  }
  return g;
}

std::vector<Event> parse_event_lines(std::string_view text) {
  std::vector<Event> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(event_from_json(Value::parse(line)));
  }
  return out;
}

}  // namespace execgraph
