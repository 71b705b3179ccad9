// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "execgraph/graph.hpp"
#include "execgraph/value.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace execgraph {

enum class EventKind {
  node_added,
  state_changed,
  gate_decision,
  provider_call,
  interjection_received,
  run_completed,
};

std::string_view to_string(EventKind kind) noexcept;
EventKind event_kind_from_string(std::string_view text);

struct Event {
  std::uint64_t seq = 0;
  std::int64_t t_ms = 0;
  EventKind kind = EventKind::node_added;
  std::optional<NodeId> node_id;
  Value payload = Value::object();
};

/// One line of the event feed: {"seq","t_ms","kind","node_id","payload"}.
Value event_to_json(const Event& e);
std::string event_to_line(const Event& e);
Event event_from_json(const Value& doc);

/// Copy of `e` safe to show outside the operator audit view: gate decision
/// stages and reasons are removed.
Event redact_for_feed(const Event& e);

/// Append-only event stream for one run. Thread-safe. Subscribers get a
/// gapless backfill followed by live events, in seq order.
class EventLog {
 public:
  using Subscriber = std::function<void(const Event&)>;

  EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  std::uint64_t emit(EventKind kind, std::optional<NodeId> node, Value payload);

  /// Returns a token; dropping it does not unsubscribe, call `unsubscribe`.
  std::uint64_t subscribe(Subscriber fn);
  void unsubscribe(std::uint64_t token);

  std::vector<Event> snapshot() const;
  std::vector<Event> since(std::uint64_t first_seq) const;
  std::size_t size() const;

  /// Blocks until an event with seq >= `first_seq` exists, the log is
  /// completed, or the timeout elapses. Returns true if new events exist.
  bool wait_for(std::uint64_t first_seq, std::chrono::milliseconds timeout) const;

  /// True once a run_completed event has been emitted.
  bool completed() const;

  /// Absolute wall time of run start, milliseconds since the Unix epoch.
  std::int64_t started_at_unix_ms() const { return started_unix_ms_; }

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<Event> events_;
  std::vector<std::pair<std::uint64_t, Subscriber>> subscribers_;
  std::uint64_t next_token_ = 1;
  bool completed_ = false;
  std::chrono::steady_clock::time_point start_;
  std::int64_t started_unix_ms_ = 0;
};

/// Rebuilds the graph by folding node_added and state_changed events.
/// Throws Error{incomplete_log} unless the log ends with run_completed.
Graph replay(std::span<const Event> log);

std::vector<Event> parse_event_lines(std::string_view text);

}  // namespace execgraph
