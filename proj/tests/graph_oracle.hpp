// SPDX-License-Identifier: Apache-2.0
// Plain-array DAG simulator used as the reference for Graph scheduling.
#pragma once

#include "execgraph/graph.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace execgraph::testing {

struct DagCase {
  std::vector<std::vector<std::size_t>> deps;  // deps[i] only names j < i
  std::vector<bool> checkpoint;
  std::vector<bool> fails;
};

struct Simulator {
  explicit Simulator(const DagCase& c) : c(c), state(c.deps.size(), NodeState::pending) {}

  std::vector<std::size_t> ready() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < state.size(); ++i) {
      if (state[i] != NodeState::pending) continue;
      bool ok = true;
      for (std::size_t d : c.deps[i]) ok = ok && is_terminal(state[d]);
      if (ok) out.push_back(i);
    }
    return out;
  }

  // Fixed point: a pending non-checkpoint node with a dependency in the
  // skip set joins it, until nothing changes.
  void skip_from(std::size_t origin) {
    std::vector<bool> in_set(state.size(), false);
    in_set[origin] = true;
    for (bool changed = true; changed;) {
      changed = false;
      for (std::size_t i = 0; i < state.size(); ++i) {
        if (state[i] != NodeState::pending || c.checkpoint[i]) continue;
        for (std::size_t d : c.deps[i])
          if (in_set[d]) {
            state[i] = NodeState::skipped;
            in_set[i] = changed = true;
            break;
          }
      }
    }
  }

  const DagCase& c;
  std::vector<NodeState> state;
};

/// Drives the same DAG through Graph and the simulator, firing and completing
/// nodes in the order picked by `rng` (or everything at once when null).
/// Returns an empty string on agreement, else a description of the mismatch.
inline std::string compare_with_graph(const DagCase& c, std::mt19937_64* rng) {
  Graph g;
  std::vector<NodeId> ids;
  for (std::size_t i = 0; i < c.deps.size(); ++i) {
    NodeSpec s;
    s.kind = c.checkpoint[i] ? NodeKind::reflection : NodeKind::tool;
    if (!c.checkpoint[i]) s.tool_name = "t";
    for (std::size_t d : c.deps[i]) s.depends_on.insert(ids[d]);
    ids.push_back(g.add_node(std::move(s)));
  }
  Simulator sim(c);
  auto same_states = [&] {
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (g.node(ids[i]).state != sim.state[i]) return false;
    return true;
  };
  std::vector<std::size_t> running;
  for (int guard = 0; guard < 1000; ++guard) {
    const auto expect = sim.ready();
    const auto got = g.ready_nodes();
    if (got.size() != expect.size()) return "ready set size differs";
    for (std::size_t i = 0; i < got.size(); ++i)
      if (got[i] != ids[expect[i]]) return "ready set differs";
    if (expect.empty() && running.empty()) return same_states() ? "" : "final states differ";

    for (std::size_t i : expect) {
      if (rng && (*rng)() % 2 == 0 && !running.empty()) continue;
      g.transition(ids[i], NodeState::running);
      sim.state[i] = NodeState::running;
      running.push_back(i);
    }
    std::vector<std::size_t> still;
    for (std::size_t i : running) {
      if (rng && (*rng)() % 3 == 0 && still.size() + 1 < running.size()) {
        still.push_back(i);
        continue;
      }
      if (c.fails[i]) {
        g.transition(ids[i], NodeState::failed, Value("boom"));
        sim.state[i] = NodeState::failed;
        g.propagate_skip(ids[i]);
        sim.skip_from(i);
      } else {
        g.transition(ids[i], NodeState::resolved, Value(static_cast<std::int64_t>(i)));
        sim.state[i] = NodeState::resolved;
      }
    }
    running = std::move(still);
    if (!same_states()) return "states differ after completion step";
  }
  return "did not terminate";
}

/// Every DAG on n nodes (all edge subsets consistent with index order), with
/// checkpoint and failure markings derived from the edge mask. Returns the
/// number of mismatches and the count of DAGs checked.
inline std::pair<std::size_t, std::size_t> exhaustive_ready_check(std::size_t max_nodes) {
  std::size_t bad = 0, checked = 0;
  for (std::size_t n = 1; n <= max_nodes; ++n) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) edges.emplace_back(i, j);
    const std::uint64_t total = 1ull << edges.size();
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      DagCase c;
      c.deps.resize(n);
      for (std::size_t e = 0; e < edges.size(); ++e)
        if (mask >> e & 1) c.deps[edges[e].first].push_back(edges[e].second);
      const std::uint64_t h = mask * 0x9E3779B97F4A7C15ull;
      for (std::size_t i = 0; i < n; ++i) {
        c.fails.push_back((h >> (i + 7)) % 3 == 0);
        c.checkpoint.push_back((h >> (i + 23)) % 5 == 0);
      }
      if (!compare_with_graph(c, nullptr).empty()) ++bad;
      ++checked;
    }
  }
  return {bad, checked};
}

inline DagCase random_dag(std::mt19937_64& rng, std::size_t max_nodes) {
  const std::size_t n = 1 + rng() % max_nodes;
  const double density = std::uniform_real_distribution<double>(0.02, 0.4)(rng);
  std::bernoulli_distribution edge(density), fail(0.15), checkpoint(0.1);
  DagCase c;
  c.deps.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j)
      if (edge(rng)) c.deps[i].push_back(j);
    c.fails.push_back(fail(rng));
    c.checkpoint.push_back(checkpoint(rng));
  }
  return c;
}

inline std::pair<std::size_t, std::size_t> random_ready_check(std::size_t count, std::size_t max_nodes,
                                                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const DagCase c = random_dag(rng, max_nodes);
    if (!compare_with_graph(c, &rng).empty()) ++bad;
  }
  return {bad, count};
}

/// Table-driven oracle for the lifecycle. Rows are from-states, columns to-states
/// in declaration order pending, running, resolved, failed, skipped.
inline constexpr bool kTransitionTable[5][5] = {
    {false, true, false, false, true},
    {false, false, true, true, false},
    {false, false, false, false, false},
    {false, false, false, false, false},
    {false, false, false, false, false},
};

/// Random walk of `steps` attempted transitions over a pool of nodes. Each
/// attempt must succeed exactly when the table allows it and leave the state
/// untouched otherwise. Returns the number of disagreements.
inline std::size_t transition_walk(std::size_t steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Graph g;
  std::vector<NodeId> pool;
  std::size_t bad = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    if (pool.empty() || rng() % 8 == 0) pool.push_back(g.add_node({.tool_name = "t"}));
    const NodeId id = pool[rng() % pool.size()];
    const NodeState from = g.node(id).state;
    const auto to = static_cast<NodeState>(rng() % 5);
    const bool legal = kTransitionTable[static_cast<int>(from)][static_cast<int>(to)];
    bool threw = false;
    try {
      g.transition(id, to, Value("x"));
    } catch (const Error& e) {
      threw = e.code() == Errc::illegal_transition;
    }
    if (legal == threw) ++bad;
    if (g.node(id).state != (legal ? to : from)) ++bad;
  }
  return bad;
}

}  // namespace execgraph::testing
