// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "execgraph/events.hpp"
#include "execgraph/kernel.hpp"
#include "execgraph/reasoning.hpp"

#include <chrono>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace execgraph::bench {

enum class Shape { independent, chain, diamond, layered };
std::string_view to_string(Shape s) noexcept;
Shape shape_from_string(std::string_view text);

struct Workload {
  std::size_t n = 8;
  std::size_t d = 1;  // used by layered; derived for the other shapes
  std::size_t k = 200;
  std::size_t c = 0;
  std::chrono::milliseconds L{0};
  Shape shape = Shape::independent;
  /// Largest single provider input accepted; 0 disables the check.
  std::size_t window = 0;
};

/// Node indices per dependency layer.
std::vector<std::vector<std::size_t>> layers(const Workload& w);

/// Dependency depth of the compiled plan.
std::size_t depth(const Workload& w);

/// synth_result steps wired per the shape.
Plan workload_plan(const Workload& w);

enum class Engine { react_seq, react_parallel, reflect, nreflect, orchestrator };
std::string_view to_string(Engine e) noexcept;

struct BenchRow {
  Engine engine = Engine::react_seq;
  Workload workload;
  std::size_t tokens_total = 0;
  std::size_t provider_calls = 0;
  double wall_ms = 0;
  bool completed = false;
  // Breakdown by call kind (inputs only).
  std::size_t reflection_tokens_in = 0;
  std::size_t observer_tokens_in = 0;
  std::size_t max_input_tokens = 0;
};

/// Scripted think-act-observe loop. Every turn's input is the base context,
/// the task, and all prior calls and results.
BenchRow run_react(const Workload& w, bool parallel);

struct DagRun {
  BenchRow row;
  RunOutcome outcome;
  std::vector<Event> events;
};

/// Runs the workload through the kernel with a generated script.
DagRun run_dag(const Workload& w, Mode mode);

/// Script for `run_dag`: plan, then the checkpoint calls the mode makes on a
/// static plan, the last one concluding.
std::vector<ScriptEntry> dag_script(const Workload& w, Mode mode);

struct Ratio {
  Engine engine;
  Shape shape;
  std::size_t n_from = 0;
  std::size_t n_to = 0;
  double ratio = 0;
};

/// tokens(2n)/tokens(n) for every engine and shape where both rows exist.
std::vector<Ratio> doubling_ratios(const std::vector<BenchRow>& rows);

std::string csv_header();
std::string to_csv(const BenchRow& row);
void write_csv(const std::vector<BenchRow>& rows, const std::string& path);

/// Line chart of `metric` ("tokens_total", "wall_ms", "provider_calls")
/// against n for one shape, one series per engine.
std::string render_svg(const std::vector<BenchRow>& rows, Shape shape, std::string_view metric);

struct ContrastResult {
  BenchRow react;
  BenchRow dag;
  bool react_deferred = false;  // the react model stopped to ask the user
};

/// Injects a failing tool call into both engines. The react model may defer
/// to the user; the kernel has no such path and must repair and finish.
ContrastResult persistence_contrast(std::size_t n, std::size_t k);

/// Runs the grid, writes CSV and plots into `out_dir`, returns the rows.
std::vector<BenchRow> run_grid(const std::vector<Workload>& grid, const std::string& out_dir);

}  // namespace execgraph::bench
