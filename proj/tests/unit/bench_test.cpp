// SPDX-License-Identifier: Apache-2.0
#include "execgraph/bench.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace execgraph;
using namespace execgraph::bench;

namespace {

Workload with_k(Workload w, std::size_t k) {
  w.k = k;
  return w;
}

}  // namespace

TEST(Shapes, LayersAndDepth) {
  EXPECT_EQ(depth({.n = 8, .shape = Shape::independent}), 1u);
  EXPECT_EQ(depth({.n = 5, .shape = Shape::chain}), 5u);
  EXPECT_EQ(depth({.n = 6, .shape = Shape::diamond}), 3u);
  const Workload layered{.n = 16, .d = 4, .shape = Shape::layered};
  EXPECT_EQ(depth(layered), 4u);
  for (const auto& l : layers(layered)) EXPECT_EQ(l.size(), 4u);
  const Plan p = workload_plan(layered);
  ASSERT_EQ(p.size(), 16u);
  EXPECT_TRUE(p[0].depends_on.empty());
  EXPECT_EQ(p[4].depends_on, (std::vector<std::uint64_t>{0}));
}

TEST(React, CarriedResultTokensMatchClosedForm) {
  // Only the results differ between k and k=0, so the difference is the
  // result mass carried: every turn after call i re-reads its k tokens.
  const Workload w{.n = 7, .k = 1000, .shape = Shape::chain};
  const auto full = run_react(w, false);
  const auto empty = run_react(with_k(w, 0), false);
  std::size_t oracle = 0;
  for (std::size_t i = 1; i <= w.n; ++i) oracle += i * w.k;
  EXPECT_EQ(oracle, 28000u);
  EXPECT_EQ(full.tokens_total - empty.tokens_total, oracle);
  EXPECT_EQ(full.provider_calls, 8u);
  EXPECT_TRUE(full.completed);
}

TEST(React, SingleCallCostsAboutContextPlusResult) {
  const Workload w{.n = 1, .k = 300, .c = 100};
  const auto r = run_react(w, false);
  EXPECT_EQ(r.provider_calls, 2u);
  EXPECT_GE(r.tokens_total, 2 * w.c + w.k);
  EXPECT_LE(r.tokens_total, 2 * w.c + w.k + 120);
}

TEST(React, ParallelBatchesEachLayer) {
  const Workload w{.n = 16, .d = 4, .k = 10, .shape = Shape::layered};
  EXPECT_EQ(run_react(w, true).provider_calls, 5u);
  EXPECT_EQ(run_react(w, false).provider_calls, 17u);
}

TEST(React, WindowExhaustion) {
  const Workload w{.n = 18, .k = 1000, .c = 2000, .window = 20000};
  const auto r = run_react(w, false);
  EXPECT_FALSE(r.completed);
  EXPECT_GT(r.max_input_tokens, w.window);
}

TEST(Dag, ReflectionEvidenceMatchesLayerSum) {
  const Workload w{.n = 16, .d = 4, .k = 200, .shape = Shape::layered};
  const auto full = run_dag(w, Mode::reflect());
  const auto empty = run_dag(with_k(w, 0), Mode::reflect());
  std::size_t oracle = 0;
  for (std::size_t i = 1; i <= w.d; ++i) oracle += w.k * (i * w.n / w.d);
  EXPECT_EQ(full.row.reflection_tokens_in - empty.row.reflection_tokens_in, oracle);
  EXPECT_EQ(full.outcome.counters.waves, 4u);
}

TEST(Dag, ObserverTokensLinear) {
  const Workload w{.n = 12, .k = 200};
  const auto full = run_dag(w, Mode::orchestrator());
  const auto empty = run_dag(with_k(w, 0), Mode::orchestrator());
  EXPECT_EQ(full.row.observer_tokens_in - empty.row.observer_tokens_in, w.n * w.k);
  EXPECT_EQ(execgraph::testing::count_kind(full.outcome.graph, NodeKind::observer), w.n);
}

TEST(Dag, TokensTotalEqualsEventSum) {
  const Workload w{.n = 8, .d = 2, .k = 50, .shape = Shape::layered};
  for (Mode m : {Mode::reflect(), Mode::nreflect(3), Mode::orchestrator()}) {
    const auto r = run_dag(w, m);
    std::size_t sum = 0;
    for (const auto& e : r.events)
      if (e.kind == EventKind::provider_call)
        sum += e.payload.at("tokens_in").get<std::size_t>() + e.payload.at("tokens_out").get<std::size_t>();
    EXPECT_EQ(r.row.tokens_total, sum);
    EXPECT_TRUE(r.row.completed);
    EXPECT_EQ(replay(r.events).to_json(), r.outcome.graph.to_json());
  }
}

TEST(Dag, AsymptoticOrdering) {
  const Workload w{.n = 32, .d = 4, .k = 200, .shape = Shape::layered};
  const auto react = run_react(w, false).tokens_total;
  const auto reflect = run_dag(w, Mode::reflect()).row.tokens_total;
  const auto orch = run_dag(w, Mode::orchestrator()).row.tokens_total;
  EXPECT_GT(react, reflect);
  EXPECT_GT(reflect, orch);
}

TEST(Contrast, DagRepairsWhereReactDefers) {
  const auto c = persistence_contrast(6, 50);
  EXPECT_TRUE(c.react_deferred);
  EXPECT_FALSE(c.react.completed);
  EXPECT_TRUE(c.dag.completed);
}

TEST(Report, CsvAndPlots) {
  const auto dir = std::filesystem::temp_directory_path() / "execgraph_bench_test";
  std::filesystem::remove_all(dir);
  std::vector<Workload> grid{{.n = 4, .k = 20}, {.n = 8, .k = 20}};
  const auto rows = run_grid(grid, dir.string());
  EXPECT_EQ(rows.size(), 10u);
  std::ifstream csv(dir / "bench.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "engine,shape,n,d,k,c,L,tokens_total,provider_calls,wall_ms,completed");
  std::size_t lines = 0;
  for (std::string l; std::getline(csv, l);) ++lines;
  EXPECT_EQ(lines, 10u);
  EXPECT_TRUE(std::filesystem::exists(dir / "tokens_total_independent.svg"));
  EXPECT_TRUE(std::filesystem::exists(dir / "wall_ms_independent.svg"));
  const auto ratios = doubling_ratios(rows);
  EXPECT_EQ(ratios.size(), 5u);
}
