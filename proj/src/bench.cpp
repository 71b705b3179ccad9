// SPDX-License-Identifier: Apache-2.0
#include "execgraph/bench.hpp"

#include "execgraph/error.hpp"
#include "execgraph/tokens.hpp"
#include "execgraph/tools.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>

namespace execgraph::bench {

namespace {

constexpr std::string_view kTask = "Collect every synthetic result and report.";

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

Value synth_params(const Workload& w, std::size_t index) {
  return Value{{"tokens", w.k}, {"tag", "r" + std::to_string(index)}};
}

ToolRegistry bench_registry(std::chrono::milliseconds latency) {
  ToolRegistry reg;
  MockToolOptions opts;
  if (latency.count() > 0) opts.synth_latency = latency;
  register_mock_tools(reg, std::move(opts));
  return reg;
}

std::string base_context(const Workload& w) {
  std::string out;
  if (w.c > 0) out = synth_text(w.c, "ctx") + "\n";
  out += "Task: ";
  out += kTask;
  out += "\n";
  return out;
}

}  // namespace

std::string_view to_string(Shape s) noexcept {
  switch (s) {
    case Shape::independent: return "independent";
    case Shape::chain: return "chain";
    case Shape::diamond: return "diamond";
    case Shape::layered: return "layered";
  }
  return "independent";
}

Shape shape_from_string(std::string_view text) {
  for (Shape s : {Shape::independent, Shape::chain, Shape::diamond, Shape::layered})
    if (to_string(s) == text) return s;
  throw Error(Errc::config_error, "shape: unknown shape '" + std::string(text) + "'");
}

std::string_view to_string(Engine e) noexcept {
  switch (e) {
    case Engine::react_seq: return "react_seq";
    case Engine::react_parallel: return "react_parallel";
    case Engine::reflect: return "reflect";
    case Engine::nreflect: return "nreflect";
    case Engine::orchestrator: return "orchestrator";
  }
  return "react_seq";
}

std::vector<std::vector<std::size_t>> layers(const Workload& w) {
  if (w.n == 0) return {};
  std::vector<std::vector<std::size_t>> out;
  auto push_range = [&](std::size_t from, std::size_t to) {
    std::vector<std::size_t> layer;
    for (std::size_t i = from; i < to; ++i) layer.push_back(i);
    out.push_back(std::move(layer));
  };
  switch (w.shape) {
    case Shape::independent:
      push_range(0, w.n);
      break;
    case Shape::chain:
      for (std::size_t i = 0; i < w.n; ++i) push_range(i, i + 1);
      break;
    case Shape::diamond:
      if (w.n < 3) {
        for (std::size_t i = 0; i < w.n; ++i) push_range(i, i + 1);
      } else {
        push_range(0, 1);
        push_range(1, w.n - 1);
        push_range(w.n - 1, w.n);
      }
      break;
    case Shape::layered: {
      const std::size_t d = std::clamp<std::size_t>(w.d, 1, w.n);
      std::size_t next = 0;
      for (std::size_t i = 0; i < d; ++i) {
        const std::size_t size = w.n / d + (i < w.n % d ? 1 : 0);
        push_range(next, next + size);
        next += size;
      }
      break;
    }
  }
  return out;
}

std::size_t depth(const Workload& w) { return layers(w).size(); }

Plan workload_plan(const Workload& w) {
  const auto ls = layers(w);
  Plan plan;
  for (std::size_t li = 0; li < ls.size(); ++li) {
    for (std::size_t pos = 0; pos < ls[li].size(); ++pos) {
      PlanStep s;
      s.step = ls[li][pos];
      s.tool = "synth_result";
      s.params = synth_params(w, s.step);
      if (li > 0) {
        const auto& prev = ls[li - 1];
        if (w.shape == Shape::diamond && li == 2) {
          s.depends_on = prev;
        } else {
          s.depends_on.push_back(prev[std::min(pos, prev.size() - 1)]);
        }
      }
      plan.push_back(std::move(s));
    }
  }
  return plan;
}

std::vector<ScriptEntry> dag_script(const Workload& w, Mode mode) {
  std::vector<ScriptEntry> script;
  script.push_back({CallKind::plan, to_json(workload_plan(w))});
  const Value cont{{"kind", "continue"}};
  const Value done{{"kind", "conclude"}, {"text", "done"}};
  std::size_t reflections = 0;
  switch (mode.kind) {
    case Mode::Kind::reflect:
      reflections = depth(w);
      break;
    case Mode::Kind::nreflect:
      reflections = (w.n + mode.n - 1) / mode.n;
      break;
    case Mode::Kind::orchestrator:
      for (std::size_t i = 0; i < w.n; ++i) script.push_back({CallKind::observe, cont});
      reflections = 1;
      break;
  }
  reflections = std::max<std::size_t>(reflections, 1);
  for (std::size_t i = 0; i + 1 < reflections; ++i) script.push_back({CallKind::reflect, cont});
  script.push_back({CallKind::reflect, done});
  return script;
}

BenchRow run_react(const Workload& w, bool parallel) {
  const ToolRegistry reg = bench_registry(w.L);
  BenchRow row;
  row.engine = parallel ? Engine::react_parallel : Engine::react_seq;
  row.workload = w;

  std::vector<std::vector<std::size_t>> batches;
  for (const auto& layer : layers(w)) {
    if (parallel) {
      batches.push_back(layer);
    } else {
      for (std::size_t i : layer) batches.push_back({i});
    }
  }

  const std::string base = base_context(w);
  std::string transcript;
  const auto start = Clock::now();
  auto turn = [&](const Value& output) -> bool {
    const std::size_t in = count_tokens(base) + count_tokens(transcript);
    row.max_input_tokens = std::max(row.max_input_tokens, in);
    ++row.provider_calls;
    row.tokens_total += in + count_tokens(output.dump());
    return w.window == 0 || in <= w.window;
  };

  row.completed = true;
  for (const auto& batch : batches) {
    Value calls = Value::array();
    for (std::size_t i : batch)
      calls.push_back(Value{{"tool", "synth_result"}, {"params", synth_params(w, i)}});
    const Value output{{"calls", calls}};
    if (!turn(output)) {
      row.completed = false;
      break;
    }
    std::vector<std::future<ToolResult>> running;
    for (std::size_t i : batch)
      running.push_back(std::async(std::launch::async, [&reg, &w, i] {
        return reg.dispatch("synth_result", synth_params(w, i));
      }));
    transcript += "Action: " + output.dump() + "\n";
    for (auto& f : running) transcript += "Observation: " + render_value(f.get().value) + "\n";
  }
  if (row.completed && !turn(Value{{"answer", "done"}})) row.completed = false;
  row.wall_ms = ms_since(start);
  return row;
}

DagRun run_dag(const Workload& w, Mode mode) {
  const ToolRegistry reg = bench_registry(w.L);
  const auto script = dag_script(w, mode);
  ScriptedProvider provider(script);

  RunConfig cfg;
  cfg.mode = mode;
  for (const auto& name : reg.names()) cfg.scope.tools.insert(name);
  cfg.intent = IntentCeiling(ImpactLevel::control);
  cfg.budget.max_provider_calls = script.size() + 8;
  cfg.max_concurrency = std::max<std::size_t>(16, w.n + 4);
  if (w.c > 0) cfg.planner_preamble = synth_text(w.c, "ctx");

  Run run(std::string(kTask), cfg, reg, provider);
  const auto start = Clock::now();
  run.start();
  const RunOutcome& outcome = run.wait();

  DagRun out;
  out.row.wall_ms = ms_since(start);
  out.row.workload = w;
  out.row.engine = mode.kind == Mode::Kind::reflect    ? Engine::reflect
                   : mode.kind == Mode::Kind::nreflect ? Engine::nreflect
                                                       : Engine::orchestrator;
  out.outcome = outcome;
  out.events = run.events().snapshot();
  for (const Event& e : out.events) {
    if (e.kind != EventKind::provider_call) continue;
    const std::size_t in = e.payload.value("tokens_in", std::size_t{0});
    const std::string call = e.payload.value("call", std::string());
    ++out.row.provider_calls;
    out.row.tokens_total += in + e.payload.value("tokens_out", std::size_t{0});
    out.row.max_input_tokens = std::max(out.row.max_input_tokens, in);
    if (call == "reflect") out.row.reflection_tokens_in += in;
    if (call == "observe") out.row.observer_tokens_in += in;
  }
  out.row.completed = outcome.termination == Termination::concluded &&
                      (w.window == 0 || out.row.max_input_tokens <= w.window);
  return out;
}

std::vector<Ratio> doubling_ratios(const std::vector<BenchRow>& rows) {
  std::map<std::tuple<Engine, Shape, std::size_t>, const BenchRow*> index;
  for (const auto& r : rows) index[{r.engine, r.workload.shape, r.workload.n}] = &r;
  std::vector<Ratio> out;
  for (const auto& [key, row] : index) {
    const auto [engine, shape, n] = key;
    auto it = index.find({engine, shape, n * 2});
    if (it == index.end() || row->tokens_total == 0) continue;
    out.push_back({engine, shape, n, n * 2,
                   static_cast<double>(it->second->tokens_total) / static_cast<double>(row->tokens_total)});
  }
  return out;
}

std::string csv_header() { return "engine,shape,n,d,k,c,L,tokens_total,provider_calls,wall_ms,completed"; }

std::string to_csv(const BenchRow& r) {
  std::ostringstream out;
  out << to_string(r.engine) << ',' << to_string(r.workload.shape) << ',' << r.workload.n << ','
      << depth(r.workload) << ',' << r.workload.k << ',' << r.workload.c << ','
      << r.workload.L.count() << ',' << r.tokens_total << ',' << r.provider_calls << ',';
  out.setf(std::ios::fixed);
  out.precision(2);
  out << r.wall_ms << ',' << (r.completed ? "true" : "false");
  return out.str();
}

void write_csv(const std::vector<BenchRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::config_error, "cannot write '" + path + "'");
  out << csv_header() << '\n';
  for (const auto& r : rows) out << to_csv(r) << '\n';
}

std::string render_svg(const std::vector<BenchRow>& rows, Shape shape, std::string_view metric) {
  auto value = [&](const BenchRow& r) -> double {
    if (metric == "wall_ms") return r.wall_ms;
    if (metric == "provider_calls") return static_cast<double>(r.provider_calls);
    return static_cast<double>(r.tokens_total);
  };
  std::map<Engine, std::vector<std::pair<double, double>>> series;
  double max_x = 1, max_y = 1;
  for (const auto& r : rows) {
    if (r.workload.shape != shape) continue;
    const double x = static_cast<double>(r.workload.n);
    series[r.engine].emplace_back(x, value(r));
    max_x = std::max(max_x, x);
    max_y = std::max(max_y, value(r));
  }
  constexpr double W = 640, H = 400, left = 70, right = 150, top = 30, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + x / max_x * pw; };
  auto py = [&](double y) { return top + ph - y / max_y * ph; };
  static const std::map<Engine, std::string> colors = {
      {Engine::react_seq, "#d62728"},   {Engine::react_parallel, "#ff7f0e"},
      {Engine::reflect, "#1f77b4"},     {Engine::nreflect, "#9467bd"},
      {Engine::orchestrator, "#2ca02c"}};

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << left << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">" << metric
      << " vs n (" << to_string(shape) << ")</text>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
      << top + ph << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = max_y * i / 4;
    out << "<text x=\"" << left - 6 << "\" y=\"" << py(y) + 4
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">"
        << static_cast<long long>(std::llround(y)) << "</text>\n";
  }
  std::set<double> xs;
  for (const auto& [e, pts] : series)
    for (const auto& p : pts) xs.insert(p.first);
  for (double x : xs)
    out << "<text x=\"" << px(x) << "\" y=\"" << top + ph + 16
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">"
        << static_cast<long long>(x) << "</text>\n";
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">n</text>\n";

  int legend = 0;
  for (auto& [engine, pts] : series) {
    std::sort(pts.begin(), pts.end());
    const std::string& color = colors.at(engine);
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) out << px(x) << ',' << py(y) << ' ';
    out << "\"/>\n";
    for (const auto& [x, y] : pts)
      out << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = top + 14 + 18 * legend++;
    out << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + pw + 32
        << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << left + pw + 36 << "\" y=\"" << ly
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << to_string(engine) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

ContrastResult persistence_contrast(std::size_t n, std::size_t k) {
  const std::size_t failing = n > 1 ? 1 : 0;
  Workload w{.n = n, .d = 1, .k = k, .c = 0, .L = std::chrono::milliseconds(0),
             .shape = Shape::independent};
  const Value fail_params{{"message", "upstream unavailable"}};
  ContrastResult out;

  // React: the scripted model asks the user once a call comes back failed.
  {
    const ToolRegistry reg = bench_registry(w.L);
    BenchRow& row = out.react;
    row.engine = Engine::react_seq;
    row.workload = w;
    const std::string base = base_context(w);
    std::string transcript;
    const auto start = Clock::now();
    auto turn = [&](const Value& output) {
      const std::size_t in = count_tokens(base) + count_tokens(transcript);
      row.max_input_tokens = std::max(row.max_input_tokens, in);
      ++row.provider_calls;
      row.tokens_total += in + count_tokens(output.dump());
    };
    row.completed = true;
    for (std::size_t i = 0; i < n; ++i) {
      const bool fails = i == failing;
      const Value call{{"tool", fails ? "fail" : "synth_result"},
                       {"params", fails ? fail_params : synth_params(w, i)}};
      turn(Value{{"calls", Value::array({call})}});
      transcript += "Action: " + call.dump() + "\n";
      try {
        transcript += "Observation: " +
                      render_value(reg.dispatch(call["tool"].get<std::string>(), call["params"]).value) + "\n";
      } catch (const Error& e) {
        transcript += std::string("Observation: error: ") + e.what() + "\n";
        turn(Value{{"defer_to_user", "The tool failed. How would you like to proceed?"}});
        out.react_deferred = true;
        row.completed = false;
        break;
      }
    }
    if (row.completed) turn(Value{{"answer", "done"}});
    row.wall_ms = ms_since(start);
  }

  // Kernel: same failure, repaired by the micro-planner.
  {
    const ToolRegistry reg = bench_registry(w.L);
    Plan plan = workload_plan(w);
    plan[failing].tool = "fail";
    plan[failing].params = fail_params;
    std::vector<ScriptEntry> script{
        {CallKind::plan, to_json(plan)},
        {CallKind::micro_plan,
         Value{{"kind", "substitute"},
               {"step", {{"tool", "synth_result"}, {"params", synth_params(w, n)}}}}},
        {CallKind::reflect, Value{{"kind", "conclude"}, {"text", "done"}}}};
    ScriptedProvider provider(script);
    RunConfig cfg;
    for (const auto& name : reg.names()) cfg.scope.tools.insert(name);
    cfg.max_concurrency = 1;
    const auto start = Clock::now();
    const RunOutcome o = run(std::string(kTask), cfg, reg, provider);
    BenchRow& row = out.dag;
    row.engine = Engine::reflect;
    row.workload = w;
    row.wall_ms = ms_since(start);
    row.provider_calls = o.counters.provider_calls;
    row.tokens_total = o.counters.tokens_in + o.counters.tokens_out;
    row.completed = o.termination == Termination::concluded;
  }
  return out;
}

std::vector<BenchRow> run_grid(const std::vector<Workload>& grid, const std::string& out_dir) {
  std::vector<BenchRow> rows;
  for (const Workload& w : grid) {
    rows.push_back(run_react(w, false));
    rows.push_back(run_react(w, true));
    rows.push_back(run_dag(w, Mode::reflect()).row);
    rows.push_back(run_dag(w, Mode::nreflect(4)).row);
    rows.push_back(run_dag(w, Mode::orchestrator()).row);
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_csv(rows, (std::filesystem::path(out_dir) / "bench.csv").string());
    std::set<Shape> shapes;
    for (const auto& r : rows) shapes.insert(r.workload.shape);
    for (Shape s : shapes) {
      for (std::string_view metric : {"tokens_total", "wall_ms", "provider_calls"}) {
        std::ofstream f(std::filesystem::path(out_dir) /
                        (std::string(metric) + "_" + std::string(to_string(s)) + ".svg"));
        f << render_svg(rows, s, metric);
      }
    }
  }
  return rows;
}

}  // namespace execgraph::bench
