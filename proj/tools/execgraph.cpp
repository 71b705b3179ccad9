// SPDX-License-Identifier: Apache-2.0
// Command-line entry point: run, serve, clearance-stub, bench.

#include "execgraph/bench.hpp"
#include "execgraph/config.hpp"
#include "execgraph/error.hpp"
#include "execgraph/kernel.hpp"
#include "execgraph/service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace eg = execgraph;

namespace {

struct RunArgs {
  std::string task;
  std::string task_file;
  std::string mode = "reflect";
  std::string script;
  std::string provider;
  std::string policy;
  std::string out_dir = "run-out";
  std::string fixtures;
  std::string aggregator = "disabled";
  std::size_t max_calls = 25;
  std::int64_t wall_clock_ms = 120000;
  std::size_t micro_plans = 2;
  bool enable_bash = false;
  bool no_interjection = false;
};

int cmd_run(const RunArgs& a) {
  eg::RunConfig cfg;
  std::unique_ptr<eg::Provider> provider;
  eg::ToolRegistry registry;
  std::string task = a.task;
  try {
    if (!a.task_file.empty()) {
      std::ifstream in(a.task_file);
      if (!in) throw eg::Error(eg::Errc::config_error, "task-file: cannot open '" + a.task_file + "'");
      task.assign(std::istreambuf_iterator<char>(in), {});
    }
    if (task.empty()) throw eg::Error(eg::Errc::config_error, "task: give --task or --task-file");
    cfg.mode = eg::parse_mode(a.mode);
    eg::apply_policy(cfg, eg::parse_policy(eg::load_json_file(a.policy)));
    cfg.budget.max_provider_calls = a.max_calls;
    cfg.budget.wall_clock = std::chrono::milliseconds(a.wall_clock_ms);
    cfg.budget.max_micro_plans_per_node = a.micro_plans;
    cfg.aggregator = eg::aggregator_mode_from_string(a.aggregator);
    cfg.interjection_enabled = !a.no_interjection;
    eg::validate(cfg);

    if (!a.script.empty() == !a.provider.empty())
      throw eg::Error(eg::Errc::config_error, "provider: give exactly one of --script or --provider");
    if (!a.script.empty())
      provider = std::make_unique<eg::ScriptedProvider>(eg::load_script(a.script));
    else
      provider = std::make_unique<eg::RemoteProvider>(
          eg::parse_remote_configs(eg::load_json_file(a.provider)));

    eg::MockToolOptions opts;
    if (!a.fixtures.empty()) opts.fixtures = eg::load_fixture_store(a.fixtures);
    eg::register_mock_tools(registry, std::move(opts));
    if (a.enable_bash) eg::register_bash_tool(registry);
  } catch (const eg::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  eg::Run run(task, cfg, registry, *provider);
  run.start();
  const eg::RunOutcome& outcome = run.wait();

  std::filesystem::create_directories(a.out_dir);
  {
    std::ofstream log(std::filesystem::path(a.out_dir) / "events.jsonl");
    for (const auto& e : run.events().snapshot()) log << eg::event_to_line(e) << "\n";
  }
  {
    std::ofstream out(std::filesystem::path(a.out_dir) / "outcome.json");
    out << eg::outcome_to_json(outcome).dump(2) << "\n";
  }
  std::cout << outcome.verdict_text << "\n";
  if (outcome.termination != eg::Termination::concluded)
    std::cerr << "run stopped: " << eg::to_string(outcome.termination) << "\n";
  return outcome.termination == eg::Termination::concluded ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-scheduled tool execution kernel"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Execute one task and write its event log");
  run->add_option("--task", ra.task, "Task text");
  run->add_option("--task-file", ra.task_file, "File holding the task text");
  run->add_option("--mode", ra.mode, "reflect | nreflect[=N] | orchestrator")->capture_default_str();
  run->add_option("--script", ra.script, "Scripted provider file");
  run->add_option("--provider", ra.provider, "Remote endpoint config file");
  run->add_option("--policy", ra.policy, "Policy file")->required();
  run->add_option("--out", ra.out_dir, "Output directory")->capture_default_str();
  run->add_option("--fixtures", ra.fixtures, "kv_fetch fixture store");
  run->add_option("--aggregator", ra.aggregator, "disabled | executor_model | reasoning_model")
      ->capture_default_str();
  run->add_option("--max-calls", ra.max_calls, "Provider call budget")->capture_default_str();
  run->add_option("--wall-clock-ms", ra.wall_clock_ms, "Wall-clock budget")->capture_default_str();
  run->add_option("--micro-plans", ra.micro_plans, "Repairs allowed per lineage")->capture_default_str();
  run->add_flag("--enable-bash", ra.enable_bash, "Register the real shell tool");
  run->add_flag("--no-interjection", ra.no_interjection, "Refuse operator interjections");

  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  bool audit = false;
  std::string serve_provider, serve_fixtures;
  bool serve_bash = false;
  auto* serve = app.add_subcommand("serve", "Serve runs, event feeds and interjection over HTTP");
  serve->add_option("--host", serve_host)->capture_default_str();
  serve->add_option("--port", serve_port)->capture_default_str();
  serve->add_flag("--audit", audit, "Expose GET /runs/{id}/audit");
  serve->add_option("--provider", serve_provider, "Remote endpoint config for runs without a script");
  serve->add_option("--fixtures", serve_fixtures, "kv_fetch fixture store");
  serve->add_flag("--enable-bash", serve_bash, "Register the real shell tool");

  std::string stub_rules, stub_host = "127.0.0.1";
  int stub_port = 8090;
  auto* stub = app.add_subcommand("clearance-stub", "Rule-driven clearance authority");
  stub->add_option("--rules", stub_rules, "Rules file")->required();
  stub->add_option("--host", stub_host)->capture_default_str();
  stub->add_option("--port", stub_port)->capture_default_str();

  std::string bench_out = "bench-out";
  std::vector<std::size_t> bench_n{8, 16, 32};
  std::size_t bench_k = 200, bench_c = 0, bench_d = 4;
  std::int64_t bench_L = 0;
  auto* benchcmd = app.add_subcommand("bench", "Token and latency grid, CSV and SVG plots");
  benchcmd->add_option("--out", bench_out)->capture_default_str();
  benchcmd->add_option("--n", bench_n, "Tool counts")->capture_default_str();
  benchcmd->add_option("--k", bench_k, "Result size in tokens")->capture_default_str();
  benchcmd->add_option("--c", bench_c, "Base context tokens")->capture_default_str();
  benchcmd->add_option("--d", bench_d, "Depth of the layered shape")->capture_default_str();
  benchcmd->add_option("--latency-ms", bench_L, "Simulated tool latency")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(ra);

    if (*serve) {
      eg::ServiceOptions opts;
      opts.audit_enabled = audit;
      opts.enable_bash = serve_bash;
      if (!serve_provider.empty())
        opts.remote = eg::parse_remote_configs(eg::load_json_file(serve_provider));
      if (!serve_fixtures.empty()) opts.tools.fixtures = eg::load_fixture_store(serve_fixtures);
      eg::Service service(std::move(opts));
      std::cerr << "serving on " << serve_host << ":" << serve_port << "\n";
      service.listen(serve_host, serve_port);
      return 0;
    }

    if (*stub) {
      eg::ClearanceStub server(eg::parse_stub_rules(eg::load_json_file(stub_rules)));
      std::cerr << "clearance stub on " << stub_host << ":" << stub_port << "\n";
      server.listen(stub_host, stub_port);
      return 0;
    }

    if (*benchcmd) {
      std::vector<eg::bench::Workload> grid;
      for (auto shape : {eg::bench::Shape::independent, eg::bench::Shape::layered})
        for (std::size_t n : bench_n)
          grid.push_back({.n = n, .d = shape == eg::bench::Shape::layered ? bench_d : 1, .k = bench_k,
                          .c = bench_c, .L = std::chrono::milliseconds(bench_L), .shape = shape});
      const auto rows = eg::bench::run_grid(grid, bench_out);
      std::cout << eg::bench::csv_header() << "\n";
      for (const auto& r : rows) std::cout << eg::bench::to_csv(r) << "\n";
      for (const auto& r : eg::bench::doubling_ratios(rows))
        std::cout << "doubling " << eg::bench::to_string(r.engine) << " "
                  << eg::bench::to_string(r.shape) << " " << r.n_from << "->" << r.n_to << ": "
                  << r.ratio << "\n";
      return 0;
    }
  } catch (const eg::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
