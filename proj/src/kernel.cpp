// SPDX-License-Identifier: Apache-2.0
#include "execgraph/kernel.hpp"

#include "execgraph/error.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <thread>
#include <variant>

namespace execgraph {

Mode parse_mode(std::string_view text) {
  if (text == "reflect") return Mode::reflect();
  if (text == "orchestrator") return Mode::orchestrator();
  if (text == "nreflect") return Mode::nreflect(4);
  if (text.starts_with("nreflect=")) {
    const std::string num(text.substr(9));
    if (!num.empty() && std::all_of(num.begin(), num.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      const auto n = std::stoull(num);
      if (n >= 1) return Mode::nreflect(n);
    }
    throw Error(Errc::config_error, "mode: nreflect needs a positive integer, got '" + num + "'");
  }
  throw Error(Errc::config_error, "mode: unknown mode '" + std::string(text) + "'");
}

std::string to_string(const Mode& mode) {
  switch (mode.kind) {
    case Mode::Kind::reflect: return "reflect";
    case Mode::Kind::nreflect: return "nreflect=" + std::to_string(mode.n);
    case Mode::Kind::orchestrator: return "orchestrator";
  }
  return "reflect";
}

std::string_view to_string(AggregatorMode mode) noexcept {
  switch (mode) {
    case AggregatorMode::disabled: return "disabled";
    case AggregatorMode::executor_model: return "executor_model";
    case AggregatorMode::reasoning_model: return "reasoning_model";
  }
  return "disabled";
}

AggregatorMode aggregator_mode_from_string(std::string_view text) {
  for (auto m : {AggregatorMode::disabled, AggregatorMode::executor_model, AggregatorMode::reasoning_model})
    if (to_string(m) == text) return m;
  throw Error(Errc::config_error, "aggregator: unknown setting '" + std::string(text) + "'");
}

std::string_view to_string(Termination t) noexcept {
  switch (t) {
    case Termination::concluded: return "concluded";
    case Termination::budget: return "budget";
    case Termination::wall_clock: return "wall_clock";
  }
  return "concluded";
}

void validate(const RunConfig& c) {
  if (c.mode.kind == Mode::Kind::nreflect && c.mode.n < 1)
    throw Error(Errc::config_error, "mode: nreflect N must be at least 1");
  if (c.budget.max_provider_calls < 1)
    throw Error(Errc::config_error, "budget.max_provider_calls must be positive");
  if (c.budget.wall_clock.count() <= 0)
    throw Error(Errc::config_error, "budget.wall_clock must be positive");
  if (c.budget.max_micro_plans_per_node < 1)
    throw Error(Errc::config_error, "budget.max_micro_plans_per_node must be positive");
  if (c.max_concurrency < 1) throw Error(Errc::config_error, "max_concurrency must be positive");
  if (c.clearance && c.clearance->timeout.count() <= 0)
    throw Error(Errc::config_error, "clearance.timeout_ms must be positive");
}

Value to_json(const Counters& c) {
  return Value{{"provider_calls", c.provider_calls},
               {"tool_executions", c.tool_executions},
               {"waves", c.waves},
               {"tokens_in", c.tokens_in},
               {"tokens_out", c.tokens_out}};
}

Counters fold_counters(std::span<const Event> log) {
  Counters c;
  for (const Event& e : log) {
    if (e.kind == EventKind::provider_call) {
      ++c.provider_calls;
      c.tokens_in += e.payload.value("tokens_in", std::size_t{0});
      c.tokens_out += e.payload.value("tokens_out", std::size_t{0});
    } else if (e.kind == EventKind::state_changed) {
      const std::string to = e.payload.value("to", std::string());
      if (to == "running" && e.payload.contains("wave"))
        c.waves = std::max(c.waves, e.payload["wave"].get<std::size_t>() + 1);
      if ((to == "resolved" || to == "failed") && e.payload.value("executed", false))
        ++c.tool_executions;
    }
  }
  return c;
}

Value outcome_to_json(const RunOutcome& o) {
  return Value{{"verdict", o.verdict_text},
               {"termination", to_string(o.termination)},
               {"counters", to_json(o.counters)},
               {"graph", o.graph.to_json()}};
}

namespace {

class WorkerPool {
 public:
  explicit WorkerPool(std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) threads_.emplace_back([this] { loop(); });
  }
  ~WorkerPool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void submit(std::function<void()> fn) {
    {
      std::lock_guard lock(mu_);
      tasks_.push_back(std::move(fn));
    }
    cv_.notify_one();
  }

 private:
  void loop() {
    while (true) {
      std::function<void()> fn;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return stop_ || !tasks_.empty(); });
        if (tasks_.empty()) return;
        fn = std::move(tasks_.front());
        tasks_.pop_front();
      }
      fn();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> tasks_;
  std::vector<std::thread> threads_;
  bool stop_ = false;
};

struct GateMsg {
  NodeId node;
  GateDecision decision;
  std::string tool;
};

struct ToolMsg {
  NodeId node;
  bool executed = false;
  std::optional<Value> result;
  std::string error;
};

struct ProviderMsg {
  NodeId node;
  CallKind kind;
  ModelRole role;
  ProviderInput input;
  std::optional<ProviderOutput> output;
  std::string error;
};

struct InterjectMsg {
  std::string message;
  std::shared_ptr<std::promise<NodeId>> reply;
};

using Message = std::variant<GateMsg, ToolMsg, ProviderMsg, InterjectMsg>;

Value provider_payload(CallKind kind, ModelRole role, const ProviderInput& input,
                       const std::optional<ProviderOutput>& output, const std::string& error) {
  Value p{{"call", to_string(kind)},
          {"role", to_string(role)},
          {"tokens_in", input.tokens},
          {"tokens_out", output ? output->tokens : 0},
          {"input", input.text},
          {"output", output ? output->document : Value(nullptr)}};
  if (!error.empty()) p["error"] = error;
  return p;
}

}  // namespace

struct Run::Impl {
  Impl(std::string t, RunConfig c, const ToolRegistry& r, Provider& p)
      : task(std::move(t)), config(std::move(c)), registry(r), provider(p) {
    validate(config);
    if (config.clearance_authority)
      clearance = config.clearance_authority;
    else if (config.clearance)
      clearance = std::make_shared<HttpClearance>(*config.clearance);
  }

  // Fixed for the run.
  const std::string task;
  const RunConfig config;
  const ToolRegistry& registry;
  Provider& provider;
  std::shared_ptr<ClearanceAuthority> clearance;
  EventLog log;
  GateStats stats;

  // Completion queue.
  std::mutex qmu;
  std::condition_variable qcv;
  std::deque<Message> queue;
  bool accepting = true;

  // Published result.
  mutable std::mutex omu;
  std::condition_variable ocv;
  std::optional<RunOutcome> result;
  std::thread scheduler;
  bool started = false;

  // Scheduler-owned state below this line.
  Graph graph;
  WorkerPool* pool = nullptr;
  std::chrono::steady_clock::time_point deadline;
  std::size_t running = 0;
  std::size_t calls_issued = 0;
  bool concluded = false;
  bool stopping = false;
  Termination termination = Termination::concluded;
  std::string verdict_text;
  bool reflection_created = false;
  bool aggregator_created = false;
  std::optional<NodeId> concluding_node;
  std::vector<NodeId> completed_since;
  std::size_t completions = 0;
  std::size_t waves_fired = 0;
  std::map<NodeId, std::size_t> levels;
  std::map<NodeId, std::string> notes;

  void post(Message m) {
    {
      std::lock_guard lock(qmu);
      queue.push_back(std::move(m));
    }
    qcv.notify_one();
  }

  std::optional<Message> pop(bool block) {
    std::unique_lock lock(qmu);
    if (block) {
      if (stopping)
        qcv.wait(lock, [this] { return !queue.empty(); });
      else
        qcv.wait_until(lock, deadline, [this] { return !queue.empty(); });
    }
    if (queue.empty()) return std::nullopt;
    Message m = std::move(queue.front());
    queue.pop_front();
    return m;
  }

  // ---------------------------------------------------------------- helpers

  bool reflect_mode() const { return config.mode.kind == Mode::Kind::reflect; }

  std::vector<NodeId> pending_nodes(bool tools_only) const {
    std::vector<NodeId> out;
    for (const auto& [id, n] : graph.nodes())
      if (n.state == NodeState::pending && (!tools_only || n.kind == NodeKind::tool)) out.push_back(id);
    return out;
  }

  std::vector<NodeId> pending_tool_dependents(NodeId id) const {
    std::vector<NodeId> out;
    for (NodeId d : graph.dependents(id)) {
      const Node& n = graph.node(d);
      if (n.state == NodeState::pending && n.kind == NodeKind::tool) out.push_back(d);
    }
    return out;
  }

  std::size_t level_of(NodeId id) {
    if (auto it = levels.find(id); it != levels.end()) return it->second;
    std::size_t l = 0;
    for (NodeId d : graph.node(id).depends_on)
      l = std::max(l, level_of(d) + (graph.node(d).kind == NodeKind::tool ? 1 : 0));
    levels.emplace(id, l);
    return l;
  }

  void skip_all_pending(std::string_view reason) {
    for (NodeId id : pending_nodes(false))
      if (graph.node(id).state == NodeState::pending)
        graph.transition(id, NodeState::skipped, nullptr, Value{{"reason", std::string(reason)}});
  }

  void stop(Termination why) {
    if (stopping) return;
    stopping = true;
    if (!concluded) termination = why;
    skip_all_pending(to_string(why));
  }

  void conclude(std::string text) {
    concluded = true;
    verdict_text = std::move(text);
    termination = Termination::concluded;
    skip_all_pending("run concluded");
  }

  bool effects_allowed() const { return !concluded && !stopping; }

  /// Validates every reference first so a bad plan adds nothing.
  void graft(const Plan& plan, std::optional<NodeId> anchor) {
    for (const PlanStep& s : plan)
      for (const auto& [name, ref] : s.param_refs)
        if (ref.node && !graph.contains(*ref.node))
          throw Error(Errc::provider_parse_error, "step " + std::to_string(s.step) +
                                                      " references unknown node " +
                                                      std::to_string(ref.node->value));
    std::map<std::uint64_t, NodeId> ids;
    for (const PlanStep& s : plan) {
      NodeSpec spec;
      spec.kind = NodeKind::tool;
      spec.tool_name = s.tool;
      spec.params = s.params;
      for (const auto& [name, ref] : s.param_refs)
        spec.param_refs.emplace(name, ParamRef{ref.step ? ids.at(*ref.step) : *ref.node, ref.field,
                                               ref.template_text});
      for (std::uint64_t d : s.depends_on) spec.depends_on.insert(ids.at(d));
      if (anchor) spec.depends_on.insert(*anchor);
      ids[s.step] = graph.add_node(std::move(spec));
    }
  }

  void inject_reflection() {
    NodeSpec spec;
    spec.kind = NodeKind::reflection;
    spec.depends_on.insert(completed_since.begin(), completed_since.end());
    spec.gates = pending_nodes(true);
    completed_since.clear();
    reflection_created = true;
    graph.add_node(std::move(spec));
  }

  // ------------------------------------------------------------------ plan

  void plan_phase() {
    const ProviderInput input = build_planner_context(task, registry.compiled_index(config.scope), config.planner_preamble);
    ++calls_issued;
    std::optional<ProviderOutput> out;
    std::string error;
    Plan plan;
    try {
      out = provider.call(CallKind::plan, ModelRole::reasoning, input);
      plan = parse_plan(out->document);
    } catch (const std::exception& e) {
      error = e.what();
    }
    log.emit(EventKind::provider_call, std::nullopt,
             provider_payload(CallKind::plan, ModelRole::reasoning, input, out, error));
    if (!error.empty()) return;
    try {
      graft(plan, std::nullopt);
    } catch (const Error&) {
    }
  }

  // ------------------------------------------------------------- scheduling

  void schedule() {
    bool progress = true;
    while (progress && !stopping) {
      progress = false;
      const std::vector<NodeId> ready = graph.ready_nodes();
      for (NodeId id : ready) {
        if (graph.node(id).kind == NodeKind::tool) continue;
        fire_checkpoint(id);
        if (stopping) return;
        progress = true;
      }
      if (concluded) continue;

      std::vector<NodeId> tools;
      for (NodeId id : ready)
        if (graph.node(id).kind == NodeKind::tool && graph.node(id).state == NodeState::pending)
          tools.push_back(id);

      if (reflect_mode()) {
        const std::size_t current = waves_fired == 0 ? 0 : waves_fired - 1;
        for (NodeId id : tools) {
          if (!graph.node(id).spawned_by) continue;
          fire_tool(id, current);
          progress = true;
        }
        if (running > 0) continue;
        if (!completed_since.empty()) {
          inject_reflection();
          progress = true;
          continue;
        }
        bool fired = false;
        for (NodeId id : tools) {
          if (graph.node(id).state != NodeState::pending) continue;
          fire_tool(id, waves_fired);
          fired = true;
        }
        if (fired) {
          ++waves_fired;
          progress = true;
        }
      } else {
        for (NodeId id : tools) {
          if (graph.node(id).state != NodeState::pending) continue;
          fire_tool(id, level_of(id));
          progress = true;
        }
      }
    }
  }

  void fire_tool(NodeId id, std::size_t wave) {
    const Node& n = graph.node(id);
    for (NodeId d : n.depends_on) {
      const Node& dep = graph.node(d);
      if (dep.kind == NodeKind::tool && dep.state != NodeState::resolved) {
        graph.transition(id, NodeState::skipped, nullptr,
                         Value{{"reason", "dependency " + std::to_string(d.value) + " not resolved"}});
        graph.propagate_skip(id);
        return;
      }
    }

    Value annotations{{"wave", wave}};
    Value non_tool = Value::array();
    for (const auto& [name, ref] : n.param_refs)
      if (graph.node(ref.source).kind != NodeKind::tool) non_tool.push_back(ref.source.value);
    if (!non_tool.empty()) annotations["non_tool_ref_sources"] = std::move(non_tool);
    graph.transition(id, NodeState::running, nullptr, annotations);
    ++running;

    const std::string tool = *graph.node(id).tool_name;
    if (!registry.contains(tool) || !config.scope.allows(tool)) {
      finish_tool(ToolMsg{id, false, std::nullopt, std::string(kGenericToolError)});
      return;
    }
    Value params;
    try {
      params = graph.resolve_params(id);
    } catch (const Error& e) {
      finish_tool(ToolMsg{id, false, std::nullopt, e.what()});
      return;
    }

    pool->submit([this, id, tool, params = std::move(params)] {
      GateDecision d = evaluate(tool, params, config.user, registry.impact_profile(tool),
                                config.scope, config.intent, clearance.get(), &stats);
      const bool allow = d.allow;
      post(GateMsg{id, std::move(d), tool});
      if (!allow) {
        post(ToolMsg{id, false, std::nullopt, std::string(kGenericToolError)});
        return;
      }
      try {
        ToolResult r = registry.dispatch(tool, params);
        post(ToolMsg{id, true, std::move(r.value), {}});
      } catch (const Error& e) {
        post(ToolMsg{id, e.code() != Errc::param_validation, std::nullopt, e.what()});
      } catch (const std::exception& e) {
        post(ToolMsg{id, true, std::nullopt, e.what()});
      }
    });
  }

  ModelRole role_for(CallKind kind) const {
    if (kind == CallKind::plan) return ModelRole::reasoning;
    if (kind == CallKind::aggregate && config.aggregator == AggregatorMode::reasoning_model)
      return ModelRole::reasoning;
    return ModelRole::executor;
  }

  std::vector<EvidenceEntry> siblings_of(const Node& failed) const {
    std::vector<EvidenceEntry> out;
    for (const auto& [id, n] : graph.nodes()) {
      if (id == failed.id || n.kind != NodeKind::tool || n.state != NodeState::resolved) continue;
      bool related = failed.depends_on.empty() && n.depends_on.empty();
      for (NodeId d : n.depends_on) related = related || failed.depends_on.contains(d);
      if (related) out.push_back(evidence_entry(n, config.max_entry_tokens));
    }
    return out;
  }

  void fire_checkpoint(NodeId id) {
    if (calls_issued >= config.budget.max_provider_calls) {
      stop(Termination::budget);
      return;
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      stop(Termination::wall_clock);
      return;
    }
    const Node& n = graph.node(id);
    CallKind kind = CallKind::reflect;
    ProviderInput input;
    switch (n.kind) {
      case NodeKind::reflection:
        input = build_reflection_context(task, collect_evidence(graph, config.max_entry_tokens));
        break;
      case NodeKind::interjection:
        input = build_reflection_context(task, collect_evidence(graph, config.max_entry_tokens),
                                         std::string_view(notes.at(id)));
        break;
      case NodeKind::observer:
        kind = CallKind::observe;
        input = build_observer_context(
            task, evidence_entry(graph.node(*n.spawned_by), config.max_entry_tokens));
        break;
      case NodeKind::micro_planner: {
        kind = CallKind::micro_plan;
        const Node& failed = graph.node(*n.spawned_by);
        const auto sib = siblings_of(failed);
        input = build_micro_planner_context(task, failed, sib);
        break;
      }
      case NodeKind::aggregator:
        kind = CallKind::aggregate;
        input = build_aggregator_context(task, collect_evidence(graph, config.max_entry_tokens));
        break;
      case NodeKind::tool:
        return;
    }
    const ModelRole role = role_for(kind);
    graph.transition(id, NodeState::running);
    ++running;
    ++calls_issued;
    pool->submit([this, id, kind, role, input = std::move(input)] {
      ProviderMsg m{id, kind, role, input, std::nullopt, {}};
      try {
        m.output = provider.call(kind, role, input);
      } catch (const std::exception& e) {
        m.error = e.what();
        if (m.error.empty()) m.error = "provider call failed";
      }
      post(std::move(m));
    });
  }

  // -------------------------------------------------------------- completion

  void finish_tool(ToolMsg m) {
    --running;
    const Value annotations{{"executed", m.executed}};
    if (m.result)
      graph.transition(m.node, NodeState::resolved, *m.result, annotations);
    else
      graph.transition(m.node, NodeState::failed, m.error, annotations);
    completed_since.push_back(m.node);
    if (!effects_allowed()) return;

    const Node& n = graph.node(m.node);
    if (n.state == NodeState::failed) {
      handle_failure(m.node);
    } else if (config.mode.kind == Mode::Kind::orchestrator) {
      NodeSpec spec;
      spec.kind = NodeKind::observer;
      spec.depends_on = {m.node};
      spec.spawned_by = m.node;
      graph.add_node(std::move(spec));
    }
    if (config.mode.kind == Mode::Kind::nreflect && ++completions % config.mode.n == 0)
      inject_reflection();
  }

  void handle_failure(NodeId failed) {
    std::size_t lineage = 0;
    for (NodeId cur = failed;;) {
      const Node& n = graph.node(cur);
      if (!n.spawned_by || graph.node(*n.spawned_by).kind != NodeKind::tool) break;
      ++lineage;
      cur = *n.spawned_by;
    }
    if (lineage >= config.budget.max_micro_plans_per_node) {
      graph.propagate_skip(failed);
      return;
    }
    NodeSpec spec;
    spec.kind = NodeKind::micro_planner;
    spec.depends_on = {failed};
    spec.spawned_by = failed;
    spec.gates = pending_tool_dependents(failed);
    graph.add_node(std::move(spec));
  }

  void finish_provider(ProviderMsg m) {
    log.emit(EventKind::provider_call, m.node,
             provider_payload(m.kind, m.role, m.input, m.output, m.error));
    --running;
    const NodeId id = m.node;
    const NodeKind kind = graph.node(id).kind;

    if (!m.output) {
      fail_provider_node(id, m.error);
      return;
    }
    const Value& doc = m.output->document;
    const bool apply = effects_allowed() || kind == NodeKind::aggregator;
    try {
      switch (kind) {
        case NodeKind::reflection:
        case NodeKind::interjection: {
          Verdict v = parse_verdict(doc);
          if (!apply) break;
          if (v.kind == Verdict::Kind::replan) graft(v.steps, id);
          graph.transition(id, NodeState::resolved, to_json(v));
          if (v.kind == Verdict::Kind::conclude) {
            concluding_node = id;
            conclude(v.text);
          }
          return;
        }
        case NodeKind::observer: {
          ObserverAction a = parse_observer_action(doc);
          if (!apply) break;
          apply_observer(id, a);
          return;
        }
        case NodeKind::micro_planner: {
          Replacement r = parse_replacement(doc);
          if (!apply) break;
          apply_replacement(id, r);
          return;
        }
        case NodeKind::aggregator: {
          std::string text = parse_aggregate(doc);
          graph.transition(id, NodeState::resolved, doc);
          verdict_text = std::move(text);
          return;
        }
        case NodeKind::tool:
          return;
      }
    } catch (const Error& e) {
      fail_provider_node(id, e.what());
      return;
    }
    graph.transition(id, NodeState::resolved, doc, Value{{"applied", false}});
  }

  void fail_provider_node(NodeId id, const std::string& error) {
    graph.transition(id, NodeState::failed, error);
    const Node& n = graph.node(id);
    if (n.kind == NodeKind::micro_planner && effects_allowed()) graph.propagate_skip(*n.spawned_by);
  }

  void apply_observer(NodeId id, const ObserverAction& a) {
    switch (a.kind) {
      case ObserverAction::Kind::continue_run:
        graph.transition(id, NodeState::resolved, to_json(a));
        break;
      case ObserverAction::Kind::inject:
        graft(a.steps, id);
        graph.transition(id, NodeState::resolved, to_json(a));
        break;
      case ObserverAction::Kind::cancel: {
        graph.transition(id, NodeState::resolved, to_json(a));
        for (NodeId target : a.cancel) {
          if (!graph.contains(target)) continue;
          const Node& t = graph.node(target);
          if (t.state != NodeState::pending || t.kind != NodeKind::tool) continue;
          graph.transition(target, NodeState::skipped, nullptr,
                           Value{{"reason", "cancelled"}, {"cancelled_by", id.value}});
          graph.propagate_skip(target);
        }
        break;
      }
      case ObserverAction::Kind::trigger_reflection:
        graph.transition(id, NodeState::resolved, to_json(a));
        inject_reflection();
        break;
    }
  }

  void apply_replacement(NodeId id, const Replacement& r) {
    const NodeId failed = *graph.node(id).spawned_by;
    const Node f = graph.node(failed);
    if (r.kind == Replacement::Kind::skip) {
      graph.transition(id, NodeState::resolved, to_json(r));
      graph.propagate_skip(failed);
      return;
    }
    NodeSpec spec;
    spec.kind = NodeKind::tool;
    spec.spawned_by = failed;
    spec.depends_on = f.depends_on;
    spec.depends_on.insert(id);
    spec.retargets = pending_tool_dependents(failed);
    if (r.kind == Replacement::Kind::retry) {
      spec.tool_name = f.tool_name;
      spec.params = r.params;
      spec.param_refs = f.param_refs;
    } else {
      spec.tool_name = r.step.tool;
      spec.params = r.step.params;
      for (const auto& [name, ref] : r.step.param_refs) {
        if (!graph.contains(*ref.node))
          throw Error(Errc::provider_parse_error,
                      "substitute references unknown node " + std::to_string(ref.node->value));
        spec.param_refs.emplace(name, ParamRef{*ref.node, ref.field, ref.template_text});
      }
    }
    graph.add_node(std::move(spec));
    graph.transition(id, NodeState::resolved, to_json(r));
  }

  void handle_interject(InterjectMsg& m) {
    try {
      if (!config.interjection_enabled)
        throw Error(Errc::config_error, "interjection is disabled for this run");
      if (!effects_allowed()) throw Error(Errc::run_not_active, "run is no longer active");
      NodeSpec spec;
      spec.kind = NodeKind::interjection;
      spec.gates = pending_nodes(false);
      Value gated = Value::array();
      for (NodeId g : spec.gates) gated.push_back(g.value);
      const NodeId id = graph.add_node(std::move(spec));
      notes[id] = m.message;
      log.emit(EventKind::interjection_received, id,
               Value{{"message", m.message}, {"gated", std::move(gated)}});
      m.reply->set_value(id);
    } catch (...) {
      m.reply->set_exception(std::current_exception());
    }
  }

  void handle(Message& msg) {
    if (auto* g = std::get_if<GateMsg>(&msg)) {
      Value p{{"tool", g->tool},
              {"allow", g->decision.allow},
              {"stage", to_string(g->decision.stage)},
              {"internal_reason", g->decision.internal_reason},
              {"impact", g->decision.impact ? Value(to_int(*g->decision.impact)) : Value(nullptr)}};
      log.emit(EventKind::gate_decision, g->node, std::move(p));
    } else if (auto* t = std::get_if<ToolMsg>(&msg)) {
      finish_tool(std::move(*t));
    } else if (auto* p = std::get_if<ProviderMsg>(&msg)) {
      finish_provider(std::move(*p));
    } else if (auto* i = std::get_if<InterjectMsg>(&msg)) {
      handle_interject(*i);
    }
  }

  /// Called with nothing running and nothing fireable. Returns true when new
  /// work was created.
  bool idle_step() {
    if (concluded) {
      if (config.aggregator != AggregatorMode::disabled && !aggregator_created) {
        aggregator_created = true;
        NodeSpec spec;
        spec.kind = NodeKind::aggregator;
        if (concluding_node) spec.depends_on = {*concluding_node};
        graph.add_node(std::move(spec));
        return true;
      }
      return false;
    }
    if (!completed_since.empty() || !reflection_created) {
      inject_reflection();
      return true;
    }
    return false;
  }

  void main() {
    WorkerPool workers(config.max_concurrency);
    pool = &workers;
    deadline = std::chrono::steady_clock::now() + config.budget.wall_clock;
    graph.set_sink([this](std::string_view kind, NodeId id, Value payload) {
      log.emit(kind == "node_added" ? EventKind::node_added : EventKind::state_changed, id,
               std::move(payload));
    });

    plan_phase();
    while (true) {
      while (auto m = pop(false)) handle(*m);
      if (!stopping && std::chrono::steady_clock::now() >= deadline) stop(Termination::wall_clock);
      if (!stopping) schedule();
      if (running == 0) {
        if (stopping) break;
        if (!pop_nonempty() && !idle_step()) break;
        continue;
      }
      if (auto m = pop(true)) handle(*m);
    }

    std::deque<Message> leftover;
    {
      std::lock_guard lock(qmu);
      accepting = false;
      leftover.swap(queue);
    }
    for (Message& m : leftover)
      if (auto* i = std::get_if<InterjectMsg>(&m))
        i->reply->set_exception(std::make_exception_ptr(
            Error(Errc::run_not_active, "run is no longer active")));

    log.emit(EventKind::run_completed, std::nullopt,
             Value{{"termination", to_string(termination)}, {"verdict", verdict_text}});
    RunOutcome out;
    out.verdict_text = verdict_text;
    out.graph = graph;
    out.graph.set_sink({});
    out.termination = termination;
    const auto events = log.snapshot();
    out.counters = fold_counters(events);
    pool = nullptr;
    {
      std::lock_guard lock(omu);
      result = std::move(out);
    }
    ocv.notify_all();
  }

  bool pop_nonempty() {
    std::lock_guard lock(qmu);
    return !queue.empty();
  }
};

Run::Run(std::string task, RunConfig config, const ToolRegistry& registry, Provider& provider)
    : impl_(std::make_unique<Impl>(std::move(task), std::move(config), registry, provider)) {}

Run::~Run() {
  if (impl_->scheduler.joinable()) impl_->scheduler.join();
}

void Run::start() {
  if (impl_->started) return;
  impl_->started = true;
  impl_->scheduler = std::thread([this] { impl_->main(); });
}

NodeId Run::interject(std::string message) {
  auto reply = std::make_shared<std::promise<NodeId>>();
  auto fut = reply->get_future();
  {
    std::lock_guard lock(impl_->qmu);
    if (!impl_->accepting) throw Error(Errc::run_not_active, "run is no longer active");
    impl_->queue.push_back(InterjectMsg{std::move(message), reply});
  }
  impl_->qcv.notify_one();
  return fut.get();
}

const RunOutcome& Run::wait() {
  std::unique_lock lock(impl_->omu);
  impl_->ocv.wait(lock, [this] { return impl_->result.has_value(); });
  return *impl_->result;
}

bool Run::done() const {
  std::lock_guard lock(impl_->omu);
  return impl_->result.has_value();
}

std::optional<RunOutcome> Run::outcome() const {
  std::lock_guard lock(impl_->omu);
  return impl_->result;
}

EventLog& Run::events() { return impl_->log; }
const GateStats& Run::gate_stats() const { return impl_->stats; }
const std::string& Run::task() const { return impl_->task; }

RunOutcome run(std::string task, RunConfig config, const ToolRegistry& registry, Provider& provider) {
  Run r(std::move(task), std::move(config), registry, provider);
  r.start();
  return r.wait();
}

}  // namespace execgraph
