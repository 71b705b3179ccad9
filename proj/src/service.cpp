// SPDX-License-Identifier: Apache-2.0
#include "execgraph/service.hpp"

#include "execgraph/error.hpp"

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <map>
#include <mutex>
#include <regex>
#include <thread>

namespace execgraph {

namespace {

void reply_json(httplib::Response& res, int status, const Value& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  reply_json(res, status, Value{{"error", message}});
}

int bind_server(httplib::Server& server, const std::string& host, int port) {
  if (port == 0) {
    const int bound = server.bind_to_any_port(host);
    if (bound <= 0) throw Error(Errc::config_error, "cannot bind " + host);
    return bound;
  }
  if (!server.bind_to_port(host, port))
    throw Error(Errc::config_error, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

}  // namespace

// ---------------------------------------------------------------------------
// Run service
// ---------------------------------------------------------------------------

struct Service::Impl {
  explicit Impl(ServiceOptions o) : options(std::move(o)) {
    register_mock_tools(registry, options.tools);
    if (options.enable_bash) register_bash_tool(registry);
    routes();
  }

  struct Entry {
    std::unique_ptr<Provider> provider;
    std::unique_ptr<Run> run;
  };

  ServiceOptions options;
  ToolRegistry registry;
  httplib::Server server;
  std::thread thread;
  std::mutex mu;
  std::map<std::string, std::shared_ptr<Entry>> runs;
  std::uint64_t next_id = 1;

  std::shared_ptr<Entry> find(const std::string& id) {
    std::lock_guard lock(mu);
    auto it = runs.find(id);
    return it == runs.end() ? nullptr : it->second;
  }

  std::string create(RunRequest req) {
    auto entry = std::make_shared<Entry>();
    if (req.script) {
      entry->provider = std::make_unique<ScriptedProvider>(std::move(*req.script));
    } else {
      if (options.remote.empty())
        throw Error(Errc::config_error, "script: required when no remote provider is configured");
      entry->provider = std::make_unique<RemoteProvider>(options.remote);
    }
    entry->run = std::make_unique<Run>(std::move(req.task), std::move(req.config), registry,
                                       *entry->provider);
    std::string id;
    {
      std::lock_guard lock(mu);
      id = "run-" + std::to_string(next_id++);
      runs.emplace(id, entry);
    }
    entry->run->start();
    return id;
  }

  void routes() {
    server.Post("/runs", [this](const httplib::Request& req, httplib::Response& res) {
      const Value body = Value::parse(req.body, nullptr, false);
      if (body.is_discarded()) return reply_error(res, 400, "body is not JSON");
      try {
        const std::string id = create(parse_run_request(body));
        reply_json(res, 200, Value{{"id", id}});
      } catch (const Error& e) {
        reply_error(res, 400, e.what());
      }
    });

    server.Get(R"(/runs/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      auto entry = find(req.matches[1]);
      if (!entry) return reply_error(res, 404, "unknown run");
      auto next = std::make_shared<std::uint64_t>(0);
      res.set_chunked_content_provider(
          "application/x-ndjson", [entry, next](std::size_t, httplib::DataSink& sink) {
            EventLog& log = entry->run->events();
            log.wait_for(*next, std::chrono::milliseconds(200));
            const bool completed = log.completed();
            for (const Event& e : log.since(*next)) {
              const std::string line = event_to_line(redact_for_feed(e)) + "\n";
              if (!sink.write(line.data(), line.size())) return false;
              *next = e.seq + 1;
            }
            if (completed && *next >= log.size()) sink.done();
            return true;
          });
    });

    server.Post(R"(/runs/([^/]+)/interject)", [this](const httplib::Request& req, httplib::Response& res) {
      auto entry = find(req.matches[1]);
      if (!entry) return reply_error(res, 404, "unknown run");
      const Value body = Value::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("message") ||
          !body["message"].is_string())
        return reply_error(res, 400, "body must be {\"message\": string}");
      try {
        const NodeId id = entry->run->interject(body["message"].get<std::string>());
        reply_json(res, 200, Value{{"node_id", id.value}});
      } catch (const Error& e) {
        reply_error(res, e.code() == Errc::run_not_active ? 409 : 403, e.what());
      }
    });

    server.Get(R"(/runs/([^/]+)/outcome)", [this](const httplib::Request& req, httplib::Response& res) {
      auto entry = find(req.matches[1]);
      if (!entry) return reply_error(res, 404, "unknown run");
      auto outcome = entry->run->outcome();
      if (!outcome) return reply_error(res, 409, "run still active");
      reply_json(res, 200, outcome_to_json(*outcome));
    });

    server.Get(R"(/runs/([^/]+)/audit)", [this](const httplib::Request& req, httplib::Response& res) {
      if (!options.audit_enabled) return reply_error(res, 404, "audit endpoint disabled");
      auto entry = find(req.matches[1]);
      if (!entry) return reply_error(res, 404, "unknown run");
      Value rows = Value::array();
      for (const Event& e : entry->run->events().snapshot())
        if (e.kind == EventKind::gate_decision) rows.push_back(event_to_json(e));
      reply_json(res, 200, rows);
    });
  }

  ~Impl() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}
Service::~Service() = default;

int Service::start(const std::string& host, int port) {
  const int bound = bind_server(impl_->server, host, port);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void Service::listen(const std::string& host, int port) {
  bind_server(impl_->server, host, port);
  impl_->server.listen_after_bind();
}

void Service::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string Service::create_run(RunRequest request) { return impl_->create(std::move(request)); }

// ---------------------------------------------------------------------------
// Clearance stub
// ---------------------------------------------------------------------------

std::vector<StubRule> parse_stub_rules(const Value& doc) {
  const Value* list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("rules")) throw Error(Errc::config_error, "rules: is required");
    list = &doc["rules"];
  }
  if (!list->is_array()) throw Error(Errc::config_error, "rules: must be a list");
  std::vector<StubRule> out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const Value& r = (*list)[i];
    const std::string key = "rules[" + std::to_string(i) + "]";
    if (!r.is_object()) throw Error(Errc::config_error, key + ": must be an object");
    StubRule rule;
    rule.tool = r.value("tool", std::string());
    if (r.contains("match")) {
      if (!r["match"].is_object()) throw Error(Errc::config_error, key + ".match: must be an object");
      rule.match = r["match"];
    }
    rule.pattern = r.value("pattern", std::string());
    if (!rule.pattern.empty()) {
      try {
        std::regex check(rule.pattern);
      } catch (const std::regex_error&) {
        throw Error(Errc::config_error, key + ".pattern: invalid regex");
      }
    }
    const std::string action = r.value("action", std::string("allow"));
    if (action == "allow")
      rule.action = StubRule::Action::allow;
    else if (action == "deny")
      rule.action = StubRule::Action::deny;
    else if (action == "delay")
      rule.action = StubRule::Action::delay;
    else
      throw Error(Errc::config_error, key + ".action: must be allow, deny or delay");
    rule.reason = r.value("reason", std::string());
    if (r.contains("delay_ms")) {
      if (!r["delay_ms"].is_number_integer() || r["delay_ms"].get<std::int64_t>() < 0)
        throw Error(Errc::config_error, key + ".delay_ms: must be a non-negative integer");
      rule.delay = std::chrono::milliseconds(r["delay_ms"].get<std::int64_t>());
    }
    rule.then_allow = r.value("then", std::string("allow")) != "deny";
    out.push_back(std::move(rule));
  }
  return out;
}

struct ClearanceStub::Impl {
  explicit Impl(std::vector<StubRule> r) : rules(std::move(r)) {
    for (const auto& rule : rules)
      patterns.push_back(rule.pattern.empty() ? std::nullopt : std::optional<std::regex>(rule.pattern));
    server.Post(R"(.*)", [this](const httplib::Request& req, httplib::Response& res) {
      ++request_count;
      const Value body = Value::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("tool") ||
          !body["tool"].is_string())
        return reply_error(res, 400, "malformed clearance request");
      const Value params = body.value("params", Value::object());
      const StubRule* rule = match(body["tool"].get<std::string>(), params);
      bool allow = true;
      std::string reason;
      if (rule) {
        reason = rule->reason;
        if (rule->action == StubRule::Action::deny) {
          allow = false;
        } else if (rule->action == StubRule::Action::delay) {
          std::unique_lock lock(mu);
          cv.wait_for(lock, rule->delay, [this] { return stopping; });
          allow = rule->then_allow;
        }
      }
      Value reply{{"allow", allow}};
      if (!reason.empty()) reply["reason"] = reason;
      reply_json(res, 200, reply);
    });
  }

  const StubRule* match(const std::string& tool, const Value& params) const {
    const std::string text = params.dump();
    for (std::size_t i = 0; i < rules.size(); ++i) {
      const StubRule& r = rules[i];
      if (!r.tool.empty() && r.tool != tool) continue;
      bool ok = true;
      for (const auto& [k, v] : r.match.items())
        if (!params.is_object() || !params.contains(k) || params[k] != v) ok = false;
      if (ok && patterns[i] && !std::regex_search(text, *patterns[i])) ok = false;
      if (ok) return &r;
    }
    return nullptr;
  }

  void halt() {
    {
      std::lock_guard lock(mu);
      stopping = true;
    }
    cv.notify_all();
    server.stop();
    if (thread.joinable()) thread.join();
  }

  ~Impl() { halt(); }

  std::vector<StubRule> rules;
  std::vector<std::optional<std::regex>> patterns;
  httplib::Server server;
  std::thread thread;
  std::mutex mu;
  std::condition_variable cv;
  bool stopping = false;
  std::atomic<std::size_t> request_count{0};
};

ClearanceStub::ClearanceStub(std::vector<StubRule> rules)
    : impl_(std::make_unique<Impl>(std::move(rules))) {}
ClearanceStub::~ClearanceStub() = default;

int ClearanceStub::start(const std::string& host, int port) {
  const int bound = bind_server(impl_->server, host, port);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ClearanceStub::listen(const std::string& host, int port) {
  bind_server(impl_->server, host, port);
  impl_->server.listen_after_bind();
}

void ClearanceStub::stop() { impl_->halt(); }

const StubRule* ClearanceStub::match(const std::string& tool, const Value& params) const {
  return impl_->match(tool, params);
}

std::size_t ClearanceStub::requests() const { return impl_->request_count.load(); }

}  // namespace execgraph
