// SPDX-License-Identifier: Apache-2.0
#include "execgraph/config.hpp"
#include "execgraph/service.hpp"

#include "support.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

using namespace execgraph;
using namespace execgraph::testing;

namespace {

Value policy_doc() {
  return Value{{"scopes", Value::array({{{"tools", {"echo", "sleep", "kv_fetch", "synth_result", "fail"}}}})},
               {"intent", 2}};
}

Value request(Value script, std::string mode = "reflect") {
  return Value{{"task", "check the host"}, {"mode", mode}, {"policy", policy_doc()}, {"script", std::move(script)}};
}

struct Served {
  explicit Served(bool audit = false) : service(ServiceOptions{.audit_enabled = audit}) {
    port = service.start("127.0.0.1", 0);
  }
  ~Served() { service.stop(); }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(10, 0);
    return c;
  }
  Service service;
  int port = 0;
};

std::string post_run(httplib::Client& c, const Value& body) {
  auto res = c.Post("/runs", body.dump(), "application/json");
  EXPECT_TRUE(res);
  EXPECT_EQ(res->status, 200) << res->body;
  return Value::parse(res->body).at("id").get<std::string>();
}

std::vector<Value> read_feed(httplib::Client& c, const std::string& id) {
  std::string body;
  auto res = c.Get("/runs/" + id + "/events", [&](const char* data, std::size_t n) {
    body.append(data, n);
    return true;
  });
  EXPECT_TRUE(res);
  std::vector<Value> lines;
  std::size_t pos = 0;
  while (pos < body.size()) {
    const std::size_t nl = body.find('\n', pos);
    lines.push_back(Value::parse(body.substr(pos, nl - pos)));
    pos = nl + 1;
  }
  return lines;
}

}  // namespace

TEST(Service, RunStreamsEventsInSeqOrder) {
  Served s;
  auto c = s.client();
  const std::string id = post_run(c, request(Value::array({
      {{"kind", "plan"}, {"output", Value::array({step(0, "echo", {{"msg", "hi"}})})}},
      {{"kind", "reflect"}, {"output", {{"kind", "conclude"}, {"text", "ok"}}}},
  })));
  const auto feed = read_feed(c, id);
  ASSERT_FALSE(feed.empty());
  for (std::size_t i = 0; i < feed.size(); ++i) EXPECT_EQ(feed[i].at("seq"), i);
  EXPECT_EQ(feed.back().at("kind"), "run_completed");
  bool saw_gate = false;
  for (const auto& e : feed)
    if (e.at("kind") == "gate_decision") {
      saw_gate = true;
      EXPECT_FALSE(e.at("payload").contains("internal_reason"));
      EXPECT_FALSE(e.at("payload").contains("stage"));
    }
  EXPECT_TRUE(saw_gate);

  auto out = c.Get("/runs/" + id + "/outcome");
  ASSERT_TRUE(out);
  EXPECT_EQ(out->status, 200);
  EXPECT_EQ(Value::parse(out->body).at("verdict"), "ok");

  // A second reader attaching after completion sees the same stream.
  const auto again = read_feed(c, id);
  EXPECT_EQ(again, feed);
}

TEST(Service, InterjectLifecycle) {
  Served s;
  auto c = s.client();
  const std::string id = post_run(
      c, request(Value::array({
             {{"kind", "plan"}, {"output", Value::array({step(0, "sleep", {{"ms", 400}}), step(1, "echo", {{"msg", 1}}, {0})})}},
             {{"kind", "reflect"}, {"output", {{"kind", "conclude"}, {"text", "stopped"}}}},
         })));
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  auto pending = c.Get("/runs/" + id + "/outcome");
  EXPECT_EQ(pending->status, 409);
  auto res = c.Post("/runs/" + id + "/interject", Value{{"message", "stop and summarize"}}.dump(),
                    "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200) << res->body;
  EXPECT_TRUE(Value::parse(res->body).contains("node_id"));
  read_feed(c, id);
  auto late = c.Post("/runs/" + id + "/interject", Value{{"message", "again"}}.dump(), "application/json");
  EXPECT_EQ(late->status, 409);
  auto unknown = c.Post("/runs/run-999/interject", Value{{"message", "x"}}.dump(), "application/json");
  EXPECT_EQ(unknown->status, 404);
  auto bad = c.Post("/runs/" + id + "/interject", "{}", "application/json");
  EXPECT_EQ(bad->status, 400);
}

TEST(Service, InterjectDisabledIsForbidden) {
  Served s;
  auto c = s.client();
  Value body = request(Value::array({
      {{"kind", "plan"}, {"output", Value::array({step(0, "sleep", {{"ms", 300}})})}},
      {{"kind", "reflect"}, {"output", {{"kind", "conclude"}, {"text", "x"}}}},
  }));
  body["interjection"] = false;
  const std::string id = post_run(c, body);
  auto res = c.Post("/runs/" + id + "/interject", Value{{"message", "x"}}.dump(), "application/json");
  EXPECT_EQ(res->status, 403);
  read_feed(c, id);
}

TEST(Service, AuditEndpointBehindFlag) {
  const Value script = Value::array({
      {{"kind", "plan"}, {"output", Value::array({step(0, "echo", {{"msg", 1}})})}},
      {{"kind", "reflect"}, {"output", {{"kind", "conclude"}, {"text", "x"}}}},
  });
  {
    Served s(false);
    auto c = s.client();
    const std::string id = post_run(c, request(script));
    read_feed(c, id);
    EXPECT_EQ(c.Get("/runs/" + id + "/audit")->status, 404);
  }
  {
    Served s(true);
    auto c = s.client();
    const std::string id = post_run(c, request(script));
    read_feed(c, id);
    auto res = c.Get("/runs/" + id + "/audit");
    ASSERT_EQ(res->status, 200);
    const Value rows = Value::parse(res->body);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].at("payload").at("stage"), "passed");
  }
}

TEST(Service, BadRequestsRejected) {
  Served s;
  auto c = s.client();
  EXPECT_EQ(c.Post("/runs", "nope", "application/json")->status, 400);
  auto res = c.Post("/runs", Value{{"task", "x"}}.dump(), "application/json");
  EXPECT_EQ(res->status, 400);
  EXPECT_NE(res->body.find("policy"), std::string::npos);
  EXPECT_EQ(c.Get("/runs/run-42/events")->status, 404);
  EXPECT_EQ(c.Get("/runs/run-42/outcome")->status, 404);
}

TEST(Config, PolicyErrorsNameTheKey) {
  auto message = [](const Value& doc) {
    try {
      parse_policy(doc);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::config_error);
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message(Value{{"intent", 1}}).find("scopes"), std::string::npos);
  EXPECT_NE(message(Value{{"scopes", Value::array()}, {"intent", 1}}).find("scopes"), std::string::npos);
  EXPECT_NE(message(Value{{"scopes", Value::array({{{"tools", {"bash"}}, {"caps", {{"bash", 5}}}}})}, {"intent", 1}})
                .find("scopes[0].caps.bash"),
            std::string::npos);
  EXPECT_NE(message(Value{{"scopes", Value::array({{{"tools", {"bash"}}}})}, {"intent", 7}}).find("intent"),
            std::string::npos);
  EXPECT_NE(message(Value{{"scopes", Value::array({{{"tools", {"bash"}}}})},
                          {"intent", 1},
                          {"clearance", {{"timeout_ms", 5}}}})
                .find("clearance.endpoint"),
            std::string::npos);
}

TEST(Config, PolicyMergesScopes) {
  const Policy p = parse_policy(Value{
      {"scopes", Value::array({{{"tools", {"a", "b"}}, {"caps", {{"a", 1}}}}, {{"tools", {"a"}}, {"caps", {{"a", 0}}}}})},
      {"intent", 1},
      {"clearance", {{"endpoint", "http://127.0.0.1:9/c"}, {"timeout_ms", 2000}}}});
  EXPECT_EQ(p.scope.tools, (std::set<std::string>{"a", "b"}));
  EXPECT_EQ(p.scope.cap_for("a"), ImpactLevel::observe);
  EXPECT_EQ(p.intent.level(), ImpactLevel::operate);
  ASSERT_TRUE(p.clearance);
  EXPECT_EQ(p.clearance->timeout, std::chrono::milliseconds(2000));
}

TEST(Config, RunRequestFields) {
  Value body = request(Value::array(), "nreflect=3");
  body["budget"] = {{"max_provider_calls", 9}};
  body["aggregator"] = "executor_model";
  const RunRequest r = parse_run_request(body);
  EXPECT_EQ(r.config.mode, Mode::nreflect(3));
  EXPECT_EQ(r.config.budget.max_provider_calls, 9u);
  EXPECT_EQ(r.config.aggregator, AggregatorMode::executor_model);
  ASSERT_TRUE(r.script);
  body["budget"] = {{"max_provider_calls", "many"}};
  EXPECT_THROW(parse_run_request(body), Error);
}

#ifdef EXECGRAPH_CLI
namespace {

int run_cli(const std::string& args) {
  const int status = std::system((std::string(EXECGRAPH_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  const auto dir = std::filesystem::temp_directory_path() / "execgraph_cli_test";
  std::filesystem::create_directories(dir);
  const auto write = [&](const std::string& name, const Value& v) {
    std::ofstream(dir / name) << v.dump();
    return (dir / name).string();
  };
  const std::string policy = write("policy.json", policy_doc());
  const std::string ok = write("ok.json", Value::array({
                                              {{"kind", "plan"}, {"output", Value::array({step(0, "echo", {{"msg", 1}})})}},
                                              {{"kind", "reflect"}, {"output", {{"kind", "conclude"}, {"text", "x"}}}},
                                          }));
  const std::string out = (dir / "out").string();
  EXPECT_EQ(run_cli("run --task t --policy " + policy + " --script " + ok + " --out " + out), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "events.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "outcome.json"));
  EXPECT_EQ(run_cli("run --task t --policy " + policy + " --script " + ok + " --max-calls 1 --out " + out), 2);
  const std::string bad = write("bad.json", Value{{"scopes", Value::array()}, {"intent", 1}});
  EXPECT_EQ(run_cli("run --task t --policy " + bad + " --script " + ok + " --out " + out), 1);
  EXPECT_EQ(run_cli("run --task t --policy " + policy + " --out " + out), 1);
}
#endif
