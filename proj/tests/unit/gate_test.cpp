// SPDX-License-Identifier: Apache-2.0
#include "execgraph/gate.hpp"
#include "execgraph/service.hpp"

#include "gate_oracle.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <chrono>
#include <random>
#include <thread>

using namespace execgraph;
using namespace execgraph::testing;

TEST(Gate, AgreesWithPredicateOnRandomCases) {
  const auto rep = run_gate_oracle(10000, 1234);
  EXPECT_EQ(rep.cases, 10000u);
  EXPECT_EQ(rep.disagreements, 0u);
  EXPECT_EQ(rep.stage_errors, 0u);
  EXPECT_EQ(rep.clearance_after_denial, 0u);
  EXPECT_EQ(rep.impact_after_scope_denial, 0u);
}

TEST(Gate, DestructiveCommandDeniedAtIntent) {
  const std::vector<ImpactRule> rules{ImpactRule(R"(\brm\b)", ImpactLevel::control)};
  ScopeSet scope{{"bash"}, {{"bash", ImpactLevel::operate}}};
  FixedClearance authority(true);
  GateStats stats;
  const auto d = evaluate("bash", Value{{"command", "rm /tmp/test.txt"}}, "operator",
                          {ImpactLevel::operate, rules}, scope, IntentCeiling(ImpactLevel::operate),
                          &authority, &stats);
  EXPECT_FALSE(d.allow);
  EXPECT_EQ(d.stage, GateStage::intent);
  EXPECT_EQ(d.impact, ImpactLevel::control);
  EXPECT_EQ(authority.calls, 0u);
  EXPECT_EQ(stats.clearance_requests, 0u);
  EXPECT_NE(d.internal_reason.find("2 > min(1, 1)"), std::string::npos);
}

TEST(Gate, ScopeDenialSkipsEverything) {
  FixedClearance authority(true);
  GateStats stats;
  const auto d = evaluate("deploy", Value::object(), "u", {}, ScopeSet{{"bash"}, {}},
                          IntentCeiling(ImpactLevel::control), &authority, &stats);
  EXPECT_EQ(d.stage, GateStage::scope);
  EXPECT_EQ(stats.impact_classifications, 0u);
  EXPECT_EQ(authority.calls, 0u);
}

TEST(Gate, NoClearanceConfiguredPasses) {
  const auto d = evaluate("bash", Value::object(), "u", {ImpactLevel::observe, {}},
                          ScopeSet{{"bash"}, {}}, IntentCeiling(ImpactLevel::observe), nullptr);
  EXPECT_TRUE(d.allow);
  EXPECT_EQ(d.stage, GateStage::passed);
}

TEST(MergeScopes, UnionOfToolsMinOfCaps) {
  std::mt19937_64 rng(9);
  const std::vector<std::string> names{"a", "b", "c", "d"};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<ScopeSet> sets(1 + rng() % 4);
    for (auto& s : sets)
      for (const auto& n : names) {
        if (rng() % 2) s.tools.insert(n);
        if (rng() % 3 == 0) s.caps[n] = static_cast<ImpactLevel>(rng() % 3);
      }
    const ScopeSet merged = merge_scopes(sets);
    for (const auto& n : names) {
      bool any = false;
      int cap = 2;
      for (const auto& s : sets)
        if (s.tools.contains(n)) {
          any = true;
          auto it = s.caps.find(n);
          cap = std::min(cap, it == s.caps.end() ? 2 : to_int(it->second));
        }
      EXPECT_EQ(merged.allows(n), any);
      if (any) EXPECT_EQ(to_int(merged.cap_for(n)), cap);
    }
  }
}

TEST(MergeScopes, EmptyListRejected) {
  try {
    merge_scopes({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_scope_list);
  }
}

TEST(ClassifyImpact, MaxOfMatchingRulesElseStatic) {
  const std::vector<ImpactRule> rules{ImpactRule("rm", ImpactLevel::control),
                                      ImpactRule("write", ImpactLevel::operate)};
  EXPECT_EQ(classify_impact("t", Value{{"c", "write x"}}, rules, ImpactLevel::observe),
            ImpactLevel::operate);
  EXPECT_EQ(classify_impact("t", Value{{"c", "write; rm"}}, rules, ImpactLevel::observe),
            ImpactLevel::control);
  EXPECT_EQ(classify_impact("t", Value{{"c", "ls"}}, rules, ImpactLevel::operate),
            ImpactLevel::operate);
  // A matching rule may lower the level below the static one.
  const std::vector<ImpactRule> lower{ImpactRule("status", ImpactLevel::observe)};
  EXPECT_EQ(classify_impact("t", Value{{"c", "status"}}, lower, ImpactLevel::control),
            ImpactLevel::observe);
}

namespace {

int closed_port() {
  ClearanceStub probe({});
  const int port = probe.start("127.0.0.1", 0);
  probe.stop();
  return port;
}

}  // namespace

TEST(HttpClearance, UnreachableEndpointDenies) {
  const int port = closed_port();
  const auto v = check_clearance({"http://127.0.0.1:" + std::to_string(port) + "/check",
                                  std::chrono::milliseconds(500), ""},
                                 "bash", Value::object(), "u");
  EXPECT_FALSE(v.allow);
}

TEST(HttpClearance, MalformedUrlDenies) {
  EXPECT_FALSE(check_clearance({"not a url", std::chrono::milliseconds(100), ""}, "t", {}, "u").allow);
}

TEST(HttpClearance, SlowAuthorityTimesOutAsDenial) {
  ClearanceStub stub({StubRule{.tool = "slow", .action = StubRule::Action::delay,
                               .delay = std::chrono::milliseconds(3000)}});
  const int port = stub.start("127.0.0.1", 0);
  const auto t0 = std::chrono::steady_clock::now();
  const auto v = check_clearance({"http://127.0.0.1:" + std::to_string(port) + "/check",
                                  std::chrono::milliseconds(500), ""},
                                 "slow", Value::object(), "u");
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  EXPECT_FALSE(v.allow);
  EXPECT_LT(elapsed, std::chrono::milliseconds(2500));
  stub.stop();
}

TEST(HttpClearance, StubRulesDecide) {
  ClearanceStub stub({StubRule{.tool = "navigate",
                               .match = {{"zone", "zone_3"}},
                               .action = StubRule::Action::deny,
                               .reason = "zone_3 outside authorized airspace"}});
  const int port = stub.start("127.0.0.1", 0);
  const ClearanceConfig cfg{"http://127.0.0.1:" + std::to_string(port) + "/check",
                            std::chrono::milliseconds(2000), ""};
  const auto denied = check_clearance(cfg, "navigate", Value{{"zone", "zone_3"}}, "u");
  EXPECT_FALSE(denied.allow);
  EXPECT_EQ(denied.reason, "zone_3 outside authorized airspace");
  EXPECT_TRUE(check_clearance(cfg, "navigate", Value{{"zone", "zone_1"}}, "u").allow);
  EXPECT_EQ(stub.requests(), 2u);
  stub.stop();
}

TEST(HttpClearance, StubWithoutRulesAllows) {
  ClearanceStub stub({});
  const int port = stub.start("127.0.0.1", 0);
  HttpClearance client({"http://127.0.0.1:" + std::to_string(port) + "/check",
                        std::chrono::milliseconds(1000), ""});
  EXPECT_TRUE(client.check("x", Value::object(), "u").allow);
  stub.stop();
}

TEST(HttpClearance, BadStatusOrBodyDenies) {
  httplib::Server server;
  server.Post("/status", [](const httplib::Request&, httplib::Response& res) {
    res.status = 503;
    res.set_content("{\"allow\": true}", "application/json");
  });
  server.Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("allow", "text/plain");
  });
  server.Post("/wrongtype", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"allow\": \"yes\"}", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port);
  for (const char* path : {"/status", "/garbage", "/wrongtype"})
    EXPECT_FALSE(check_clearance({base + path, std::chrono::milliseconds(1000), ""}, "t", {}, "u").allow)
        << path;
  server.stop();
  t.join();
}
