// SPDX-License-Identifier: Apache-2.0
#include "execgraph/gate.hpp"

#include "http_util.hpp"

#include <httplib.h>

namespace execgraph {

HttpClearance::HttpClearance(ClearanceConfig config) : config_(std::move(config)) {}

ClearanceVerdict HttpClearance::check(std::string_view tool, const Value& params,
                                      std::string_view user) {
  return check_clearance(config_, tool, params, user);
}

ClearanceVerdict check_clearance(const ClearanceConfig& config, std::string_view tool,
                                 const Value& params, std::string_view user) {
  detail::Url url;
  try {
    url = detail::split_url(config.endpoint);
  } catch (const Error& e) {
    return {false, e.what()};
  }

  httplib::Client client(url.scheme_host_port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const Value body{{"tool", std::string(tool)}, {"params", params}, {"user", std::string(user)}};
  auto res = client.Post(url.path, body.dump(), "application/json");
  if (!res) return {false, "clearance transport error: " + httplib::to_string(res.error())};
  if (res->status < 200 || res->status >= 300)
    return {false, "clearance status " + std::to_string(res->status)};

  Value reply = Value::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.is_object() || !reply.contains("allow") ||
      !reply["allow"].is_boolean())
    return {false, "clearance reply malformed"};

  ClearanceVerdict v;
  v.allow = reply["allow"].get<bool>();
  if (reply.contains("reason") && reply["reason"].is_string())
    v.reason = reply["reason"].get<std::string>();
  return v;
}

}  // namespace execgraph
