// SPDX-License-Identifier: Apache-2.0
#include "execgraph/reasoning.hpp"

#include "execgraph/error.hpp"
#include "execgraph/tokens.hpp"
#include "http_util.hpp"

#include <httplib.h>

#include <cstdlib>

namespace execgraph {

RemoteEndpointConfig parse_remote_config(const Value& doc) {
  if (!doc.is_object()) throw Error(Errc::config_error, "remote config must be an object");
  RemoteEndpointConfig c;
  if (!doc.contains("endpoint") || !doc["endpoint"].is_string())
    throw Error(Errc::config_error, "remote config: 'endpoint' must be a string");
  c.endpoint = doc["endpoint"].get<std::string>();
  detail::split_url(c.endpoint);
  if (!doc.contains("model") || !doc["model"].is_string())
    throw Error(Errc::config_error, "remote config: 'model' must be a string");
  c.model = doc["model"].get<std::string>();
  if (doc.contains("role")) {
    if (!doc["role"].is_string()) throw Error(Errc::config_error, "remote config: 'role' must be a string");
    c.role = model_role_from_string(doc["role"].get<std::string>());
  }
  if (doc.contains("api_key_env")) {
    if (!doc["api_key_env"].is_string())
      throw Error(Errc::config_error, "remote config: 'api_key_env' must be a string");
    c.api_key_env = doc["api_key_env"].get<std::string>();
  }
  if (doc.contains("timeout_ms")) {
    if (!doc["timeout_ms"].is_number_integer() || doc["timeout_ms"].get<std::int64_t>() <= 0)
      throw Error(Errc::config_error, "remote config: 'timeout_ms' must be a positive integer");
    c.timeout = std::chrono::milliseconds(doc["timeout_ms"].get<std::int64_t>());
  }
  return c;
}

RemoteProvider::RemoteProvider(std::vector<RemoteEndpointConfig> endpoints)
    : endpoints_(std::move(endpoints)) {
  if (endpoints_.empty()) throw Error(Errc::config_error, "no remote endpoints configured");
}

const RemoteEndpointConfig& RemoteProvider::endpoint_for(ModelRole role) const {
  for (const auto& e : endpoints_)
    if (e.role == role) return e;
  return endpoints_.front();
}

ProviderOutput RemoteProvider::call(CallKind kind, ModelRole role, const ProviderInput& input) {
  const RemoteEndpointConfig& cfg = endpoint_for(role);
  const detail::Url url = detail::split_url(cfg.endpoint);

  httplib::Client client(url.scheme_host_port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!cfg.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg.api_key_env.c_str()))
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const Value body{
      {"model", cfg.model},
      {"messages",
       Value::array({Value{{"role", "system"}, {"content", std::string(output_instructions(kind))}},
                     Value{{"role", "user"}, {"content", input.text}}})}};
  auto res = client.Post(url.path, headers, body.dump(), "application/json");
  if (!res)
    throw Error(Errc::provider_transport, "provider transport error: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw Error(Errc::provider_transport, "provider status " + std::to_string(res->status));

  const Value reply = Value::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.is_object())
    throw Error(Errc::provider_parse_error, "provider reply is not a JSON object");
  const Value* content = nullptr;
  if (auto c = reply.find("choices"); c != reply.end() && c->is_array() && !c->empty()) {
    const Value& first = (*c)[0];
    if (auto m = first.find("message"); first.is_object() && m != first.end() && m->is_object())
      if (auto t = m->find("content"); t != m->end() && t->is_string()) content = &*t;
  }
  if (!content) throw Error(Errc::provider_parse_error, "provider reply lacks choices[0].message.content");

  ProviderOutput out;
  out.raw = content->get<std::string>();
  out.document = extract_document(out.raw);
  out.tokens = count_tokens(out.raw);
  return out;
}

}  // namespace execgraph
