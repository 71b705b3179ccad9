// SPDX-License-Identifier: Apache-2.0
#include "execgraph/tools.hpp"

#include "execgraph/error.hpp"
#include "execgraph/tokens.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>
#include <thread>

namespace execgraph {

std::string_view to_string(ParamType t) noexcept {
  switch (t) {
    case ParamType::string: return "string";
    case ParamType::integer: return "integer";
    case ParamType::number: return "number";
    case ParamType::boolean: return "boolean";
    case ParamType::object: return "object";
    case ParamType::array: return "array";
    case ParamType::any: return "any";
  }
  return "any";
}

namespace {

bool type_matches(ParamType t, const Value& v) {
  switch (t) {
    case ParamType::string: return v.is_string();
    case ParamType::integer: return v.is_number_integer();
    case ParamType::number: return v.is_number();
    case ParamType::boolean: return v.is_boolean();
    case ParamType::object: return v.is_object();
    case ParamType::array: return v.is_array();
    case ParamType::any: return true;
  }
  return false;
}

}  // namespace

void validate_params(const ToolDescriptor& d, const Value& params) {
  if (!params.is_object())
    throw Error(Errc::param_validation, d.name + ": parameters must be an object");
  for (const auto& [name, spec] : d.param_schema) {
    auto it = params.find(name);
    if (it == params.end()) {
      if (spec.required)
        throw Error(Errc::param_validation, d.name + ": missing required parameter '" + name + "'");
      continue;
    }
    if (!type_matches(spec.type, *it))
      throw Error(Errc::param_validation, d.name + ": parameter '" + name + "' must be " +
                                              std::string(to_string(spec.type)));
  }
}

void ToolRegistry::register_tool(ToolDescriptor descriptor, ToolExecutor executor) {
  if (descriptor.name.empty()) throw Error(Errc::config_error, "tool name is empty");
  if (tools_.contains(descriptor.name))
    throw Error(Errc::duplicate_name, "tool '" + descriptor.name + "' already registered");
  if (count_tokens(descriptor.summary) > kMaxSummaryTokens)
    throw Error(Errc::config_error, "tool '" + descriptor.name + "' summary exceeds " +
                                        std::to_string(kMaxSummaryTokens) + " tokens");
  std::string name = descriptor.name;
  tools_.emplace(std::move(name),
                 Entry{std::move(descriptor), std::move(executor), std::make_unique<std::mutex>()});
}

const ToolDescriptor* ToolRegistry::find(std::string_view name) const {
  auto it = tools_.find(name);
  return it == tools_.end() ? nullptr : &it->second.descriptor;
}

std::vector<std::string> ToolRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : tools_) out.push_back(name);
  return out;
}

std::vector<ToolIndexEntry> ToolRegistry::compiled_index(const ScopeSet& scope) const {
  std::vector<ToolIndexEntry> out;
  for (const auto& [name, e] : tools_)
    if (scope.allows(name)) out.push_back({name, e.descriptor.summary});
  return out;
}

Value ToolRegistry::full_schema(std::string_view name) const {
  const ToolDescriptor* d = find(name);
  if (!d) throw Error(Errc::unknown_tool, "unknown tool '" + std::string(name) + "'");
  Value props = Value::object();
  Value required = Value::array();
  for (const auto& [pname, spec] : d->param_schema) {
    props[pname] = Value{{"type", to_string(spec.type)}, {"description", spec.description}};
    if (spec.required) required.push_back(pname);
  }
  return Value{{"type", "function"},
               {"function",
                {{"name", d->name},
                 {"description", d->summary},
                 {"parameters",
                  {{"type", "object"}, {"properties", std::move(props)}, {"required", required}}}}}};
}

ImpactProfile ToolRegistry::impact_profile(std::string_view name) const {
  const ToolDescriptor* d = find(name);
  if (!d) return ImpactProfile{ImpactLevel::control, {}};
  return ImpactProfile{d->static_impact, d->impact_rules};
}

ToolResult ToolRegistry::dispatch(std::string_view name, const Value& params) const {
  auto it = tools_.find(name);
  if (it == tools_.end())
    throw Error(Errc::unknown_tool, "unknown tool '" + std::string(name) + "'");
  const Entry& e = it->second;
  validate_params(e.descriptor, params);

  std::unique_lock<std::mutex> serial;
  if (!e.descriptor.reentrant) serial = std::unique_lock(*e.serial);
  if (e.descriptor.simulated_latency) std::this_thread::sleep_for(*e.descriptor.simulated_latency);

  ToolResult r;
  try {
    r.value = e.executor(params);
  } catch (const Error& err) {
    if (err.code() == Errc::tool_error) throw;
    throw Error(Errc::tool_error, err.what());
  } catch (const std::exception& ex) {
    throw Error(Errc::tool_error, ex.what());
  }
  r.size_tokens = count_tokens(render_value(r.value));
  return r;
}

std::string index_entry_text(const ToolIndexEntry& entry) {
  return entry.name + ": " + entry.summary;
}

std::string synth_text(std::size_t tokens, std::string_view tag) {
  std::string prefix;
  for (char c : tag)
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') prefix.push_back(c);
  if (prefix.empty()) prefix = "w";
  std::string out;
  out.reserve(tokens * (prefix.size() + 4));
  for (std::size_t i = 0; i < tokens; ++i) {
    if (i) out.push_back(' ');
    out += prefix;
    out += std::to_string(i);
  }
  return out;
}

void register_mock_tools(ToolRegistry& registry, MockToolOptions options) {
  registry.register_tool(
      {.name = "echo",
       .summary = "Return the given message unchanged.",
       .param_schema = {{"msg", {ParamType::any, true, "Message to echo back verbatim."}}}},
      [](const Value& p) { return Value{{"echo", p.at("msg")}}; });

  registry.register_tool(
      {.name = "sleep",
       .summary = "Wait for a number of milliseconds.",
       .param_schema = {{"ms", {ParamType::integer, true, "Milliseconds to wait before returning."}}}},
      [](const Value& p) {
        const auto ms = p.at("ms").get<std::int64_t>();
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
        return Value{{"slept_ms", ms}};
      });

  registry.register_tool(
      {.name = "fail",
       .summary = "Always fail with the given message.",
       .param_schema = {{"message", {ParamType::string, true, "Error text reported by the failure."}}}},
      [](const Value& p) -> Value {
        throw Error(Errc::tool_error, p.at("message").get<std::string>());
      });

  auto store = std::make_shared<const Value>(std::move(options.fixtures));
  registry.register_tool(
      {.name = "kv_fetch",
       .summary = "Look up a key in the fixture store.",
       .param_schema = {{"key", {ParamType::string, true, "Key to look up in the store."}}}},
      [store](const Value& p) -> Value {
        const auto key = p.at("key").get<std::string>();
        auto it = store->find(key);
        if (it == store->end()) throw Error(Errc::tool_error, "key '" + key + "' not found");
        return *it;
      });

  registry.register_tool(
      {.name = "synth_result",
       .summary = "Produce a synthetic result of a requested token size.",
       .param_schema = {{"tokens", {ParamType::integer, true, "Exact size of the result in tokens."}},
                        {"tag", {ParamType::string, false, "Word prefix used for the generated text."}}},
       .simulated_latency = options.synth_latency},
      [](const Value& p) -> Value {
        const auto k = p.at("tokens").get<std::int64_t>();
        if (k < 0) throw Error(Errc::tool_error, "tokens must be non-negative");
        return synth_text(static_cast<std::size_t>(k), p.value("tag", std::string("w")));
      });
}

void register_bash_tool(ToolRegistry& registry) {
  ToolDescriptor d{
      .name = "bash",
      .summary = "Run a shell command and return its output.",
      .param_schema = {{"command", {ParamType::string, true, "Command line passed to /bin/sh -c."}}},
      .static_impact = ImpactLevel::operate,
      .impact_rules = {ImpactRule(R"(\brm\b)", ImpactLevel::control),
                       ImpactRule(R"(\bmkfs)", ImpactLevel::control),
                       ImpactRule(R"(\bdd\b)", ImpactLevel::control)},
      .reentrant = true};
  registry.register_tool(std::move(d), [](const Value& p) -> Value {
    const std::string cmd = p.at("command").get<std::string>() + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw Error(Errc::tool_error, "cannot start shell");
    std::string out;
    std::array<char, 4096> buf{};
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
    const int status = ::pclose(pipe);
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (code != 0) throw Error(Errc::tool_error, "exit status " + std::to_string(code));
    return Value{{"stdout", out}, {"exit_status", code}};
  });
}

Value load_fixture_store(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open fixture store '" + path + "'");
  Value doc = Value::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    throw Error(Errc::config_error, "fixture store '" + path + "' must be a JSON object");
  return doc;
}

}  // namespace execgraph
