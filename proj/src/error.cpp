// SPDX-License-Identifier: Apache-2.0
#include "execgraph/error.hpp"

namespace execgraph {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::unknown_dependency: return "UnknownDependency";
    case Errc::cycle_detected: return "CycleDetected";
    case Errc::missing_tool_name: return "MissingToolName";
    case Errc::illegal_transition: return "IllegalTransition";
    case Errc::missing_field: return "MissingField";
    case Errc::source_not_resolved: return "SourceNotResolved";
    case Errc::unknown_node: return "UnknownNode";
    case Errc::empty_scope_list: return "EmptyScopeList";
    case Errc::script_exhausted: return "ScriptExhausted";
    case Errc::kind_mismatch: return "KindMismatch";
    case Errc::provider_parse_error: return "ProviderParseError";
    case Errc::provider_transport: return "ProviderTransport";
    case Errc::duplicate_name: return "DuplicateName";
    case Errc::unknown_tool: return "UnknownTool";
    case Errc::param_validation: return "ParamValidation";
    case Errc::tool_error: return "ToolError";
    case Errc::run_not_active: return "RunNotActive";
    case Errc::incomplete_log: return "IncompleteLog";
    case Errc::config_error: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace execgraph
