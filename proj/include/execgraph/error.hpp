// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace execgraph {

enum class Errc {
  // graph
  unknown_dependency,
  cycle_detected,
  missing_tool_name,
  illegal_transition,
  missing_field,
  source_not_resolved,
  unknown_node,
  // gate
  empty_scope_list,
  // reasoning
  script_exhausted,
  kind_mismatch,
  provider_parse_error,
  provider_transport,
  // tools
  duplicate_name,
  unknown_tool,
  param_validation,
  tool_error,
  // kernel / events / config
  run_not_active,
  incomplete_log,
  config_error,
};

std::string_view to_string(Errc code) noexcept;

/// Library-wide exception. `code()` identifies the failure class; `what()`
/// carries the diagnostic.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace execgraph
