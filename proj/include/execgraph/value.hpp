// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <string>

namespace execgraph {

/// Tree-structured value: maps, lists, text, numbers, booleans, null.
using Value = nlohmann::json;

/// Text rendering of a value. Strings render without quotes, everything else
/// as compact JSON. Used for template substitution and token accounting.
inline std::string render_value(const Value& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace execgraph
