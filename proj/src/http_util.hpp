// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "execgraph/error.hpp"

#include <string>
#include <string_view>

namespace execgraph::detail {

struct Url {
  std::string scheme_host_port;  // what httplib::Client takes, e.g. "http://127.0.0.1:8080"
  std::string path;              // "/" when absent
};

inline Url split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos)
    throw Error(Errc::config_error, "endpoint '" + std::string(url) + "' lacks a scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string_view::npos) return {std::string(url), "/"};
  return {std::string(url.substr(0, path_start)), std::string(url.substr(path_start))};
}

}  // namespace execgraph::detail
