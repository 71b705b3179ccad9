// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>

namespace execgraph {

/// Approximate tokenizer: each maximal run of word characters (ASCII
/// alphanumerics, '_', and any byte >= 0x80) is one token, each other
/// non-whitespace character is one token. Whitespace separates and is free.
std::size_t count_tokens(std::string_view text) noexcept;

}  // namespace execgraph
