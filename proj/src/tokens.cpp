// SPDX-License-Identifier: Apache-2.0
#include "execgraph/tokens.hpp"

namespace execgraph {

namespace {

bool is_word(unsigned char c) noexcept {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         c == '_' || c >= 0x80;
}

bool is_space(unsigned char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::size_t count_tokens(std::string_view text) noexcept {
  std::size_t count = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (is_word(c)) {
      if (!in_word) ++count;
      in_word = true;
    } else {
      in_word = false;
      if (!is_space(c)) ++count;
    }
  }
  return count;
}

}  // namespace execgraph
