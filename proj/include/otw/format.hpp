#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

#include <charconv>
#include <string>

namespace otw {

/// Shortest decimal text that parses back to exactly `x`.
inline std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace otw
