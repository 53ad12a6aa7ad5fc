#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

namespace otw {

inline constexpr const char* kVersion = "0.3.0";

}  // namespace otw
