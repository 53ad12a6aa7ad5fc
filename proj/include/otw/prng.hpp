#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

// Counter-based generator used for SamPO index sampling ("otw-sampo-v1").
// The exact algorithm is part of the file-format contract (docs/formats.md)
// so index sets can be reproduced bit-exactly in other languages.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string_view>
#include <vector>

namespace otw {

inline constexpr std::string_view kSampoRngName = "otw-sampo-v1";

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// FNV-1a, 64-bit.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::string_view stream)
      : key_(detail::mix64(seed + detail::kGolden) ^ detail::fnv1a64(stream)) {}

  /// word_k = mix64(key + (k + 1) * golden), k = 0, 1, 2, ...
  std::uint64_t next() noexcept { return detail::mix64(key_ + (++counter_) * detail::kGolden); }

  /// Uniform integer in [0, n) by rejection; n must be > 0.
  std::uint64_t bounded(std::uint64_t n) noexcept {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t w = next();
      if (w >= threshold) return w % n;
    }
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// m distinct indices from [0, n), ascending, via a partial Fisher-Yates
/// shuffle driven by `rng`.
inline std::vector<std::size_t> sample_without_replacement(CounterRng& rng, std::size_t n, std::size_t m) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < m && i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.bounded(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(std::min(m, n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace otw
