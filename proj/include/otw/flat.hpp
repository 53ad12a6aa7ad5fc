#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

// Flat-buffer entry points for foreign-language bindings. Hidden states
// arrive as contiguous row-major buffers; 32-bit inputs are upcast once at
// the boundary. Numerical failure is reported through `converged = false`
// instead of throwing; shape errors throw ValidationError naming the field.

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "otw/parallel.hpp"
#include "otw/weighting.hpp"

namespace otw {

struct FlatPairView {
  std::variant<std::span<const double>, std::span<const float>> hidden_c;
  std::variant<std::span<const double>, std::span<const float>> hidden_r;
  std::size_t len_c = 0;
  std::size_t len_r = 0;
  std::size_t dim = 0;
  UotConfig cfg;
  TauMode tau_mode = TauMode::kMinLen;
};

struct FlatWeights {
  std::vector<double> w_chosen;
  std::vector<double> w_rejected;
  double tau = 0.0;
  bool converged = false;
};

namespace detail {

inline Matrix flat_to_matrix(const std::variant<std::span<const double>, std::span<const float>>& buf,
                             std::size_t rows, std::size_t dim, const char* field) {
  const std::size_t have = std::visit([](auto s) { return s.size(); }, buf);
  if (rows == 0 || dim == 0) throw ValidationError(std::string(field) + ": shape must be nonzero");
  if (have != rows * dim) {
    throw ValidationError(std::string(field) + ": buffer has " + std::to_string(have) + " values, expected " +
                          std::to_string(rows * dim));
  }
  std::vector<double> data(have);
  std::visit([&](auto s) { std::copy(s.begin(), s.end(), data.begin()); }, buf);
  return Matrix(rows, dim, std::move(data));
}

}  // namespace detail

inline FlatWeights compute_weights(const FlatPairView& view) {
  Matrix hc = detail::flat_to_matrix(view.hidden_c, view.len_c, view.dim, "hidden_c");
  Matrix hr = detail::flat_to_matrix(view.hidden_r, view.len_r, view.dim, "hidden_r");
  view.cfg.validate();
  FlatWeights out;
  try {
    TransportPlan plan = solve_uot(cost_matrix(hc, hr), view.cfg);
    TokenWeights w = normalize(plan, view.len_c, view.len_r, view.tau_mode);
    out.w_chosen = std::move(w.w_chosen);
    out.w_rejected = std::move(w.w_rejected);
    out.tau = w.tau;
    out.converged = plan.converged();
  } catch (const NumericalError&) {
    out.w_chosen.assign(view.len_c, 0.0);
    out.w_rejected.assign(view.len_r, 0.0);
    out.converged = false;
  }
  return out;
}

/// Order-preserving; result i equals compute_weights(views[i]). A shape
/// error is rethrown prefixed with the index of the first failing view.
inline std::vector<FlatWeights> compute_weights_batch(std::span<const FlatPairView> views, unsigned threads) {
  std::vector<FlatWeights> out(views.size());
  std::vector<std::string> errors(views.size());
  parallel_for(views.size(), threads, [&](std::size_t i) {
    try {
      out[i] = compute_weights(views[i]);
    } catch (const ValidationError& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (!errors[i].empty()) throw ValidationError("view " + std::to_string(i) + ": " + errors[i]);
  }
  return out;
}

}  // namespace otw
