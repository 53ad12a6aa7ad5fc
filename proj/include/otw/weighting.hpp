#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

/**
 * @file weighting.hpp
 * @brief Token weighting schemes for the weighted reward difference.
 *
 * With m = min(|y_c|, |y_r|):
 *
 *   Dpo         1 everywhere
 *   SimPo       1/|y| per response
 *   SamPo       longer response: m ones at sampled positions, 0 elsewhere
 *   LdDpo       1 on positions [0, m), alpha on the over-length tail
 *   UniformMin  longer response: constant m/|y_longer|
 *   Similarity  m * softmax_i cos(h^i, mean hidden of the other response)
 *   Otpo        marginals of the UOT plan, rescaled by TauMode
 */

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "otw/core.hpp"
#include "otw/ot.hpp"
#include "otw/prng.hpp"

namespace otw {

enum class TauMode {
  kMinLen,           ///< tau = min(|y_c|, |y_r|)
  kMeanLen,          ///< tau = (|y_c| + |y_r|) / 2
  kMaxLen,           ///< tau = max(|y_c|, |y_r|)
  kPerLength,        ///< each side rescaled to its own length
  kNoNormalization,  ///< raw plan marginals
};

enum class PlanSource {
  kSolve,    ///< solve the UOT problem on the hidden-state costs
  /// Constant plan 1/max(|y_c|, |y_r|). Its marginals are all ones on
  /// equal lengths, so Otpo + kNoNormalization reduces to Dpo there (and to
  /// UniformMin otherwise).
  kUniform,
};

namespace scheme {
struct Dpo {};
struct SimPo {};
struct SamPo {
  std::uint64_t seed = 0;
};
struct LdDpo {
  double alpha = 0.5;
};
struct UniformMin {};
struct Similarity {};
struct Otpo {
  UotConfig cfg;
  TauMode tau_mode = TauMode::kMinLen;
  PlanSource plan = PlanSource::kSolve;
};
}  // namespace scheme

using WeightScheme = std::variant<scheme::Dpo, scheme::SimPo, scheme::SamPo, scheme::LdDpo,
                                  scheme::UniformMin, scheme::Similarity, scheme::Otpo>;

inline std::string scheme_name(const WeightScheme& s) {
  static constexpr const char* kNames[] = {"dpo",         "simpo",      "sampo", "lddpo",
                                           "uniform_min", "similarity", "otpo"};
  return kNames[s.index()];
}

inline std::string tau_mode_name(TauMode m) {
  switch (m) {
    case TauMode::kMinLen: return "min";
    case TauMode::kMeanLen: return "mean";
    case TauMode::kMaxLen: return "max";
    case TauMode::kPerLength: return "length";
    case TauMode::kNoNormalization: return "none";
  }
  return "?";
}

inline bool needs_hidden(const WeightScheme& s) {
  if (std::holds_alternative<scheme::Similarity>(s)) return true;
  if (const auto* o = std::get_if<scheme::Otpo>(&s)) return o->plan == PlanSource::kSolve;
  return false;
}

struct TokenWeights {
  std::vector<double> w_chosen;
  std::vector<double> w_rejected;
  /// Scale applied by normalization; for kPerLength / kNoNormalization and
  /// non-OT schemes this is the plan's total mass or the common budget.
  double tau = 0.0;
  WeightScheme scheme;
  /// Otpo only: |plan| before normalization and the solver's converged flag.
  double total_mass = 0.0;
  bool converged = true;
};

/// Rescales plan marginals into token weights.
inline TokenWeights normalize(const TransportPlan& plan, std::size_t len_c, std::size_t len_r,
                              TauMode mode) {
  if (plan.rows() != len_c || plan.cols() != len_r) {
    throw ValidationError("normalize: plan shape does not match response lengths");
  }
  TokenWeights w;
  w.total_mass = plan.total_mass();
  w.converged = plan.converged();
  w.w_chosen = plan.row_marginals();
  w.w_rejected = plan.col_marginals();
  const double mass = plan.total_mass();
  if (mode == TauMode::kNoNormalization) {
    w.tau = mass;
    return w;
  }
  if (!(mass > 0.0)) throw NumericalError("normalize: transport plan has zero total mass");

  if (mode == TauMode::kPerLength) {
    // each side's marginal sums to |G| already; rescale to its own length
    const double sc = static_cast<double>(len_c) / mass;
    const double sr = static_cast<double>(len_r) / mass;
    for (double& x : w.w_chosen) x *= sc;
    for (double& x : w.w_rejected) x *= sr;
    w.tau = mass;
    return w;
  }
  const double lc = static_cast<double>(len_c), lr = static_cast<double>(len_r);
  switch (mode) {
    case TauMode::kMinLen: w.tau = std::min(lc, lr); break;
    case TauMode::kMeanLen: w.tau = 0.5 * (lc + lr); break;
    case TauMode::kMaxLen: w.tau = std::max(lc, lr); break;
    default: break;
  }
  const double s = w.tau / mass;
  for (double& x : w.w_chosen) x *= s;
  for (double& x : w.w_rejected) x *= s;
  return w;
}

namespace detail {

inline std::vector<double> mean_row(const Matrix& h) {
  std::vector<double> mu(h.cols(), 0.0);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    for (std::size_t t = 0; t < h.cols(); ++t) mu[t] += h(i, t);
  }
  for (double& x : mu) x /= static_cast<double>(h.rows());
  return mu;
}

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// m * softmax over tokens of cos(h^i, anchor).
inline std::vector<double> similarity_side(const Matrix& h, const std::vector<double>& anchor,
                                           double budget, const std::string& label) {
  const double an = norm2(anchor);
  if (an == 0.0) {
    throw ValidationError("similarity: mean hidden vector of the response opposite " + label +
                          " is zero");
  }
  std::vector<double> s(h.rows());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    const auto r = h.row(i);
    const double rn = norm2(r);
    if (rn == 0.0) {
      throw ValidationError("similarity: " + label + " token " + std::to_string(i) +
                            " has a zero hidden vector");
    }
    s[i] = std::inner_product(r.begin(), r.end(), anchor.begin(), 0.0) / (rn * an);
  }
  const double mx = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double& x : s) z += (x = std::exp(x - mx));
  for (double& x : s) x *= budget / z;
  return s;
}

}  // namespace detail

inline TokenWeights weights(const PreferencePair& pair, const WeightScheme& scheme) {
  const std::size_t lc = pair.chosen().size(), lr = pair.rejected().size();
  const std::size_t m = std::min(lc, lr);
  const bool chosen_longer = lc > lr;
  if (needs_hidden(scheme) && !pair.has_hidden()) {
    throw ValidationError("pair '" + pair.pair_id() + "': scheme " + scheme_name(scheme) +
                          " requires hidden states");
  }

  TokenWeights w;
  w.scheme = scheme;
  w.w_chosen.assign(lc, 1.0);
  w.w_rejected.assign(lr, 1.0);
  auto& longer = chosen_longer ? w.w_chosen : w.w_rejected;
  const double md = static_cast<double>(m);

  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, scheme::Dpo>) {
          w.tau = md;
        } else if constexpr (std::is_same_v<S, scheme::SimPo>) {
          std::fill(w.w_chosen.begin(), w.w_chosen.end(), 1.0 / static_cast<double>(lc));
          std::fill(w.w_rejected.begin(), w.w_rejected.end(), 1.0 / static_cast<double>(lr));
          w.tau = 1.0;
        } else if constexpr (std::is_same_v<S, scheme::SamPo>) {
          w.tau = md;
          if (lc == lr) return;
          CounterRng rng(s.seed, pair.pair_id());
          std::fill(longer.begin(), longer.end(), 0.0);
          for (std::size_t idx : sample_without_replacement(rng, longer.size(), m)) longer[idx] = 1.0;
        } else if constexpr (std::is_same_v<S, scheme::LdDpo>) {
          if (!(s.alpha >= 0.0 && s.alpha <= 1.0)) throw ValidationError("lddpo: alpha must lie in [0, 1]");
          for (std::size_t i = m; i < longer.size(); ++i) longer[i] = s.alpha;
          w.tau = md;
        } else if constexpr (std::is_same_v<S, scheme::UniformMin>) {
          std::fill(longer.begin(), longer.end(), md / static_cast<double>(longer.size()));
          w.tau = md;
        } else if constexpr (std::is_same_v<S, scheme::Similarity>) {
          const auto& hc = pair.chosen().hidden();
          const auto& hr = pair.rejected().hidden();
          w.w_chosen = detail::similarity_side(hc, detail::mean_row(hr), md, "chosen");
          w.w_rejected = detail::similarity_side(hr, detail::mean_row(hc), md, "rejected");
          w.tau = md;
        } else if constexpr (std::is_same_v<S, scheme::Otpo>) {
          TransportPlan plan;
          if (s.plan == PlanSource::kUniform) {
            plan = TransportPlan(Matrix(lc, lr, 1.0 / static_cast<double>(std::max(lc, lr))), true, 0);
          } else {
            plan = solve_uot(cost_matrix(pair.chosen().hidden(), pair.rejected().hidden()), s.cfg);
          }
          TokenWeights n = normalize(plan, lc, lr, s.tau_mode);
          n.scheme = scheme;
          w = std::move(n);
        }
      },
      scheme);
  return w;
}

inline nlohmann::json weights_to_json(const std::string& pair_id, const TokenWeights& w) {
  return {{"pair_id", pair_id},
          {"scheme", scheme_name(w.scheme)},
          {"tau", w.tau},
          {"w_chosen", w.w_chosen},
          {"w_rejected", w.w_rejected}};
}

}  // namespace otw
