#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

// eps1/eps2 sensitivity statistics over a corpus.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "otw/loss.hpp"
#include "otw/parallel.hpp"
#include "otw/weighting.hpp"

namespace otw {

/// Population variance of a pair's normalized weights, both sides pooled.
inline double weight_variance(const TokenWeights& w) {
  double n = 0.0, mu = 0.0, var = 0.0;
  for (const auto* v : {&w.w_chosen, &w.w_rejected}) {
    for (double x : *v) {
      mu += x;
      n += 1.0;
    }
  }
  mu /= n;
  for (const auto* v : {&w.w_chosen, &w.w_rejected}) {
    for (double x : *v) var += (x - mu) * (x - mu);
  }
  return var / n;
}

/// Mean |w - 1| over all tokens, i.e. the distance from uniform DPO weights.
inline double weight_abs_diff(const TokenWeights& w) {
  double s = 0.0, n = 0.0;
  for (const auto* v : {&w.w_chosen, &w.w_rejected}) {
    for (double x : *v) {
      s += std::abs(x - 1.0);
      n += 1.0;
    }
  }
  return s / n;
}

struct SweepPoint {
  double eps1 = 0.0;
  double eps2 = 0.0;
  double weight_variance = 0.0;
  double weight_abs_diff = 0.0;
  double total_mass = 0.0;
  double tau = 0.0;
  double margin_mean = 0.0;
  double margin_std = 0.0;
  double converged_fraction = 0.0;
};

inline constexpr const char* kSweepMetrics[] = {"weight_variance", "weight_abs_diff",   "total_mass",
                                                "tau",             "reward_margin_mean", "reward_margin_std",
                                                "converged_fraction"};

inline std::vector<std::pair<std::string, double>> sweep_metrics(const SweepPoint& p) {
  return {{"weight_variance", p.weight_variance}, {"weight_abs_diff", p.weight_abs_diff},
          {"total_mass", p.total_mass},           {"tau", p.tau},
          {"reward_margin_mean", p.margin_mean},  {"reward_margin_std", p.margin_std},
          {"converged_fraction", p.converged_fraction}};
}

/// Statistics at one (eps1, eps2) grid point. `base` supplies tau mode,
/// entropy form and solver limits; margins are beta * delta_r.
inline SweepPoint sweep_point(std::span<const PreferencePair> pairs, double eps1, double eps2,
                              const scheme::Otpo& base, double beta, unsigned threads = 1) {
  if (pairs.empty()) throw ValidationError("sweep: no pairs");
  scheme::Otpo s = base;
  s.cfg.eps1 = eps1;
  s.cfg.eps2 = eps2;
  LossConfig lc{beta, s, 0.0};
  lc.validate();
  std::vector<TokenWeights> w(pairs.size());
  std::vector<double> margin(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    w[i] = weights(pairs[i], lc.scheme);
    margin[i] = beta * pair_loss(pairs[i], lc, w[i]).delta_r;
  });
  SweepPoint p{eps1, eps2};
  const double n = static_cast<double>(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    p.weight_variance += weight_variance(w[i]);
    p.weight_abs_diff += weight_abs_diff(w[i]);
    p.total_mass += w[i].total_mass;
    p.tau += w[i].tau;
    p.margin_mean += margin[i];
    p.converged_fraction += w[i].converged ? 1.0 : 0.0;
  }
  p.weight_variance /= n;
  p.weight_abs_diff /= n;
  p.total_mass /= n;
  p.tau /= n;
  p.margin_mean /= n;
  p.converged_fraction /= n;
  for (double m : margin) p.margin_std += (m - p.margin_mean) * (m - p.margin_mean);
  p.margin_std = std::sqrt(p.margin_std / n);
  return p;
}

}  // namespace otw
