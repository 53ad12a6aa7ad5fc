#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

// Reference minimizer for small UOT instances. It descends the primal
// objective directly with exponentiated-gradient (multiplicative) updates,
// so it shares nothing with the scaling iteration in ot.hpp beyond the
// objective definition. Used as ground truth in tests.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "otw/ot.hpp"

namespace otw {

struct OracleOptions {
  int restarts = 4;
  int max_iters = 200000;
  double objective_tol = 1e-8;
  std::uint64_t seed = 0x5eedULL;
};

inline constexpr std::size_t kOracleMaxEntries = 64;

inline TransportPlan uot_oracle(const CostMatrix& m, const UotConfig& cfg, const OracleOptions& opt = {}) {
  cfg.validate();
  const std::size_t n = m.rows(), k = m.cols();
  if (n * k > kOracleMaxEntries) {
    throw ValidationError("uot_oracle: instance has " + std::to_string(n * k) + " entries, limit is " +
                          std::to_string(kOracleMaxEntries));
  }
  const double entropy_shift = cfg.entropy == EntropyForm::kPlain ? 1.0 : 0.0;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix best;
  double best_obj = std::numeric_limits<double>::infinity();
  bool best_converged = false;
  int best_iters = 0;

  for (int restart = 0; restart < opt.restarts; ++restart) {
    // log-plan; restart 0 starts from the all-ones plan
    std::vector<double> x(n * k, 0.0);
    if (restart > 0) {
      for (double& v : x) v = normal(rng);
    }
    Matrix gamma(n, k);
    auto materialize = [&](const std::vector<double>& logp) {
      for (std::size_t t = 0; t < n * k; ++t) gamma.data()[t] = std::exp(logp[t]);
    };
    materialize(x);
    double obj = uot_objective(m, gamma, cfg.eps1, cfg.eps2, cfg.entropy);
    double step = 1.0 / (cfg.eps1 + 2.0 * cfg.eps2);
    std::vector<double> grad(n * k), trial(n * k), row(n), col(k);
    bool converged = false;
    int iter = 0;
    int quiet = 0;
    for (; iter < opt.max_iters; ++iter) {
      std::fill(row.begin(), row.end(), 0.0);
      std::fill(col.begin(), col.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          row[i] += gamma(i, j);
          col[j] += gamma(i, j);
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          grad[i * k + j] = m(i, j) + cfg.eps1 * (x[i * k + j] + entropy_shift) +
                            cfg.eps2 * (std::log(row[i]) + std::log(col[j]));
        }
      }
      // backtrack until the objective does not increase
      double trial_obj = obj;
      for (int halvings = 0; halvings < 60; ++halvings) {
        for (std::size_t t = 0; t < n * k; ++t) trial[t] = x[t] - step * grad[t];
        materialize(trial);
        trial_obj = uot_objective(m, gamma, cfg.eps1, cfg.eps2, cfg.entropy);
        if (trial_obj <= obj) break;
        step *= 0.5;
      }
      if (!(trial_obj <= obj)) {
        materialize(x);
        converged = true;
        break;
      }
      const double delta = obj - trial_obj;
      x.swap(trial);
      obj = trial_obj;
      quiet = delta < opt.objective_tol * std::max(1.0, std::abs(obj)) ? quiet + 1 : 0;
      if (quiet >= 20) {
        converged = true;
        break;
      }
    }
    if (obj < best_obj) {
      best_obj = obj;
      best = gamma;
      best_converged = converged;
      best_iters = iter;
    }
  }
  return TransportPlan(std::move(best), best_converged, best_iters);
}

}  // namespace otw
