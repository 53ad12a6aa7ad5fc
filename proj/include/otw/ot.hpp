#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

/**
 * @file ot.hpp
 * @brief Euclidean cost matrices and the unbalanced entropic OT solver.
 *
 * The solver minimizes, over nonnegative plans G of shape |y_c| x |y_r|,
 *
 *   <G, M> + eps1 * H(G) + eps2 * (KL(G 1 | 1) + KL(G^T 1 | 1))
 *
 * with the generalized KL(a | b) = sum a log(a/b) - a + b and all-ones
 * marginal targets. H is either sum G (log G - 1) (kShifted, the default)
 * or sum G log G (kPlain). The two differ by eps1 * |G|, which is the same
 * as adding eps1 to every cost, so kPlain is solved as kShifted on M + eps1.
 *
 * Iteration (log domain, lambda = eps2 / (eps1 + eps2)):
 *
 *   f_i <- -lambda * logsumexp_j(-M_ij / eps1 + g_j)
 *   g_j <- -lambda * logsumexp_i(-M_ij / eps1 + f_i)
 *   G_ij = exp(f_i - M_ij / eps1 + g_j)
 *
 * Costs are used raw; no rescaling by mean or max.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "otw/error.hpp"
#include "otw/matrix.hpp"

namespace otw {

enum class EntropyForm {
  kShifted,  ///< sum G (log G - 1)
  kPlain,    ///< sum G log G
};

struct UotConfig {
  double eps1 = 1.0;
  double eps2 = 0.2;
  int max_iters = 1000;
  double tol = 1e-9;
  EntropyForm entropy = EntropyForm::kShifted;

  void validate() const {
    if (!(eps1 > 0.0) || !std::isfinite(eps1)) throw ValidationError("eps1 must be a positive finite number");
    if (!(eps2 > 0.0) || !std::isfinite(eps2)) throw ValidationError("eps2 must be a positive finite number");
    if (!(tol > 0.0)) throw ValidationError("tol must be positive");
    if (max_iters < 1) throw ValidationError("max_iters must be at least 1");
  }
};

/// Nonnegative pairwise distances between chosen and rejected tokens.
class CostMatrix {
 public:
  CostMatrix() = default;
  explicit CostMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() == 0 || m_.cols() == 0) throw ValidationError("cost matrix must be nonempty");
    for (double x : m_.data()) {
      if (!std::isfinite(x) || x < 0.0) throw ValidationError("cost entries must be finite and >= 0");
    }
  }
  const Matrix& matrix() const noexcept { return m_; }
  std::size_t rows() const noexcept { return m_.rows(); }
  std::size_t cols() const noexcept { return m_.cols(); }
  double operator()(std::size_t i, std::size_t j) const noexcept { return m_(i, j); }

 private:
  Matrix m_;
};

inline CostMatrix cost_matrix(const Matrix& chosen_hidden, const Matrix& rejected_hidden) {
  if (chosen_hidden.rows() == 0 || rejected_hidden.rows() == 0) {
    throw ValidationError("cost_matrix: hidden states are empty");
  }
  if (chosen_hidden.cols() != rejected_hidden.cols()) {
    throw ValidationError("cost_matrix: dimension mismatch (" + std::to_string(chosen_hidden.cols()) +
                          " vs " + std::to_string(rejected_hidden.cols()) + ")");
  }
  const std::size_t n = chosen_hidden.rows(), k = rejected_hidden.rows(), d = chosen_hidden.cols();
  Matrix m(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = chosen_hidden.row(i).data();
    for (std::size_t j = 0; j < k; ++j) {
      const double* b = rejected_hidden.row(j).data();
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = a[t] - b[t];
        s += diff * diff;
      }
      m(i, j) = std::sqrt(s);
    }
  }
  return CostMatrix(std::move(m));
}

class TransportPlan {
 public:
  TransportPlan() = default;

  /// Wraps a plan and caches its marginals. Entries must be finite and >= 0.
  explicit TransportPlan(Matrix gamma, bool converged = true, int iterations = 0)
      : gamma_(std::move(gamma)), converged_(converged), iterations_(iterations) {
    row_.assign(gamma_.rows(), 0.0);
    col_.assign(gamma_.cols(), 0.0);
    for (std::size_t i = 0; i < gamma_.rows(); ++i) {
      for (std::size_t j = 0; j < gamma_.cols(); ++j) {
        const double g = gamma_(i, j);
        if (!std::isfinite(g) || g < 0.0) {
          throw NumericalError("transport plan entry (" + std::to_string(i) + "," + std::to_string(j) +
                               ") is negative or non-finite");
        }
        row_[i] += g;
        col_[j] += g;
      }
    }
    for (double r : row_) total_ += r;
  }

  const Matrix& gamma() const noexcept { return gamma_; }
  std::size_t rows() const noexcept { return gamma_.rows(); }
  std::size_t cols() const noexcept { return gamma_.cols(); }
  const std::vector<double>& row_marginals() const noexcept { return row_; }
  const std::vector<double>& col_marginals() const noexcept { return col_; }
  double total_mass() const noexcept { return total_; }
  bool converged() const noexcept { return converged_; }
  int iterations() const noexcept { return iterations_; }

 private:
  Matrix gamma_;
  std::vector<double> row_, col_;
  double total_ = 0.0;
  bool converged_ = false;
  int iterations_ = 0;
};

namespace detail {

inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

/// Generalized KL(a | 1).
inline double kl_to_ones(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += xlogx(x) - x + 1.0;
  return s;
}

}  // namespace detail

/// UOT objective of an arbitrary nonnegative plan.
inline double uot_objective(const CostMatrix& m, const Matrix& gamma, double eps1, double eps2,
                            EntropyForm form = EntropyForm::kShifted) {
  if (gamma.rows() != m.rows() || gamma.cols() != m.cols()) {
    throw ValidationError("uot_objective: plan and cost shapes differ");
  }
  std::vector<double> row(gamma.rows(), 0.0), col(gamma.cols(), 0.0);
  double transport = 0.0, entropy = 0.0;
  for (std::size_t i = 0; i < gamma.rows(); ++i) {
    for (std::size_t j = 0; j < gamma.cols(); ++j) {
      const double g = gamma(i, j);
      transport += g * m(i, j);
      entropy += detail::xlogx(g) - (form == EntropyForm::kShifted ? g : 0.0);
      row[i] += g;
      col[j] += g;
    }
  }
  return transport + eps1 * entropy + eps2 * (detail::kl_to_ones(row) + detail::kl_to_ones(col));
}

inline double uot_objective(const CostMatrix& m, const TransportPlan& plan, const UotConfig& cfg) {
  return uot_objective(m, plan.gamma(), cfg.eps1, cfg.eps2, cfg.entropy);
}

/// Unbalanced Sinkhorn scaling in the log domain. Non-convergence within
/// max_iters is reported through TransportPlan::converged(); a non-finite
/// scaling vector throws NumericalError.
inline TransportPlan solve_uot(const CostMatrix& m, const UotConfig& cfg) {
  cfg.validate();
  const std::size_t n = m.rows(), k = m.cols();
  const double shift = cfg.entropy == EntropyForm::kPlain ? 1.0 : 0.0;
  Matrix log_kernel(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) log_kernel(i, j) = -m(i, j) / cfg.eps1 - shift;
  }
  const double lambda = cfg.eps2 / (cfg.eps1 + cfg.eps2);
  std::vector<double> f(n, 0.0), g(k, 0.0), col_max(k), col_sum(k);

  auto check = [](std::span<const double> v, const char* name, int iter) {
    for (double x : v) {
      if (!std::isfinite(x)) {
        throw NumericalError(std::string("solve_uot: non-finite ") + name + " scaling at iteration " +
                             std::to_string(iter) + " (eps1 too small for the cost scale?)");
      }
    }
  };

  bool converged = false;
  int iter = 0;
  while (iter < cfg.max_iters) {
    ++iter;
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* lk = log_kernel.row(i).data();
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, lk[j] + g[j]);
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += std::exp(lk[j] + g[j] - mx);
      const double next = -lambda * (mx + std::log(s));
      change = std::max(change, std::abs(next - f[i]));
      f[i] = next;
    }
    check(f, "row", iter);

    std::fill(col_max.begin(), col_max.end(), -std::numeric_limits<double>::infinity());
    std::fill(col_sum.begin(), col_sum.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* lk = log_kernel.row(i).data();
      for (std::size_t j = 0; j < k; ++j) col_max[j] = std::max(col_max[j], lk[j] + f[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double* lk = log_kernel.row(i).data();
      for (std::size_t j = 0; j < k; ++j) col_sum[j] += std::exp(lk[j] + f[i] - col_max[j]);
    }
    for (std::size_t j = 0; j < k; ++j) {
      const double next = -lambda * (col_max[j] + std::log(col_sum[j]));
      change = std::max(change, std::abs(next - g[j]));
      g[j] = next;
    }
    check(g, "column", iter);

    if (change < cfg.tol) {
      converged = true;
      break;
    }
  }

  Matrix gamma(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) gamma(i, j) = std::exp(f[i] + log_kernel(i, j) + g[j]);
  }
  return TransportPlan(std::move(gamma), converged, iter);
}

inline nlohmann::json plan_to_json(const TransportPlan& plan, double threshold = 1e-6) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    for (std::size_t j = 0; j < plan.cols(); ++j) {
      const double v = plan.gamma()(i, j);
      if (v > threshold) entries.push_back({i, j, v});
    }
  }
  return {{"rows", plan.rows()},
          {"cols", plan.cols()},
          {"entries", std::move(entries)},
          {"row_marginals", plan.row_marginals()},
          {"col_marginals", plan.col_marginals()},
          {"total_mass", plan.total_mass()},
          {"converged", plan.converged()},
          {"iterations", plan.iterations()}};
}

}  // namespace otw
