#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

// Shared fixtures and reference computations for the test suites. The
// reference helpers are written the slow, obvious way; finite-difference
// helpers evaluate the library only at perturbed inputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "otw/otw.hpp"

namespace otw::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("otw-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = u(rng);
  return m;
}

inline TokenSeq random_seq(std::mt19937_64& rng, std::size_t len, std::size_t dim, const std::string& label) {
  std::uniform_real_distribution<double> lp(-6.0, -0.01);
  std::uniform_int_distribution<std::int64_t> tok(0, 999);
  std::vector<std::int64_t> ids(len);
  std::vector<double> pol(len), ref(len);
  for (std::size_t i = 0; i < len; ++i) {
    ids[i] = tok(rng);
    pol[i] = lp(rng);
    ref[i] = lp(rng);
  }
  return TokenSeq(ids, pol, ref, dim > 0 ? random_matrix(rng, len, dim) : Matrix(), label);
}

inline PreferencePair random_pair(std::mt19937_64& rng, std::size_t lc, std::size_t lr, std::size_t dim,
                                  const std::string& id) {
  return PreferencePair(id, random_seq(rng, lc, dim, "chosen"), random_seq(rng, lr, dim, "rejected"));
}

inline PreferencePair random_pair(std::mt19937_64& rng, const std::string& id, std::size_t max_len = 12,
                                  std::size_t dim = 6) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  const std::size_t lc = len(rng), lr = len(rng);
  return random_pair(rng, lc, lr, dim, id);
}

/// Copy of `s` with one policy log-prob shifted by `h`.
inline TokenSeq nudge_policy(const TokenSeq& s, std::size_t i, double h) {
  auto pol = s.logp_policy();
  pol[i] += h;
  return TokenSeq(s.token_ids(), pol, s.logp_ref(), s.hidden());
}

/// Pairwise Euclidean distances by explicit double loop.
inline std::vector<std::vector<double>> naive_distances(const Matrix& a, const Matrix& b) {
  std::vector<std::vector<double>> out(a.rows(), std::vector<double>(b.rows()));
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < a.cols(); ++t) {
        const double d = a(i, t) - b(j, t);
        s += d * d;
      }
      out[i][j] = std::sqrt(s);
    }
  }
  return out;
}

/// Minimizer of a unimodal function on [lo, hi].
inline double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

/// |a - b| scaled by the larger magnitude, with a floor to keep exact zeros
/// comparable.
inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Population variance of the concatenated weight vectors.
inline double pooled_variance(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> all = a;
  all.insert(all.end(), b.begin(), b.end());
  double mu = sum(all) / static_cast<double>(all.size());
  double v = 0.0;
  for (double x : all) v += (x - mu) * (x - mu);
  return v / static_cast<double>(all.size());
}

/// Central finite-difference derivative of pair_loss w.r.t. q at one
/// position, perturbing the policy log-prob (q shifts by the same amount).
inline double fd_pair_loss(const PreferencePair& p, const LossConfig& cfg, bool chosen, std::size_t i,
                           double h = 1e-5) {
  auto eval = [&](double dh) {
    PreferencePair q = chosen ? PreferencePair(p.pair_id(), nudge_policy(p.chosen(), i, dh), p.rejected())
                              : PreferencePair(p.pair_id(), p.chosen(), nudge_policy(p.rejected(), i, dh));
    return pair_loss(q, cfg).loss;
  };
  return (eval(h) - eval(-h)) / (2.0 * h);
}

/// Mean loss of a toy policy over a corpus with frozen weights.
inline double toy_mean_loss(const lab::ToyPolicy& policy, std::span<const PreferencePair> pairs,
                            std::span<const TokenWeights> w, const LossConfig& cfg) {
  double s = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto qc = lab::detail::inputs_under(policy, pairs[i].chosen(), cfg);
    const auto qr = lab::detail::inputs_under(policy, pairs[i].rejected(), cfg);
    double dc = 0.0, dr = 0.0;
    for (std::size_t t = 0; t < qc.size(); ++t) dc += w[i].w_chosen[t] * qc[t];
    for (std::size_t t = 0; t < qr.size(); ++t) dr += w[i].w_rejected[t] * qr[t];
    const double z = cfg.beta * (dc - dr) - cfg.margin();
    s += std::log1p(std::exp(-z));
  }
  return s / static_cast<double>(pairs.size());
}

/// Central difference of toy_mean_loss w.r.t. one logit.
inline double fd_logit(const lab::ToyPolicy& policy, std::span<const PreferencePair> pairs,
                       std::span<const TokenWeights> w, const LossConfig& cfg, std::size_t r, std::size_t c,
                       double h = 1e-5) {
  auto eval = [&](double dh) {
    Matrix l = policy.logits();
    l(r, c) += dh;
    lab::ToyPolicy p = policy;
    p.set_logits(std::move(l));
    return toy_mean_loss(p, pairs, w, cfg);
  };
  return (eval(h) - eval(-h)) / (2.0 * h);
}

/// The five schemes used across gradient checks.
inline std::vector<WeightScheme> five_schemes() {
  return {scheme::Dpo{}, scheme::SimPo{}, scheme::SamPo{11}, scheme::LdDpo{0.5}, scheme::Otpo{}};
}

}  // namespace otw::testing
