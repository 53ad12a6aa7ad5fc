#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

/**
 * @file loss.hpp
 * @brief Weighted reward difference, per-pair preference loss and its
 *        gradient with respect to the per-token log-ratio inputs.
 *
 *   delta = sum_i w_c[i] q_c[i] - sum_j w_r[j] q_r[j]
 *   loss  = -log sigmoid(beta * delta - gamma) = softplus(gamma - beta * delta)
 *   dloss/d delta = -beta * sigmoid(gamma - beta * delta)
 *   dloss/d q_c[i] =  dloss/d delta * w_c[i]
 *   dloss/d q_r[j] = -dloss/d delta * w_r[j]
 *
 * gamma is the SimPO margin and zero for every other scheme. Weights are
 * treated as constants: they depend on hidden states, never on q.
 * For SimPo, q is the policy log-probability itself (no reference model).
 */

#include <cmath>
#include <span>
#include <vector>

#include <json.hpp>

#include "otw/core.hpp"
#include "otw/parallel.hpp"
#include "otw/weighting.hpp"

namespace otw {

struct LossConfig {
  double beta = 0.1;
  WeightScheme scheme = scheme::Dpo{};
  double simpo_gamma = 0.0;

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ValidationError("beta must be a positive finite number");
    if (!(simpo_gamma >= 0.0) || !std::isfinite(simpo_gamma)) {
      throw ValidationError("simpo_gamma must be a nonnegative finite number");
    }
  }
  bool uses_reference() const { return !std::holds_alternative<scheme::SimPo>(scheme); }
  double margin() const { return std::holds_alternative<scheme::SimPo>(scheme) ? simpo_gamma : 0.0; }
};

struct LossReport {
  double delta_r = 0.0;
  double loss = 0.0;
  double dloss_ddelta = 0.0;
  std::vector<double> grad_q_chosen;
  std::vector<double> grad_q_rejected;
  std::vector<double> per_token_chosen;
  std::vector<double> per_token_rejected;
};

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double weighted_delta_r(std::span<const double> q_c, std::span<const double> q_r,
                               std::span<const double> w_c, std::span<const double> w_r) {
  if (q_c.size() != w_c.size() || q_r.size() != w_r.size()) {
    throw ValidationError("weighted_delta_r: weights and log-ratios differ in length");
  }
  double sc = 0.0, sr = 0.0;
  for (std::size_t i = 0; i < q_c.size(); ++i) sc += w_c[i] * q_c[i];
  for (std::size_t j = 0; j < q_r.size(); ++j) sr += w_r[j] * q_r[j];
  return sc - sr;
}

inline double weighted_delta_r(const LogRatioVec& q_c, const LogRatioVec& q_r, const TokenWeights& w) {
  return weighted_delta_r(q_c.q, q_r.q, w.w_chosen, w.w_rejected);
}

/// Loss and gradients from explicit per-token inputs.
inline LossReport loss_from_inputs(std::span<const double> q_c, std::span<const double> q_r,
                                   const TokenWeights& w, double beta, double margin) {
  LossReport r;
  r.delta_r = weighted_delta_r(q_c, q_r, w.w_chosen, w.w_rejected);
  const double z = beta * r.delta_r - margin;
  r.loss = softplus(-z);
  r.dloss_ddelta = -beta * sigmoid(-z);
  r.grad_q_chosen.resize(q_c.size());
  r.per_token_chosen.resize(q_c.size());
  for (std::size_t i = 0; i < q_c.size(); ++i) {
    r.grad_q_chosen[i] = r.dloss_ddelta * w.w_chosen[i];
    r.per_token_chosen[i] = w.w_chosen[i] * q_c[i];
  }
  r.grad_q_rejected.resize(q_r.size());
  r.per_token_rejected.resize(q_r.size());
  for (std::size_t j = 0; j < q_r.size(); ++j) {
    r.grad_q_rejected[j] = -r.dloss_ddelta * w.w_rejected[j];
    r.per_token_rejected[j] = w.w_rejected[j] * q_r[j];
  }
  return r;
}

/// The per-token inputs the loss differentiates: log-ratios, or policy
/// log-probs for SimPo.
inline std::span<const double> loss_inputs(const TokenSeq& s, const LossConfig& cfg) {
  return cfg.uses_reference() ? std::span<const double>(s.ratios().q)
                              : std::span<const double>(s.logp_policy());
}

inline LossReport pair_loss(const PreferencePair& pair, const LossConfig& cfg, const TokenWeights& w) {
  cfg.validate();
  return loss_from_inputs(loss_inputs(pair.chosen(), cfg), loss_inputs(pair.rejected(), cfg), w, cfg.beta,
                          cfg.margin());
}

inline LossReport pair_loss(const PreferencePair& pair, const LossConfig& cfg) {
  return pair_loss(pair, cfg, weights(pair, cfg.scheme));
}

struct BatchLoss {
  double mean_loss = 0.0;
  double mean_delta_r = 0.0;
  /// Mean over pairs of the L2 norm of (grad_q_chosen, grad_q_rejected).
  double mean_grad_norm = 0.0;
  std::size_t count = 0;
};

inline double grad_norm(const LossReport& r) {
  double s = 0.0;
  for (double g : r.grad_q_chosen) s += g * g;
  for (double g : r.grad_q_rejected) s += g * g;
  return std::sqrt(s);
}

/// Sums in index order so results do not depend on how reports were produced.
inline BatchLoss summarize(std::span<const LossReport> reports) {
  if (reports.empty()) throw ValidationError("batch_loss: empty batch");
  BatchLoss b;
  for (const auto& r : reports) {
    b.mean_loss += r.loss;
    b.mean_delta_r += r.delta_r;
    b.mean_grad_norm += grad_norm(r);
  }
  const double n = static_cast<double>(reports.size());
  b.mean_loss /= n;
  b.mean_delta_r /= n;
  b.mean_grad_norm /= n;
  b.count = reports.size();
  return b;
}

inline std::vector<LossReport> pair_losses(std::span<const PreferencePair> pairs, const LossConfig& cfg,
                                           unsigned threads = 1) {
  cfg.validate();
  std::vector<LossReport> out(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) { out[i] = pair_loss(pairs[i], cfg); });
  return out;
}

inline BatchLoss batch_loss(std::span<const PreferencePair> pairs, const LossConfig& cfg,
                            unsigned threads = 1) {
  if (pairs.empty()) throw ValidationError("batch_loss: empty batch");
  auto reports = pair_losses(pairs, cfg, threads);
  return summarize(reports);
}

inline nlohmann::json report_to_json(const std::string& pair_id, const LossReport& r) {
  return {{"pair_id", pair_id},
          {"delta_r", r.delta_r},
          {"loss", r.loss},
          {"dloss_ddelta", r.dloss_ddelta},
          {"grad_q_chosen", r.grad_q_chosen},
          {"grad_q_rejected", r.grad_q_rejected},
          {"per_token_chosen", r.per_token_chosen},
          {"per_token_rejected", r.per_token_rejected}};
}

inline nlohmann::json batch_to_json(const BatchLoss& b) {
  return {{"aggregate", true},
          {"count", b.count},
          {"mean_loss", b.mean_loss},
          {"mean_delta_r", b.mean_delta_r},
          {"mean_grad_norm", b.mean_grad_norm}};
}

}  // namespace otw
