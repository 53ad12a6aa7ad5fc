#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

/**
 * @file lab.hpp
 * @brief Desk-scale test bench: a synthetic preference corpus, a bigram
 *        softmax policy, a plain gradient-descent trainer and length
 *        diagnostics.
 *
 * Corpus layout per pair. Both responses open with the same shared span
 * (identical token ids and identical hidden vectors). Each then carries
 * response-specific content (chosen draws from the "good" token band,
 * rejected from the "bad" band, equal expected length) followed by a
 * padding tail from a separate band of uninformative tokens. The planted
 * length bias lives in the padding: the chosen tail is `length_bias`
 * tokens longer on average, so a scheme that rewards raw length learns to
 * emit padding. Token 0 is reserved as the beginning-of-response context
 * and is never emitted.
 *
 * Vocabulary bands (V = vocab_size): good [1, 7V/16), bad [7V/16, 7V/8),
 * padding [7V/8, V).
 *
 * Hidden states come from a fixed random embedding table (entries
 * N(0, 1/d), so embeddings have roughly unit norm) plus per-token noise of
 * norm ~noise_scale, or ~pad_noise_scale for padding tokens. They are not
 * produced by the policy.
 */

#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "otw/core.hpp"
#include "otw/format.hpp"
#include "otw/loss.hpp"
#include "otw/prng.hpp"
#include "otw/weighting.hpp"

namespace otw::lab {

/// Uniform doubles and normals on top of CounterRng.
class SynthRng {
 public:
  SynthRng(std::uint64_t seed, std::string_view stream) : rng_(seed, stream) {}
  double uniform() { return static_cast<double>(rng_.next() >> 11) * 0x1.0p-53; }
  double normal() {
    // Box-Muller; u1 in (0, 1]
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  /// Uniform integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng_.bounded(static_cast<std::uint64_t>(hi - lo + 1)));
  }

 private:
  CounterRng rng_;
};

/// Bigram softmax policy: p(y_t | y_{t-1}) = softmax(logits[y_{t-1}])[y_t].
class ToyPolicy {
 public:
  ToyPolicy() = default;
  ToyPolicy(Matrix logits, Matrix embedding) : logits_(std::move(logits)), embedding_(std::move(embedding)) {
    if (logits_.rows() != logits_.cols() || logits_.rows() < 2) {
      throw ValidationError("ToyPolicy: logits must be a square matrix with V >= 2");
    }
    if (embedding_.rows() != logits_.rows()) throw ValidationError("ToyPolicy: embedding rows must equal V");
    refresh();
  }

  static ToyPolicy random(std::size_t vocab, std::size_t dim, std::uint64_t seed, double logit_scale = 0.5) {
    SynthRng rng(seed, "policy");
    Matrix logits(vocab, vocab), emb(vocab, dim);
    for (double& x : logits.data()) x = logit_scale * rng.normal();
    const double es = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& x : emb.data()) x = es * rng.normal();
    return ToyPolicy(std::move(logits), std::move(emb));
  }

  std::size_t vocab_size() const noexcept { return logits_.rows(); }
  std::size_t dim() const noexcept { return embedding_.cols(); }
  const Matrix& logits() const noexcept { return logits_; }
  const Matrix& embedding() const noexcept { return embedding_; }

  void set_logits(Matrix logits) {
    if (logits.rows() != logits_.rows() || logits.cols() != logits_.cols()) {
      throw ValidationError("ToyPolicy::set_logits: shape mismatch");
    }
    logits_ = std::move(logits);
    refresh();
  }

  double log_prob(std::int64_t prev, std::int64_t tok) const {
    return logits_(static_cast<std::size_t>(prev), static_cast<std::size_t>(tok)) - row_lse_[prev];
  }
  double prob(std::size_t prev, std::size_t tok) const { return std::exp(log_prob(prev, tok)); }

  /// Per-token log-probs of a response that starts after the reserved token 0.
  std::vector<double> sequence_log_probs(const std::vector<std::int64_t>& ids) const {
    std::vector<double> out(ids.size());
    std::int64_t prev = 0;
    for (std::size_t t = 0; t < ids.size(); ++t) {
      out[t] = log_prob(prev, ids[t]);
      prev = ids[t];
    }
    return out;
  }

  double sequence_log_prob(const std::vector<std::int64_t>& ids) const {
    double s = 0.0;
    for (double x : sequence_log_probs(ids)) s += x;
    return s;
  }

 private:
  void refresh() {
    row_lse_.assign(logits_.rows(), 0.0);
    for (std::size_t p = 0; p < logits_.rows(); ++p) {
      const auto r = logits_.row(p);
      const double mx = *std::max_element(r.begin(), r.end());
      double s = 0.0;
      for (double x : r) s += std::exp(x - mx);
      row_lse_[p] = mx + std::log(s);
    }
  }

  Matrix logits_;
  Matrix embedding_;
  std::vector<double> row_lse_;
};

/// Trainer defaults. The rate keeps DPO well short of saturation on the
/// default corpus (final mean loss around 0.4 after 300 steps).
inline constexpr int kDefaultSteps = 300;
inline constexpr double kDefaultLr = 2.0;

struct SynthConfig {
  std::size_t vocab_size = 64;
  std::size_t d = 16;
  std::size_t num_pairs = 2000;
  std::size_t shared_span_len = 6;
  /// Mean content length of each response (after the shared span).
  std::size_t filler_len = 8;
  /// Content lengths vary uniformly by +-length_jitter; padding tails by
  /// an extra uniform [0, length_jitter].
  std::size_t length_jitter = 3;
  /// Expected |y_c| - |y_r|, carried entirely by the padding tail.
  std::int64_t length_bias = 4;
  double noise_scale = 0.3;
  double pad_noise_scale = 1.5;
  std::uint64_t seed = 7;

  void validate() const {
    if (vocab_size < 16) throw ValidationError("synth: vocab_size must be at least 16");
    if (d < 1 || num_pairs < 1) throw ValidationError("synth: d and num_pairs must be at least 1");
    if (!(noise_scale >= 0.0) || !(pad_noise_scale >= 0.0)) {
      throw ValidationError("synth: noise scales must be >= 0");
    }
  }
};

/// The frozen reference policy whose log-probs populate generated corpora.
inline ToyPolicy reference_policy(const SynthConfig& cfg) {
  return ToyPolicy::random(cfg.vocab_size, cfg.d, cfg.seed);
}

struct VocabBands {
  std::int64_t good_lo, bad_lo, pad_lo, end;
};

inline VocabBands vocab_bands(std::size_t vocab) {
  const auto V = static_cast<std::int64_t>(vocab);
  return {1, 7 * V / 16, 7 * V / 8, V};
}

inline std::vector<PreferencePair> generate(const SynthConfig& cfg) {
  cfg.validate();
  const ToyPolicy ref = reference_policy(cfg);
  const VocabBands band = vocab_bands(cfg.vocab_size);
  const double sqrt_d = std::sqrt(static_cast<double>(cfg.d));
  std::vector<PreferencePair> pairs;
  pairs.reserve(cfg.num_pairs);

  for (std::size_t p = 0; p < cfg.num_pairs; ++p) {
    SynthRng rng(cfg.seed, "pair-" + std::to_string(p));
    auto hidden_row = [&](std::int64_t tok, double scale) {
      std::vector<double> out(cfg.d);
      for (std::size_t t = 0; t < cfg.d; ++t) out[t] = ref.embedding()(tok, t) + scale / sqrt_d * rng.normal();
      return out;
    };
    const auto jit = static_cast<std::int64_t>(cfg.length_jitter);
    const auto base = static_cast<std::int64_t>(cfg.filler_len);
    const std::int64_t content_c = std::max<std::int64_t>(0, base + rng.integer(-jit, jit));
    const std::int64_t content_r = std::max<std::int64_t>(0, base + rng.integer(-jit, jit));
    const std::int64_t pad_c = std::max<std::int64_t>(0, cfg.length_bias) + rng.integer(0, jit);
    const std::int64_t pad_r = std::max<std::int64_t>(0, -cfg.length_bias) + rng.integer(0, jit);

    std::vector<std::int64_t> shared_ids(cfg.shared_span_len);
    std::vector<std::vector<double>> shared_h(cfg.shared_span_len);
    for (std::size_t t = 0; t < cfg.shared_span_len; ++t) {
      shared_ids[t] = rng.integer(band.good_lo, band.pad_lo - 1);
      shared_h[t] = hidden_row(shared_ids[t], cfg.noise_scale);
    }
    auto build = [&](std::int64_t content, std::int64_t lo, std::int64_t hi, std::int64_t pad, const char* label) {
      std::vector<std::int64_t> ids = shared_ids;
      std::vector<std::vector<double>> h = shared_h;
      if (ids.empty() && content + pad == 0) content = 1;
      for (std::int64_t t = 0; t < content; ++t) {
        ids.push_back(rng.integer(lo, hi));
        h.push_back(hidden_row(ids.back(), cfg.noise_scale));
      }
      for (std::int64_t t = 0; t < pad; ++t) {
        ids.push_back(rng.integer(band.pad_lo, band.end - 1));
        h.push_back(hidden_row(ids.back(), cfg.pad_noise_scale));
      }
      auto lp = ref.sequence_log_probs(ids);
      return TokenSeq(ids, lp, lp, Matrix::from_rows(h), label);
    };
    TokenSeq chosen = build(content_c, band.good_lo, band.bad_lo - 1, pad_c, "chosen");
    TokenSeq rejected = build(content_r, band.bad_lo, band.pad_lo - 1, pad_r, "rejected");
    pairs.emplace_back("synth-" + std::to_string(p), std::move(chosen), std::move(rejected));
  }
  return pairs;
}

/// Frozen per-pair weights; they depend on hidden states only.
inline std::vector<TokenWeights> corpus_weights(std::span<const PreferencePair> pairs, const WeightScheme& s,
                                                unsigned threads = 1) {
  std::vector<TokenWeights> w(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) { w[i] = weights(pairs[i], s); });
  return w;
}

namespace detail {

/// Per-token loss inputs under `policy`: log-ratios against the stored
/// reference log-probs, or raw policy log-probs for SimPo.
inline std::vector<double> inputs_under(const ToyPolicy& policy, const TokenSeq& s, const LossConfig& cfg) {
  auto lp = policy.sequence_log_probs(s.token_ids());
  if (cfg.uses_reference()) {
    for (std::size_t t = 0; t < lp.size(); ++t) lp[t] -= s.logp_ref()[t];
  }
  return lp;
}

}  // namespace detail

struct LossAndGradient {
  double mean_loss = 0.0;
  double mean_delta_r = 0.0;
  std::vector<double> margins;  ///< beta * delta_r per pair
  Matrix grad;                  ///< d mean_loss / d logits
};

/// Mean pair loss over the corpus and its analytic gradient w.r.t. the
/// policy logits, chained from LossReport::grad_q through the softmax.
inline LossAndGradient loss_and_gradient(const ToyPolicy& policy, std::span<const PreferencePair> pairs,
                                         std::span<const TokenWeights> w, const LossConfig& cfg) {
  const std::size_t V = policy.vocab_size();
  LossAndGradient out;
  out.grad = Matrix(V, V, 0.0);
  out.margins.resize(pairs.size());
  // For row p: grad[p][k] = sum_t g_t * (1[k == y_t] - softmax[p][k]).
  std::vector<double> row_coeff(V, 0.0);
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto qc = detail::inputs_under(policy, pairs[i].chosen(), cfg);
    const auto qr = detail::inputs_under(policy, pairs[i].rejected(), cfg);
    const LossReport r = loss_from_inputs(qc, qr, w[i], cfg.beta, cfg.margin());
    out.mean_loss += r.loss;
    out.mean_delta_r += r.delta_r;
    out.margins[i] = cfg.beta * r.delta_r;
    auto accumulate = [&](const TokenSeq& s, const std::vector<double>& g) {
      std::int64_t prev = 0;
      for (std::size_t t = 0; t < g.size(); ++t) {
        const double gt = g[t] * inv_n;
        const auto tok = s.token_ids()[t];
        out.grad(prev, tok) += gt;
        row_coeff[prev] += gt;
        prev = tok;
      }
    };
    accumulate(pairs[i].chosen(), r.grad_q_chosen);
    accumulate(pairs[i].rejected(), r.grad_q_rejected);
  }
  for (std::size_t p = 0; p < V; ++p) {
    if (row_coeff[p] == 0.0) continue;
    for (std::size_t k = 0; k < V; ++k) out.grad(p, k) -= row_coeff[p] * policy.prob(p, k);
  }
  out.mean_loss *= inv_n;
  out.mean_delta_r *= inv_n;
  return out;
}

struct LengthFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r = 0.0;
  /// False when the correlation is undefined (no variation in the response).
  bool r_defined = false;
  std::size_t n = 0;
};

/// Ordinary least squares of y on x.
inline LengthFit ols(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw ValidationError("ols: inputs must be nonempty and equal length");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw ValidationError("length regression needs at least 2 distinct lengths");
  LengthFit fit;
  fit.n = x.size();
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (syy > 0.0) {
    fit.r = sxy / std::sqrt(sxx * syy);
    fit.r_defined = true;
  }
  return fit;
}

/// Regresses each response's change in sequence log-prob (after - before)
/// on its token length. Both chosen and rejected responses are points.
inline LengthFit length_diagnostics(const ToyPolicy& before, const ToyPolicy& after,
                                    std::span<const PreferencePair> pairs) {
  if (pairs.empty()) throw ValidationError("length_diagnostics: no pairs");
  std::vector<double> len, dlogp;
  len.reserve(2 * pairs.size());
  dlogp.reserve(2 * pairs.size());
  for (const auto& p : pairs) {
    for (const TokenSeq* s : {&p.chosen(), &p.rejected()}) {
      len.push_back(static_cast<double>(s->size()));
      dlogp.push_back(after.sequence_log_prob(s->token_ids()) - before.sequence_log_prob(s->token_ids()));
    }
  }
  return ols(len, dlogp);
}

struct StepStats {
  double mean_loss = 0.0;
  double mean_delta_r = 0.0;
  double grad_norm = 0.0;
  double mean_chosen_len = 0.0;
  double mean_rejected_len = 0.0;
};

struct TrainReport {
  std::vector<StepStats> steps;
  LengthFit length_fit;
  double margin_mean = 0.0;
  double margin_std = 0.0;
  double final_loss = 0.0;
};

struct TrainResult {
  ToyPolicy policy;
  TrainReport report;
};

/// Plain gradient descent on the policy logits; the reference log-probs
/// stored in the pairs stay frozen. Series entries are measured before the
/// update of that step.
inline TrainResult train(const ToyPolicy& initial, std::span<const PreferencePair> pairs, const LossConfig& cfg,
                         int steps, double lr, unsigned threads = 1) {
  cfg.validate();
  if (steps < 1) throw ValidationError("train: steps must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("train: lr must be a finite number >= 0");
  if (pairs.empty()) throw ValidationError("train: no pairs");
  const auto w = corpus_weights(pairs, cfg.scheme, threads);

  double len_c = 0.0, len_r = 0.0;
  for (const auto& p : pairs) {
    len_c += static_cast<double>(p.chosen().size());
    len_r += static_cast<double>(p.rejected().size());
  }
  len_c /= static_cast<double>(pairs.size());
  len_r /= static_cast<double>(pairs.size());

  TrainResult res{initial, {}};
  res.report.steps.reserve(static_cast<std::size_t>(steps));
  for (int step = 0; step < steps; ++step) {
    const auto lg = loss_and_gradient(res.policy, pairs, w, cfg);
    if (!std::isfinite(lg.mean_loss)) {
      throw NumericalError("train: non-finite loss at step " + std::to_string(step));
    }
    double gn = 0.0;
    for (double g : lg.grad.data()) gn += g * g;
    res.report.steps.push_back({lg.mean_loss, lg.mean_delta_r, std::sqrt(gn), len_c, len_r});
    if (lr == 0.0) continue;
    Matrix next = res.policy.logits();
    auto nd = next.data();
    const auto gd = lg.grad.data();
    for (std::size_t t = 0; t < nd.size(); ++t) nd[t] -= lr * gd[t];
    res.policy.set_logits(std::move(next));
  }

  const auto fin = loss_and_gradient(res.policy, pairs, w, cfg);
  res.report.final_loss = fin.mean_loss;
  double mu = 0.0, var = 0.0;
  for (double m : fin.margins) mu += m;
  mu /= static_cast<double>(fin.margins.size());
  for (double m : fin.margins) var += (m - mu) * (m - mu);
  res.report.margin_mean = mu;
  res.report.margin_std = std::sqrt(var / static_cast<double>(fin.margins.size()));
  res.report.length_fit = length_diagnostics(initial, res.policy, pairs);
  return res;
}

inline std::string report_csv(const TrainReport& r) {
  std::ostringstream os;
  os << "step,mean_loss,mean_delta_r,grad_norm,mean_chosen_len,mean_rejected_len\n";
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    const auto& s = r.steps[i];
    os << i << ',' << format_double(s.mean_loss) << ',' << format_double(s.mean_delta_r) << ','
       << format_double(s.grad_norm) << ',' << format_double(s.mean_chosen_len) << ','
       << format_double(s.mean_rejected_len) << '\n';
  }
  return os.str();
}

inline nlohmann::json report_summary(const TrainReport& r) {
  double max_gn = 0.0;
  for (const auto& s : r.steps) max_gn = std::max(max_gn, s.grad_norm);
  return {{"steps", r.steps.size()},
          {"final_loss", r.final_loss},
          {"max_grad_norm", max_gn},
          {"length_slope", r.length_fit.slope},
          {"length_intercept", r.length_fit.intercept},
          {"length_r", r.length_fit.r},
          {"length_r_defined", r.length_fit.r_defined},
          {"margin_mean", r.margin_mean},
          {"margin_std", r.margin_std}};
}

}  // namespace otw::lab
