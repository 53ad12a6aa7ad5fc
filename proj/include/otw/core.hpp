#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

/**
 * @file core.hpp
 * @brief Domain types for token-level preference data.
 *
 * A TokenSeq is one response: its token ids, the per-token log-probabilities
 * under the policy and the reference model, and optionally one hidden-state
 * vector per token. A PreferencePair couples a chosen and a rejected
 * response for the same prompt. Prompt tokens are never stored; every
 * weight in this library indexes response tokens only.
 *
 * Both types validate on construction and are immutable afterwards, so they
 * can be shared across threads freely.
 */

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "otw/error.hpp"
#include "otw/matrix.hpp"

namespace otw {

struct ValidationOptions {
  /// Reject log-probabilities above zero. Off by default because some
  /// upstream tools emit length-normalized scores rather than log-probs.
  bool strict_logprobs = false;
};

/// Per-token log-likelihood ratios, q^i = log pi_theta(y^i) - log pi_ref(y^i).
struct LogRatioVec {
  std::vector<double> q;

  std::size_t size() const noexcept { return q.size(); }
  double operator[](std::size_t i) const noexcept { return q[i]; }
  friend bool operator==(const LogRatioVec&, const LogRatioVec&) = default;
};

class TokenSeq {
 public:
  TokenSeq() = default;

  /// `hidden` may be empty (0 rows) when hidden states are not supplied.
  /// `label` prefixes error messages, e.g. "chosen".
  TokenSeq(std::vector<std::int64_t> token_ids, std::vector<double> logp_policy,
           std::vector<double> logp_ref, Matrix hidden, const std::string& label = "seq",
           ValidationOptions opts = {})
      : token_ids_(std::move(token_ids)),
        logp_policy_(std::move(logp_policy)),
        logp_ref_(std::move(logp_ref)),
        hidden_(std::move(hidden)) {
    validate(label, opts);
    ratios_.q.resize(token_ids_.size());
    for (std::size_t i = 0; i < token_ids_.size(); ++i) {
      ratios_.q[i] = logp_policy_[i] - logp_ref_[i];
    }
  }

  std::size_t size() const noexcept { return token_ids_.size(); }
  const std::vector<std::int64_t>& token_ids() const noexcept { return token_ids_; }
  const std::vector<double>& logp_policy() const noexcept { return logp_policy_; }
  const std::vector<double>& logp_ref() const noexcept { return logp_ref_; }
  const Matrix& hidden() const noexcept { return hidden_; }
  bool has_hidden() const noexcept { return hidden_.rows() > 0; }
  std::size_t hidden_dim() const noexcept { return hidden_.cols(); }
  const LogRatioVec& ratios() const noexcept { return ratios_; }

 private:
  void validate(const std::string& label, const ValidationOptions& opts) const {
    const std::size_t n = token_ids_.size();
    if (n == 0) throw ValidationError(label + ".token_ids: response must contain at least one token");
    auto check_len = [&](const char* field, std::size_t len) {
      if (len != n) {
        throw ValidationError(label + "." + field + " has " + std::to_string(len) +
                              " entries but token_ids has " + std::to_string(n));
      }
    };
    check_len("logp_policy", logp_policy_.size());
    check_len("logp_ref", logp_ref_.size());
    auto check_values = [&](const char* field, const std::vector<double>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
          throw ValidationError(label + "." + field + "[" + std::to_string(i) + "] is not finite");
        }
        if (opts.strict_logprobs && v[i] > 0.0) {
          throw ValidationError(label + "." + field + "[" + std::to_string(i) +
                                "] is a positive log-probability (strict mode)");
        }
      }
    };
    check_values("logp_policy", logp_policy_);
    check_values("logp_ref", logp_ref_);
    if (hidden_.rows() == 0) return;
    check_len("hidden", hidden_.rows());
    if (hidden_.cols() == 0) throw ValidationError(label + ".hidden: dimension must be positive");
    for (std::size_t i = 0; i < hidden_.rows(); ++i) {
      for (double x : hidden_.row(i)) {
        if (!std::isfinite(x)) {
          throw ValidationError(label + ".hidden[" + std::to_string(i) + "] has a non-finite entry");
        }
      }
    }
  }

  std::vector<std::int64_t> token_ids_;
  std::vector<double> logp_policy_;
  std::vector<double> logp_ref_;
  Matrix hidden_;
  LogRatioVec ratios_;
};

inline LogRatioVec log_ratios(const TokenSeq& seq) { return seq.ratios(); }

class PreferencePair {
 public:
  PreferencePair() = default;
  PreferencePair(std::string pair_id, TokenSeq chosen, TokenSeq rejected)
      : pair_id_(std::move(pair_id)), chosen_(std::move(chosen)), rejected_(std::move(rejected)) {
    if (chosen_.has_hidden() != rejected_.has_hidden()) {
      throw ValidationError("pair '" + pair_id_ +
                            "': hidden states supplied for only one of chosen/rejected");
    }
    if (chosen_.has_hidden() && chosen_.hidden_dim() != rejected_.hidden_dim()) {
      throw ValidationError("pair '" + pair_id_ + "': hidden dimension mismatch (chosen " +
                            std::to_string(chosen_.hidden_dim()) + ", rejected " +
                            std::to_string(rejected_.hidden_dim()) + ")");
    }
  }

  const std::string& pair_id() const noexcept { return pair_id_; }
  const TokenSeq& chosen() const noexcept { return chosen_; }
  const TokenSeq& rejected() const noexcept { return rejected_; }
  bool has_hidden() const noexcept { return chosen_.has_hidden(); }

 private:
  std::string pair_id_;
  TokenSeq chosen_;
  TokenSeq rejected_;
};

}  // namespace otw
