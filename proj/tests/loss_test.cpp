// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace otw {
namespace {

using testing::random_pair;
using testing::rel_err;

TokenWeights make_weights(std::vector<double> c, std::vector<double> r) {
  TokenWeights w;
  w.w_chosen = std::move(c);
  w.w_rejected = std::move(r);
  return w;
}

/// A pair whose two responses are the same sequence.
PreferencePair mirror_pair(std::uint64_t seed, std::size_t len) {
  std::mt19937_64 rng(seed);
  const TokenSeq s = testing::random_seq(rng, len, 4, "chosen");
  return PreferencePair("mirror", s, s);
}

TEST(Softplus, StableAtExtremes) {
  EXPECT_DOUBLE_EQ(softplus(0.0), std::log(2.0));
  EXPECT_EQ(softplus(800.0), 800.0);
  EXPECT_GT(softplus(-800.0), -1.0);
  EXPECT_LT(softplus(-800.0), 1e-300);
  EXPECT_NEAR(softplus(-30.0), std::exp(-30.0), 1e-25);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
  EXPECT_EQ(sigmoid(800.0), 1.0);
}

TEST(WeightedDelta, UnitWeightsAreUnweightedSum) {
  const std::vector<double> qc = {0.3, -0.2, 1.5}, qr = {0.1, 0.4};
  const double d = weighted_delta_r(qc, qr, std::vector<double>(3, 1.0), std::vector<double>(2, 1.0));
  EXPECT_DOUBLE_EQ(d, (0.3 - 0.2 + 1.5) - (0.1 + 0.4));
}

TEST(WeightedDelta, Arithmetic) {
  const LogRatioVec qc{{0.2, -0.1}}, qr{{0.3}};
  EXPECT_NEAR(weighted_delta_r(qc, qr, make_weights({0.5, 0.5}, {1.0})), -0.25, 1e-15);
}

TEST(WeightedDelta, LengthMismatch) {
  const std::vector<double> q = {0.1, 0.2};
  EXPECT_THROW(weighted_delta_r(q, q, std::vector<double>(3, 1.0), std::vector<double>(2, 1.0)), ValidationError);
}

TEST(WeightedDelta, MatchesTokenPairDoubleSum) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> len(1, 9);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t lc = len(rng), lr = len(rng);
    const TransportPlan plan(testing::random_matrix(rng, lc, lr, 0.0, 2.0));
    std::vector<double> qc(lc), qr(lr);
    for (double& x : qc) x = n(rng);
    for (double& x : qr) x = n(rng);
    double pairwise = 0.0;
    for (std::size_t i = 0; i < lc; ++i) {
      for (std::size_t j = 0; j < lr; ++j) pairwise += plan.gamma()(i, j) * (qc[i] - qr[j]);
    }
    const auto w = normalize(plan, lc, lr, TauMode::kNoNormalization);
    EXPECT_LE(std::abs(weighted_delta_r(qc, qr, w.w_chosen, w.w_rejected) - pairwise),
              1e-10 * std::max(1.0, std::abs(pairwise)));
  }
}

TEST(PairLoss, ZeroDeltaIsLogTwo) {
  for (double beta : {0.01, 0.1, 1.0, 5.0}) {
    LossConfig cfg{beta, scheme::Otpo{}};
    const auto r = pair_loss(mirror_pair(2, 6), cfg);
    EXPECT_NEAR(r.delta_r, 0.0, 1e-12);
    EXPECT_NEAR(r.loss, std::log(2.0), 1e-6);
  }
  LossConfig dpo{0.1, scheme::Dpo{}};
  EXPECT_NEAR(pair_loss(mirror_pair(3, 4), dpo).loss, 0.693147, 1e-6);
}

TEST(PairLoss, ReportInvariants) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_pair(rng, "r" + std::to_string(trial));
    for (const auto& s : testing::five_schemes()) {
      LossConfig cfg{0.3, s, 0.5};
      const auto w = weights(p, s);
      const auto r = pair_loss(p, cfg, w);
      EXPECT_GE(r.loss, 0.0);
      double sc = 0.0, sr = 0.0;
      for (std::size_t i = 0; i < r.grad_q_chosen.size(); ++i) {
        EXPECT_EQ(r.grad_q_chosen[i], r.dloss_ddelta * w.w_chosen[i]);
        sc += r.per_token_chosen[i];
      }
      for (std::size_t j = 0; j < r.grad_q_rejected.size(); ++j) {
        EXPECT_EQ(r.grad_q_rejected[j], -r.dloss_ddelta * w.w_rejected[j]);
        sr += r.per_token_rejected[j];
      }
      EXPECT_NEAR(r.delta_r, sc - sr, 1e-12 * std::max(1.0, std::abs(r.delta_r)));
      const double z = cfg.beta * r.delta_r - cfg.margin();
      EXPECT_NEAR(r.dloss_ddelta, -cfg.beta / (1.0 + std::exp(z)), 1e-15);
    }
  }
}

TEST(PairLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_pair(rng, "fd" + std::to_string(trial), 8, 4);
    for (const auto& s : testing::five_schemes()) {
      LossConfig cfg{0.5, s, 0.3};
      const auto r = pair_loss(p, cfg);
      for (std::size_t i = 0; i < p.chosen().size(); ++i) {
        EXPECT_LT(rel_err(r.grad_q_chosen[i], testing::fd_pair_loss(p, cfg, true, i), 1e-9), 1e-5)
            << scheme_name(s) << " chosen " << i;
      }
      for (std::size_t j = 0; j < p.rejected().size(); ++j) {
        EXPECT_LT(rel_err(r.grad_q_rejected[j], testing::fd_pair_loss(p, cfg, false, j), 1e-9), 1e-5)
            << scheme_name(s) << " rejected " << j;
      }
    }
  }
}

TEST(PairLoss, SimPoUsesPolicyLogProbsAndMargin) {
  PreferencePair p("s", TokenSeq({1, 2}, {-1.0, -3.0}, {-9.0, -9.0}, Matrix()),
                   TokenSeq({3}, {-4.0}, {-0.5}, Matrix()));
  LossConfig cfg{2.0, scheme::SimPo{}, 1.5};
  EXPECT_FALSE(cfg.uses_reference());
  const auto r = pair_loss(p, cfg);
  EXPECT_DOUBLE_EQ(r.delta_r, -2.0 - -4.0);
  EXPECT_NEAR(r.loss, std::log1p(std::exp(-(2.0 * 2.0 - 1.5))), 1e-15);
  // the margin only applies to SimPO
  LossConfig dpo{2.0, scheme::Dpo{}, 1.5};
  EXPECT_EQ(dpo.margin(), 0.0);
  EXPECT_DOUBLE_EQ(pair_loss(p, dpo).delta_r, (8.0 + 6.0) - (-3.5));
}

TEST(PairLoss, StrictlyDecreasingInDelta) {
  TokenWeights w = make_weights({1.0}, {1.0});
  double prev = std::numeric_limits<double>::infinity();
  for (double d = -50.0; d <= 50.0; d += 0.25) {
    const std::vector<double> qc = {d}, qr = {0.0};
    const double loss = loss_from_inputs(qc, qr, w, 0.1, 0.0).loss;
    EXPECT_LT(loss, prev) << "delta " << d;
    prev = loss;
  }
}

TEST(PairLoss, BetaScalingAtZeroDelta) {
  const auto p = mirror_pair(5, 3);
  const auto a = pair_loss(p, LossConfig{0.2, scheme::Dpo{}});
  const auto b = pair_loss(p, LossConfig{0.4, scheme::Dpo{}});
  EXPECT_DOUBLE_EQ(a.loss, std::log(2.0));
  EXPECT_DOUBLE_EQ(b.loss, std::log(2.0));
  EXPECT_DOUBLE_EQ(b.dloss_ddelta, 2.0 * a.dloss_ddelta);
}

TEST(PairLoss, OtpoGradientProportionalToWeights) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const auto p = random_pair(rng, "g" + std::to_string(trial));
    LossConfig cfg{0.1, scheme::Otpo{}};
    const auto w = weights(p, cfg.scheme);
    const auto r = pair_loss(p, cfg, w);
    for (std::size_t i = 0; i < w.w_chosen.size(); ++i) {
      for (std::size_t k = 0; k < w.w_chosen.size(); ++k) {
        if (w.w_chosen[k] <= 0.0) continue;
        const double lhs = std::abs(r.grad_q_chosen[i]) / std::abs(r.grad_q_chosen[k]);
        EXPECT_LE(rel_err(lhs, w.w_chosen[i] / w.w_chosen[k]), 1e-12);
      }
    }
  }
}

TEST(PairLoss, UniformPlanReproducesDpo) {
  std::mt19937_64 rng(12);
  scheme::Otpo uniform;
  uniform.plan = PlanSource::kUniform;
  uniform.tau_mode = TauMode::kNoNormalization;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial % 9;
    const auto p = random_pair(rng, n, n, 3, "u");
    const auto a = pair_loss(p, LossConfig{0.1, scheme::Dpo{}});
    const auto b = pair_loss(p, LossConfig{0.1, uniform});
    EXPECT_LE(std::abs(a.loss - b.loss), 1e-12);
    EXPECT_LE(std::abs(a.delta_r - b.delta_r), 1e-12);
    EXPECT_LE(std::abs(a.dloss_ddelta - b.dloss_ddelta), 1e-12);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_LE(std::abs(a.grad_q_chosen[i] - b.grad_q_chosen[i]), 1e-12);
      EXPECT_LE(std::abs(a.grad_q_rejected[i] - b.grad_q_rejected[i]), 1e-12);
      EXPECT_LE(std::abs(a.per_token_chosen[i] - b.per_token_chosen[i]), 1e-12);
      EXPECT_LE(std::abs(a.per_token_rejected[i] - b.per_token_rejected[i]), 1e-12);
    }
  }
}

TEST(BatchLoss, SingletonEqualsPairLoss) {
  std::mt19937_64 rng(14);
  const std::vector<PreferencePair> one = {random_pair(rng, "one")};
  LossConfig cfg{0.1, scheme::Otpo{}};
  const auto r = pair_loss(one[0], cfg);
  const auto b = batch_loss(one, cfg);
  EXPECT_EQ(b.count, 1u);
  EXPECT_EQ(b.mean_loss, r.loss);
  EXPECT_EQ(b.mean_delta_r, r.delta_r);
  EXPECT_EQ(b.mean_grad_norm, grad_norm(r));
}

TEST(BatchLoss, DuplicatesMatchSingleton) {
  std::mt19937_64 rng(15);
  const auto p = random_pair(rng, "dup");
  LossConfig cfg{0.1, scheme::Dpo{}};
  const std::vector<PreferencePair> one = {p}, many(7, p);
  const auto a = batch_loss(one, cfg), b = batch_loss(many, cfg);
  EXPECT_NEAR(a.mean_loss, b.mean_loss, 1e-15);
  EXPECT_NEAR(a.mean_delta_r, b.mean_delta_r, 1e-14);
  EXPECT_NEAR(a.mean_grad_norm, b.mean_grad_norm, 1e-15);
}

TEST(BatchLoss, MeanOfThirtyTwo) {
  std::mt19937_64 rng(16);
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 32; ++i) pairs.push_back(random_pair(rng, "m" + std::to_string(i)));
  LossConfig cfg{0.2, scheme::Otpo{}};
  double loss = 0.0, delta = 0.0, grad = 0.0;
  for (const auto& p : pairs) {
    const auto r = pair_loss(p, cfg);
    loss += r.loss;
    delta += r.delta_r;
    double g = 0.0;
    for (double x : r.grad_q_chosen) g += x * x;
    for (double x : r.grad_q_rejected) g += x * x;
    grad += std::sqrt(g);
  }
  const auto b = batch_loss(pairs, cfg, 4);
  EXPECT_NEAR(b.mean_loss, loss / 32.0, 1e-12);
  EXPECT_NEAR(b.mean_delta_r, delta / 32.0, 1e-12);
  EXPECT_NEAR(b.mean_grad_norm, grad / 32.0, 1e-12);
  const auto serial = batch_loss(pairs, cfg, 1);
  EXPECT_EQ(serial.mean_loss, b.mean_loss);
  EXPECT_EQ(serial.mean_delta_r, b.mean_delta_r);
}

TEST(BatchLoss, EmptyBatch) {
  EXPECT_THROW(batch_loss(std::vector<PreferencePair>{}, LossConfig{}), ValidationError);
  EXPECT_THROW(summarize(std::vector<LossReport>{}), ValidationError);
}

TEST(LossConfig, Validation) {
  EXPECT_THROW((LossConfig{0.0}).validate(), ValidationError);
  EXPECT_THROW((LossConfig{0.1, scheme::SimPo{}, -1.0}).validate(), ValidationError);
  EXPECT_NO_THROW(LossConfig{}.validate());
}

TEST(LossJson, AggregateLine) {
  BatchLoss b{0.5, 0.1, 0.2, 3};
  const auto j = batch_to_json(b);
  EXPECT_EQ(j["aggregate"], true);
  EXPECT_EQ(j["count"], 3);
  EXPECT_EQ(j["mean_loss"], 0.5);
}

}  // namespace
}  // namespace otw
