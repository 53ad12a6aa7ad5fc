#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

// Sankey node/link export of a transport plan. Chosen tokens are nodes
// "C{i}" on the left, rejected tokens "R{j}" on the right; each plan entry
// above the threshold becomes a link carrying G_ij. A node's "value" is the
// sum of its emitted links; "token_weight" is the normalized token weight.

#include <string>

#include <json.hpp>

#include "otw/core.hpp"
#include "otw/ot.hpp"
#include "otw/weighting.hpp"

namespace otw {

inline nlohmann::json sankey_json(const PreferencePair& pair, const TransportPlan& plan, const TokenWeights& w,
                                  double threshold = 1e-6) {
  if (plan.rows() != pair.chosen().size() || plan.cols() != pair.rejected().size()) {
    throw ValidationError("sankey: plan shape does not match the pair");
  }
  std::vector<double> out_flow(plan.rows(), 0.0), in_flow(plan.cols(), 0.0);
  nlohmann::json links = nlohmann::json::array();
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    for (std::size_t j = 0; j < plan.cols(); ++j) {
      const double v = plan.gamma()(i, j);
      if (!(v > threshold)) continue;
      links.push_back({{"source", "C" + std::to_string(i)}, {"target", "R" + std::to_string(j)}, {"value", v}});
      out_flow[i] += v;
      in_flow[j] += v;
    }
  }
  nlohmann::json nodes = nlohmann::json::array();
  auto add = [&](char side, const TokenSeq& s, const std::vector<double>& flow, const std::vector<double>& tw) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      nodes.push_back({{"id", side + std::to_string(i)},
                       {"side", side == 'C' ? "chosen" : "rejected"},
                       {"index", i},
                       {"token", std::to_string(s.token_ids()[i])},
                       {"value", flow[i]},
                       {"token_weight", tw[i]}});
    }
  };
  add('C', pair.chosen(), out_flow, w.w_chosen);
  add('R', pair.rejected(), in_flow, w.w_rejected);
  return {{"pair_id", pair.pair_id()}, {"threshold", threshold}, {"nodes", std::move(nodes)},
          {"links", std::move(links)}};
}

}  // namespace otw
