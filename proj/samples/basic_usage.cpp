// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

// Loads a JSONL file of preference pairs and prints DPO and OTPO losses
// side by side.
//
//   basic_usage samples/pairs.jsonl

#include <cstdio>

#include "otw/otw.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s PAIRS.jsonl\n", argv[0]);
    return 2;
  }
  try {
    const auto pairs = otw::load_pairs(argv[1]);
    otw::LossConfig dpo{0.1, otw::scheme::Dpo{}, 0.0};
    otw::LossConfig otpo{0.1, otw::scheme::Otpo{}, 0.0};
    for (const auto& p : pairs) {
      const auto a = otw::pair_loss(p, dpo);
      const auto b = otw::pair_loss(p, otpo);
      std::printf("%-12s |y_c|=%zu |y_r|=%zu  dpo: delta=%+.5f loss=%.5f  otpo: delta=%+.5f loss=%.5f\n",
                  p.pair_id().c_str(), p.chosen().size(), p.rejected().size(), a.delta_r, a.loss, b.delta_r,
                  b.loss);
    }
  } catch (const otw::Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }
  return 0;
}
