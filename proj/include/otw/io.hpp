#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

// JSONL ingestion and serialization of preference pairs.
//
// One record per line:
//   {"pair_id": str,
//    "chosen":   {"token_ids": [int], "logp_policy": [float],
//                 "logp_ref": [float], "hidden": [[float; d]]},
//    "rejected": {...same...}}
//
// Hidden states can instead live in a sidecar binary file of little-endian
// floats (64-bit by default, 32-bit accepted) with a JSON index
//   {pair_id: {"chosen_offset": bytes, "rejected_offset": bytes,
//              "rows": |y_c| + |y_r|, "dim": d}}
// in which case the JSONL records omit "hidden".

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <tuple>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "otw/core.hpp"

namespace otw {

using json = nlohmann::json;

enum class SidecarDtype { kFloat64, kFloat32 };

struct SidecarSource {
  std::string binary_path;
  std::string index_path;
  SidecarDtype dtype = SidecarDtype::kFloat64;
};

struct LoadOptions {
  ValidationOptions validation;
  std::optional<SidecarSource> sidecar;
};

namespace detail {

inline std::vector<double> number_array(const json& j, const std::string& field) {
  if (!j.is_array()) throw ValidationError(field + ": expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw ValidationError(field + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline Matrix hidden_matrix(const json& j, const std::string& field) {
  if (!j.is_array()) throw ValidationError(field + ": expected an array of vectors");
  std::vector<std::vector<double>> rows;
  rows.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    rows.push_back(number_array(j[i], field + "[" + std::to_string(i) + "]"));
    if (rows.back().size() != rows.front().size()) {
      throw ValidationError(field + "[" + std::to_string(i) + "] has dimension " +
                            std::to_string(rows.back().size()) + ", expected " +
                            std::to_string(rows.front().size()));
    }
  }
  return Matrix::from_rows(rows);
}

inline TokenSeq seq_from_json(const json& j, const std::string& label, const ValidationOptions& opts,
                              Matrix hidden_override) {
  if (!j.is_object()) throw ValidationError(label + ": expected an object");
  auto require = [&](const char* key) -> const json& {
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError(label + "." + key + ": missing field");
    return *it;
  };
  const json& ids_j = require("token_ids");
  if (!ids_j.is_array()) throw ValidationError(label + ".token_ids: expected an array");
  std::vector<std::int64_t> ids;
  ids.reserve(ids_j.size());
  for (const auto& v : ids_j) {
    if (!v.is_number_integer()) throw ValidationError(label + ".token_ids: expected integers");
    ids.push_back(v.get<std::int64_t>());
  }
  auto lp = number_array(require("logp_policy"), label + ".logp_policy");
  auto lr = number_array(require("logp_ref"), label + ".logp_ref");
  Matrix hidden = std::move(hidden_override);
  if (auto it = j.find("hidden"); it != j.end()) {
    if (hidden.rows() > 0) {
      throw ValidationError(label + ".hidden: present both inline and in the sidecar");
    }
    hidden = hidden_matrix(*it, label + ".hidden");
  }
  return TokenSeq(std::move(ids), std::move(lp), std::move(lr), std::move(hidden), label, opts);
}

inline json seq_to_json(const TokenSeq& s) {
  json j;
  j["token_ids"] = s.token_ids();
  j["logp_policy"] = s.logp_policy();
  j["logp_ref"] = s.logp_ref();
  if (s.has_hidden()) {
    json rows = json::array();
    for (std::size_t i = 0; i < s.hidden().rows(); ++i) {
      auto r = s.hidden().row(i);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    j["hidden"] = std::move(rows);
  }
  return j;
}

inline double read_le_double(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 7; b >= 0; --b) bits = (bits << 8) | p[b];
  return std::bit_cast<double>(bits);
}

inline double read_le_float(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 3; b >= 0; --b) bits = (bits << 8) | p[b];
  return static_cast<double>(std::bit_cast<float>(bits));
}

struct SidecarEntry {
  std::uint64_t chosen_offset = 0;
  std::uint64_t rejected_offset = 0;
  std::size_t rows = 0;
  std::size_t dim = 0;
};

class Sidecar {
 public:
  explicit Sidecar(const SidecarSource& src) : dtype_(src.dtype) {
    std::ifstream bin(src.binary_path, std::ios::binary);
    if (!bin) throw ValidationError("cannot open sidecar file " + src.binary_path);
    bytes_.assign(std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>());
    std::ifstream idx(src.index_path);
    if (!idx) throw ValidationError("cannot open sidecar index " + src.index_path);
    json j;
    try {
      idx >> j;
    } catch (const json::exception& e) {
      throw ValidationError("sidecar index: " + std::string(e.what()));
    }
    if (!j.is_object()) throw ValidationError("sidecar index: expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      const json& e = it.value();
      try {
        index_[it.key()] = SidecarEntry{e.at("chosen_offset").get<std::uint64_t>(),
                                        e.at("rejected_offset").get<std::uint64_t>(),
                                        e.at("rows").get<std::size_t>(),
                                        e.at("dim").get<std::size_t>()};
      } catch (const json::exception& ex) {
        throw ValidationError("sidecar index entry '" + it.key() + "': " + ex.what());
      }
    }
  }

  /// Returns (chosen_hidden, rejected_hidden) for a pair.
  std::pair<Matrix, Matrix> lookup(const std::string& pair_id, std::size_t len_c,
                                   std::size_t len_r) const {
    auto it = index_.find(pair_id);
    if (it == index_.end()) throw ValidationError("sidecar index has no entry for '" + pair_id + "'");
    const SidecarEntry& e = it->second;
    if (e.rows != len_c + len_r) {
      throw ValidationError("sidecar rows for '" + pair_id + "' = " + std::to_string(e.rows) +
                            ", expected |y_c|+|y_r| = " + std::to_string(len_c + len_r));
    }
    if (e.dim == 0) throw ValidationError("sidecar dim for '" + pair_id + "' must be positive");
    return {block(e.chosen_offset, len_c, e.dim, pair_id),
            block(e.rejected_offset, len_r, e.dim, pair_id)};
  }

 private:
  Matrix block(std::uint64_t offset, std::size_t rows, std::size_t dim, const std::string& id) const {
    const std::size_t width = dtype_ == SidecarDtype::kFloat64 ? 8 : 4;
    const std::uint64_t need = static_cast<std::uint64_t>(rows) * dim * width;
    if (offset > bytes_.size() || need > bytes_.size() - offset) {
      throw ValidationError("sidecar block for '" + id + "' extends past end of file");
    }
    Matrix m(rows, dim);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + offset;
    auto out = m.data();
    for (std::size_t k = 0; k < out.size(); ++k, p += width) {
      out[k] = width == 8 ? read_le_double(p) : read_le_float(p);
    }
    return m;
  }

  SidecarDtype dtype_;
  std::vector<char> bytes_;
  std::map<std::string, SidecarEntry> index_;
};

}  // namespace detail

inline json pair_to_json(const PreferencePair& p) {
  json j;
  j["pair_id"] = p.pair_id();
  j["chosen"] = detail::seq_to_json(p.chosen());
  j["rejected"] = detail::seq_to_json(p.rejected());
  return j;
}

/// One canonical JSONL line (no trailing newline).
inline std::string serialize_pair(const PreferencePair& p) { return pair_to_json(p).dump(); }

/// Canonical form of an arbitrary record line: sorted keys, shortest
/// round-trip number formatting.
inline std::string canonicalize_line(const std::string& line) { return json::parse(line).dump(); }

inline PreferencePair pair_from_json(const json& j, const ValidationOptions& opts = {},
                                     const detail::Sidecar* sidecar = nullptr) {
  if (!j.is_object()) throw ValidationError("expected a JSON object");
  auto id_it = j.find("pair_id");
  if (id_it == j.end() || !id_it->is_string()) throw ValidationError("pair_id: missing or not a string");
  std::string id = id_it->get<std::string>();
  auto c_it = j.find("chosen");
  auto r_it = j.find("rejected");
  if (c_it == j.end()) throw ValidationError("chosen: missing field");
  if (r_it == j.end()) throw ValidationError("rejected: missing field");
  Matrix hc, hr;
  if (sidecar != nullptr) {
    auto len = [](const json& s) {
      auto t = s.find("token_ids");
      return (s.is_object() && t != s.end() && t->is_array()) ? t->size() : std::size_t{0};
    };
    std::tie(hc, hr) = sidecar->lookup(id, len(*c_it), len(*r_it));
  }
  TokenSeq chosen = detail::seq_from_json(*c_it, "chosen", opts, std::move(hc));
  TokenSeq rejected = detail::seq_from_json(*r_it, "rejected", opts, std::move(hr));
  return PreferencePair(std::move(id), std::move(chosen), std::move(rejected));
}

/// Parses JSONL from a stream. Blank lines are skipped; errors carry the
/// 1-based line number.
inline std::vector<PreferencePair> read_pairs(std::istream& in, const LoadOptions& opts = {}) {
  std::optional<detail::Sidecar> sidecar;
  if (opts.sidecar) sidecar.emplace(*opts.sidecar);
  std::vector<PreferencePair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      pairs.push_back(pair_from_json(j, opts.validation, sidecar ? &*sidecar : nullptr));
    } catch (const json::exception& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": parse error: " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pairs;
}

inline std::vector<PreferencePair> load_pairs(const std::string& path, const LoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return read_pairs(in, opts);
}

inline void write_pairs(std::ostream& out, const std::vector<PreferencePair>& pairs) {
  for (const auto& p : pairs) out << serialize_pair(p) << '\n';
}

inline void save_pairs(const std::string& path, const std::vector<PreferencePair>& pairs) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  write_pairs(out, pairs);
}

/// Writes hidden states to a little-endian float64 sidecar plus its index,
/// and the pairs (without inline hidden) to `jsonl_path`.
inline void save_pairs_with_sidecar(const std::string& jsonl_path, const std::string& binary_path,
                                    const std::string& index_path,
                                    const std::vector<PreferencePair>& pairs) {
  std::ofstream jl(jsonl_path), bin(binary_path, std::ios::binary), idx(index_path);
  if (!jl || !bin || !idx) throw ValidationError("cannot write sidecar outputs");
  json index = json::object();
  std::uint64_t offset = 0;
  auto put = [&](const Matrix& m) {
    for (double x : m.data()) {
      auto bits = std::bit_cast<std::uint64_t>(x);
      unsigned char buf[8];
      for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>(bits >> (8 * b));
      bin.write(reinterpret_cast<const char*>(buf), 8);
    }
    offset += m.size() * 8;
  };
  for (const auto& p : pairs) {
    json rec = pair_to_json(p);
    rec["chosen"].erase("hidden");
    rec["rejected"].erase("hidden");
    jl << rec.dump() << '\n';
    json e;
    e["chosen_offset"] = offset;
    put(p.chosen().hidden());
    e["rejected_offset"] = offset;
    put(p.rejected().hidden());
    e["rows"] = p.chosen().size() + p.rejected().size();
    e["dim"] = p.chosen().hidden_dim();
    index[p.pair_id()] = e;
  }
  idx << index.dump() << '\n';
}

}  // namespace otw
