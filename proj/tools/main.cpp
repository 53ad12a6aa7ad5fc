// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

// otw: token weighting, transport plans, losses, sensitivity sweeps and the
// toy trainer from the command line.
//
// Exit codes: 0 success, 2 input/validation error, 3 numerical failure.

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "otw/otw.hpp"

namespace {

using otw::json;

constexpr int kOk = 0;
constexpr int kInputError = 2;
constexpr int kNumericalError = 3;

struct WeightFlags {
  std::string scheme = "otpo";
  double eps1 = 1.0;
  double eps2 = 0.2;
  std::string tau_mode = "min";
  double alpha = 0.5;
  std::uint64_t seed = 0;
  std::string entropy_form = "shifted";
  std::string plan = "solve";
  int max_iters = 1000;
  double tol = 1e-9;
};

struct InputFlags {
  std::string path;
  bool strict = false;
  std::string sidecar_bin;
  std::string sidecar_index;
  std::string sidecar_dtype = "f64";
};

struct Common {
  std::string out;
  unsigned threads = 1;
};

const std::map<std::string, otw::TauMode> kTauModes = {{"min", otw::TauMode::kMinLen},
                                                       {"mean", otw::TauMode::kMeanLen},
                                                       {"max", otw::TauMode::kMaxLen},
                                                       {"length", otw::TauMode::kPerLength},
                                                       {"none", otw::TauMode::kNoNormalization}};
const std::vector<std::string> kSchemes = {"dpo",         "simpo",      "sampo", "lddpo",
                                           "uniform_min", "similarity", "otpo"};

otw::scheme::Otpo otpo_from(const WeightFlags& f) {
  otw::scheme::Otpo o;
  o.cfg.eps1 = f.eps1;
  o.cfg.eps2 = f.eps2;
  o.cfg.max_iters = f.max_iters;
  o.cfg.tol = f.tol;
  o.cfg.entropy = f.entropy_form == "plain" ? otw::EntropyForm::kPlain : otw::EntropyForm::kShifted;
  o.tau_mode = kTauModes.at(f.tau_mode);
  o.plan = f.plan == "uniform" ? otw::PlanSource::kUniform : otw::PlanSource::kSolve;
  o.cfg.validate();
  return o;
}

otw::WeightScheme scheme_from(const std::string& name, const WeightFlags& f) {
  if (name == "dpo") return otw::scheme::Dpo{};
  if (name == "simpo") return otw::scheme::SimPo{};
  if (name == "sampo") return otw::scheme::SamPo{f.seed};
  if (name == "lddpo") {
    if (!(f.alpha >= 0.0 && f.alpha <= 1.0)) throw otw::ValidationError("--alpha must lie in [0, 1]");
    return otw::scheme::LdDpo{f.alpha};
  }
  if (name == "uniform_min") return otw::scheme::UniformMin{};
  if (name == "similarity") return otw::scheme::Similarity{};
  if (name == "otpo") return otpo_from(f);
  throw otw::ValidationError("unknown scheme '" + name + "'");
}

void add_weight_flags(CLI::App* cmd, WeightFlags& f, bool with_scheme) {
  if (with_scheme) {
    cmd->add_option("--scheme", f.scheme, "Weighting scheme")->check(CLI::IsMember(kSchemes))->capture_default_str();
  }
  cmd->add_option("--eps1", f.eps1, "Entropy weight")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--eps2", f.eps2, "Marginal KL weight")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--tau-mode", f.tau_mode, "Weight normalization")
      ->check(CLI::IsMember({"min", "mean", "max", "length", "none"}))
      ->capture_default_str();
  cmd->add_option("--entropy-form", f.entropy_form, "Entropy convention")
      ->check(CLI::IsMember({"plain", "shifted"}))
      ->capture_default_str();
  cmd->add_option("--max-iters", f.max_iters, "Solver iteration limit")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--tol", f.tol, "Solver tolerance (log-domain sup norm)")->check(CLI::PositiveNumber)->capture_default_str();
  if (with_scheme) {
    cmd->add_option("--alpha", f.alpha, "LDDPO tail weight")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    cmd->add_option("--seed", f.seed, "SamPO sampling seed")->capture_default_str();
    cmd->add_option("--plan", f.plan, "Plan source for otpo")
        ->check(CLI::IsMember({"solve", "uniform"}))
        ->capture_default_str();
  }
}

void add_input_flags(CLI::App* cmd, InputFlags& in) {
  cmd->add_option("input", in.path, "Preference pairs (JSONL)")->required();
  cmd->add_flag("--strict", in.strict, "Reject log-probabilities above zero");
  cmd->add_option("--sidecar-bin", in.sidecar_bin, "Binary hidden-state sidecar");
  cmd->add_option("--sidecar-index", in.sidecar_index, "JSON index for the sidecar");
  cmd->add_option("--sidecar-dtype", in.sidecar_dtype, "Sidecar float width")
      ->check(CLI::IsMember({"f64", "f32"}))
      ->capture_default_str();
}

void add_common(CLI::App* cmd, Common& c, const char* out_help) {
  cmd->add_option("-o,--out", c.out, out_help);
  cmd->add_option("--threads", c.threads, "Worker threads (default $OTW_THREADS or 1)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

/// Default worker count from OTW_THREADS; --threads overrides it.
unsigned threads_from_env() {
  const char* v = std::getenv("OTW_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  unsigned n = 0;
  const char* end = v + std::strlen(v);
  const auto res = std::from_chars(v, end, n);
  if (res.ec != std::errc{} || res.ptr != end || n == 0) {
    throw otw::ValidationError(std::string("OTW_THREADS: '") + v + "' is not a positive integer");
  }
  return n;
}

std::vector<otw::PreferencePair> read_input(const InputFlags& in) {
  otw::LoadOptions opts;
  opts.validation.strict_logprobs = in.strict;
  if (!in.sidecar_bin.empty() || !in.sidecar_index.empty()) {
    if (in.sidecar_bin.empty() || in.sidecar_index.empty()) {
      throw otw::ValidationError("--sidecar-bin and --sidecar-index must be given together");
    }
    opts.sidecar = otw::SidecarSource{in.sidecar_bin, in.sidecar_index,
                                      in.sidecar_dtype == "f32" ? otw::SidecarDtype::kFloat32
                                                                : otw::SidecarDtype::kFloat64};
  }
  auto pairs = otw::load_pairs(in.path, opts);
  if (pairs.empty()) throw otw::ValidationError(in.path + ": no preference pairs");
  return pairs;
}

/// Writes to the file named by `path`, or stdout when empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw otw::ValidationError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::vector<double> parse_grid(const std::string& text, const char* flag) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || !(v > 0.0)) throw std::invalid_argument(item);
      grid.push_back(v);
    } catch (const std::exception&) {
      throw otw::ValidationError(std::string(flag) + ": '" + item + "' is not a positive number");
    }
  }
  if (grid.empty()) throw otw::ValidationError(std::string(flag) + ": empty grid");
  return grid;
}

int cmd_weights(const InputFlags& in, const WeightFlags& wf, const Common& c) {
  const auto scheme = scheme_from(wf.scheme, wf);
  const auto pairs = read_input(in);
  std::vector<otw::TokenWeights> w(pairs.size());
  otw::parallel_for(pairs.size(), c.threads, [&](std::size_t i) { w[i] = otw::weights(pairs[i], scheme); });
  Output out(c.out);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out.stream() << otw::weights_to_json(pairs[i].pair_id(), w[i]).dump() << '\n';
  }
  return kOk;
}

int cmd_plan(const InputFlags& in, const WeightFlags& wf, const Common& c, const std::string& pair_id,
             bool sankey, double threshold) {
  auto o = otpo_from(wf);
  const auto pairs = read_input(in);
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pair_id.empty() || pairs[i].pair_id() == pair_id) selected.push_back(i);
  }
  if (selected.empty()) throw otw::ValidationError("unknown pair-id '" + pair_id + "'");
  Output out(c.out);
  for (std::size_t i : selected) {
    const auto& p = pairs[i];
    if (!p.has_hidden()) throw otw::ValidationError("pair '" + p.pair_id() + "' has no hidden states");
    const auto plan = otw::solve_uot(otw::cost_matrix(p.chosen().hidden(), p.rejected().hidden()), o.cfg);
    json j;
    if (sankey) {
      auto w = otw::normalize(plan, p.chosen().size(), p.rejected().size(), o.tau_mode);
      j = otw::sankey_json(p, plan, w, threshold);
    } else {
      j = otw::plan_to_json(plan, threshold);
      j["pair_id"] = p.pair_id();
    }
    out.stream() << j.dump() << '\n';
  }
  return kOk;
}

int cmd_loss(const InputFlags& in, const WeightFlags& wf, const Common& c, double beta, double simpo_gamma) {
  otw::LossConfig cfg{beta, scheme_from(wf.scheme, wf), simpo_gamma};
  cfg.validate();
  const auto pairs = read_input(in);
  const auto reports = otw::pair_losses(pairs, cfg, c.threads);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (!std::isfinite(reports[i].loss)) {
      throw otw::NumericalError("pair '" + pairs[i].pair_id() + "': non-finite loss");
    }
  }
  Output out(c.out);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out.stream() << otw::report_to_json(pairs[i].pair_id(), reports[i]).dump() << '\n';
  }
  out.stream() << otw::batch_to_json(otw::summarize(reports)).dump() << '\n';
  return kOk;
}

int cmd_sweep(const InputFlags& in, const WeightFlags& wf, const Common& c, const std::string& eps1_grid,
              const std::string& eps2_grid, double beta) {
  const auto g1 = parse_grid(eps1_grid, "--eps1-grid");
  const auto g2 = parse_grid(eps2_grid, "--eps2-grid");
  const auto base = otpo_from(wf);
  const auto pairs = read_input(in);
  Output out(c.out);
  auto& os = out.stream();
  os << "eps1,eps2,metric,value\n";
  for (double e1 : g1) {
    for (double e2 : g2) {
      const auto p = otw::sweep_point(pairs, e1, e2, base, beta, c.threads);
      for (const auto& [name, value] : otw::sweep_metrics(p)) {
        os << otw::format_double(e1) << ',' << otw::format_double(e2) << ',' << name << ','
           << otw::format_double(value) << '\n';
      }
    }
  }
  return kOk;
}

struct ToyFlags {
  otw::lab::SynthConfig synth;
  std::string schemes = "otpo";
  double beta = 0.1;
  double simpo_gamma = 0.0;
  int steps = otw::lab::kDefaultSteps;
  double lr = otw::lab::kDefaultLr;
  std::string corpus_out;
};

int cmd_train_toy(const ToyFlags& t, const WeightFlags& wf, const Common& c) {
  if (t.steps < 1) throw otw::ValidationError("--steps must be at least 1");
  if (!(t.lr >= 0.0)) throw otw::ValidationError("--lr must be >= 0");
  if (c.out.empty()) throw otw::ValidationError("--out PREFIX is required for train-toy");
  std::vector<std::string> names;
  {
    std::stringstream ss(t.schemes);
    std::string s;
    while (std::getline(ss, s, ',')) {
      if (std::find(kSchemes.begin(), kSchemes.end(), s) == kSchemes.end()) {
        throw otw::ValidationError("unknown scheme '" + s + "'");
      }
      names.push_back(s);
    }
  }
  if (names.empty()) throw otw::ValidationError("--scheme: no schemes given");
  std::vector<otw::WeightScheme> schemes;
  for (const auto& n : names) schemes.push_back(scheme_from(n, wf));

  const auto pairs = otw::lab::generate(t.synth);
  if (!t.corpus_out.empty()) otw::save_pairs(t.corpus_out, pairs);
  const auto ref = otw::lab::reference_policy(t.synth);

  json summary;
  summary["seed"] = t.synth.seed;
  summary["num_pairs"] = pairs.size();
  summary["runs"] = json::object();
  for (std::size_t k = 0; k < names.size(); ++k) {
    otw::LossConfig cfg{t.beta, schemes[k], t.simpo_gamma};
    const auto res = otw::lab::train(ref, pairs, cfg, t.steps, t.lr, c.threads);
    Output csv(c.out + "." + names[k] + ".csv");
    csv.stream() << otw::lab::report_csv(res.report);
    summary["runs"][names[k]] = otw::lab::report_summary(res.report);
  }
  Output js(c.out + ".json");
  js.stream() << summary.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal-transport token weighting for preference optimization"};
  app.set_version_flag("--version", std::string(otw::kVersion));
  app.set_config("--config", "", "Config file of key=value lines ([subcommand] sections)");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  InputFlags in;
  WeightFlags wf;
  Common common;
  try {
    common.threads = threads_from_env();
  } catch (const otw::ValidationError& e) {
    std::cerr << "otw: " << e.what() << '\n';
    return kInputError;
  }

  auto* weights = app.add_subcommand("weights", "Per-pair token weights as JSONL");
  add_input_flags(weights, in);
  add_weight_flags(weights, wf, true);
  add_common(weights, common, "Output file (default stdout)");

  std::string pair_id;
  bool sankey = false;
  double threshold = 1e-6;
  auto* plan = app.add_subcommand("plan", "Transport plan (or Sankey nodes/links) as JSON");
  add_input_flags(plan, in);
  add_weight_flags(plan, wf, false);
  add_common(plan, common, "Output file (default stdout)");
  plan->add_option("--pair-id", pair_id, "Only this pair (default: every pair, one line each)");
  plan->add_flag("--sankey", sankey, "Emit Sankey nodes and links");
  plan->add_option("--threshold", threshold, "Drop plan entries at or below this value")->capture_default_str();

  double beta = 0.1;
  double simpo_gamma = 0.0;
  auto* loss = app.add_subcommand("loss", "Per-pair loss reports plus an aggregate line");
  add_input_flags(loss, in);
  add_weight_flags(loss, wf, true);
  add_common(loss, common, "Output file (default stdout)");
  loss->add_option("--beta", beta, "Inverse temperature")->check(CLI::PositiveNumber)->capture_default_str();
  loss->add_option("--simpo-gamma", simpo_gamma, "SimPO margin")->check(CLI::NonNegativeNumber)->capture_default_str();

  std::string eps1_grid = "0.1,1";
  std::string eps2_grid = "0.2";
  auto* sweep = app.add_subcommand("sweep", "eps1/eps2 sensitivity statistics as CSV");
  add_input_flags(sweep, in);
  add_weight_flags(sweep, wf, false);
  add_common(sweep, common, "Output file (default stdout)");
  sweep->add_option("--eps1-grid", eps1_grid, "Comma-separated eps1 values")->capture_default_str();
  sweep->add_option("--eps2-grid", eps2_grid, "Comma-separated eps2 values")->capture_default_str();
  sweep->add_option("--beta", beta, "Inverse temperature for margins")->check(CLI::PositiveNumber)->capture_default_str();

  ToyFlags toy;
  auto* train = app.add_subcommand("train-toy", "Synthetic corpus + bigram policy training");
  add_weight_flags(train, wf, false);
  add_common(train, common, "Output prefix: writes PREFIX.<scheme>.csv and PREFIX.json");
  train->add_option("--scheme", toy.schemes, "Scheme or comma-separated schemes to train")->capture_default_str();
  train->add_option("--alpha", wf.alpha, "LDDPO tail weight")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  train->add_option("--sampo-seed", wf.seed, "SamPO sampling seed")->capture_default_str();
  train->add_option("--beta", toy.beta, "Inverse temperature")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--simpo-gamma", toy.simpo_gamma, "SimPO margin")->check(CLI::NonNegativeNumber)->capture_default_str();
  train->add_option("--steps", toy.steps, "Gradient steps")->capture_default_str();
  train->add_option("--lr", toy.lr, "Learning rate")->capture_default_str();
  train->add_option("--vocab", toy.synth.vocab_size, "Vocabulary size")->capture_default_str();
  train->add_option("--dim", toy.synth.d, "Hidden dimension")->capture_default_str();
  train->add_option("--pairs", toy.synth.num_pairs, "Number of pairs")->capture_default_str();
  train->add_option("--shared-span", toy.synth.shared_span_len, "Shared span length")->capture_default_str();
  train->add_option("--filler-len", toy.synth.filler_len, "Mean content length per response")->capture_default_str();
  train->add_option("--length-jitter", toy.synth.length_jitter, "Content and padding length jitter")->capture_default_str();
  train->add_option("--length-bias", toy.synth.length_bias, "Expected |y_c| - |y_r|")->capture_default_str();
  train->add_option("--noise", toy.synth.noise_scale, "Hidden-state noise scale")->capture_default_str();
  train->add_option("--pad-noise", toy.synth.pad_noise_scale, "Hidden-state noise scale of padding tokens")->capture_default_str();
  train->add_option("--synth-seed", toy.synth.seed, "Corpus seed")->capture_default_str();
  train->add_option("--corpus-out", toy.corpus_out, "Also write the generated corpus as JSONL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (weights->parsed()) return cmd_weights(in, wf, common);
    if (plan->parsed()) return cmd_plan(in, wf, common, pair_id, sankey, threshold);
    if (loss->parsed()) return cmd_loss(in, wf, common, beta, simpo_gamma);
    if (sweep->parsed()) return cmd_sweep(in, wf, common, eps1_grid, eps2_grid, beta);
    if (train->parsed()) return cmd_train_toy(toy, wf, common);
  } catch (const otw::ValidationError& e) {
    std::cerr << "otw: " << e.what() << '\n';
    return kInputError;
  } catch (const otw::NumericalError& e) {
    std::cerr << "otw: numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "otw: " << e.what() << '\n';
    return kNumericalError;
  }
  return kInputError;
}
