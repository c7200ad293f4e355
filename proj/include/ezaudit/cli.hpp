// Copyright 2026 The ez-audit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ezaudit/ablation.hpp"
#include "ezaudit/analysis.hpp"
#include "ezaudit/attacks.hpp"
#include "ezaudit/errors.hpp"
#include "ezaudit/manifest.hpp"
#include "ezaudit/metrics.hpp"
#include "ezaudit/parallel.hpp"
#include "ezaudit/scoring.hpp"
#include "ezaudit/synth.hpp"
#include "ezaudit/trace.hpp"
#include "ezaudit/version.hpp"

// Command-line front end. Exit codes: 0 success, 1 findings or data-level
// failure (violations, failed attacks), 2 usage, parse or IO failure.
// Data goes to stdout (or --out), diagnostics to stderr.
namespace ezaudit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFindings = 1;
inline constexpr int kExitFailure = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for data that parses but cannot be analysed; maps to exit 1.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// "-" writes to the caller's stdout stream.
class Output {
 public:
  Output(const std::string& path, std::ostream& stdout_stream) : path_(path) {
    if (path == "-") {
      stream_ = &stdout_stream;
    } else {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw IoError("cannot write '" + path + "'");
      stream_ = &file_;
    }
  }

  std::ostream& stream() { return *stream_; }
  bool is_file() const { return path_ != "-"; }
  const std::string& path() const { return path_; }

  void close() {
    stream_->flush();
    if (is_file()) file_.close();
    if (!*stream_ && !is_file()) throw IoError("write failure on stdout");
    if (is_file() && !file_) throw IoError("write failure on '" + path_ + "'");
  }

 private:
  std::string path_;
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

inline std::vector<AttackKind> parse_attacks(const std::vector<std::string>& names) {
  if (names.empty()) throw UsageError("--attacks needs at least one attack");
  std::vector<AttackKind> out;
  for (const auto& n : names) {
    auto k = parse_attack(n);
    if (!k) {
      std::string known;
      for (AttackKind a : kAllAttacks) known += (known.empty() ? "" : ", ") + std::string(attack_name(a));
      throw UsageError("unknown attack '" + n + "' (known: " + known + ")");
    }
    out.push_back(*k);
  }
  return out;
}

inline AttackParams check_params(int top_k, double k_percent) {
  if (top_k < 1) throw UsageError("--top-k must be >= 1");
  if (!(k_percent > 0.0 && k_percent <= 100.0)) throw UsageError("--k-percent must be in (0, 100]");
  return {top_k, k_percent};
}

inline std::optional<std::filesystem::path> manifest_target(const Output& out, bool no_manifest) {
  if (no_manifest || !out.is_file()) return std::nullopt;
  return manifest_path_for(out.path());
}

inline nlohmann::ordered_json manifest_ref(const std::optional<std::filesystem::path>& p) {
  if (!p) return nullptr;
  return p->filename().string();
}

inline void finish_manifest(RunManifest& m, const Output& out,
                            const std::optional<std::filesystem::path>& target) {
  if (!target) return;
  m.outputs.push_back(out.path());
  write_manifest(m, *target);
}

inline nlohmann::ordered_json report_header() {
  return {{"engine", kEngineName}, {"engine_version", kEngineVersion}};
}

inline std::vector<SequenceTrace> load_traces(const std::string& path) {
  return read_traces(path);
}

// Scores aligned with traces: from a score CSV when given, else computed.
inline std::vector<double> scores_for(const std::vector<SequenceTrace>& traces,
                                      const std::string& scores_csv,
                                      const std::string& attack, const AttackParams& params) {
  std::vector<double> out;
  out.reserve(traces.size());
  if (!scores_csv.empty()) {
    std::unordered_map<std::string, double> by_id;
    for (auto& s : read_scores_csv(scores_csv)) {
      if (s.attack == attack) by_id[s.sequence_id] = s.score;
    }
    for (const auto& t : traces) {
      auto it = by_id.find(t.id);
      if (it == by_id.end()) {
        throw DataError("score file has no '" + attack + "' score for sequence '" + t.id + "'");
      }
      out.push_back(it->second);
    }
    return out;
  }
  const auto kind = parse_attacks({attack}).front();
  for (const auto& t : traces) {
    try {
      out.push_back(compute_attack(t, kind, params));
    } catch (const UnsupportedAttack& e) {
      throw DataError(e.what());
    }
  }
  return out;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Membership-inference auditing engine for token-level log-probability traces",
               "ez-audit"};
  app.set_version_flag("--version", std::string(kEngineVersion));
  app.require_subcommand(1);

  int threads_flag = 0;
  auto add_threads = [&](CLI::App* sub) {
    sub->add_option("-t,--threads", threads_flag,
                    "Worker threads (default: $EZ_AUDIT_THREADS, else 1); output is identical "
                    "for any value")
        ->check(CLI::NonNegativeNumber);
  };
  bool no_manifest = false;
  std::string out_path = "-";
  auto add_out = [&](CLI::App* sub) {
    sub->add_option("-o,--out", out_path, "Output file, '-' for stdout")->capture_default_str();
    sub->add_flag("--no-manifest", no_manifest, "Do not write the <out>.manifest.json sidecar");
  };

  // validate
  auto* validate = app.add_subcommand("validate", "Check a trace file against the data model");
  std::string validate_path;
  bool validate_json = false;
  validate->add_option("traces", validate_path, "Trace file")->required();
  validate->add_flag("--json", validate_json, "Print the summary as JSON");

  // score
  auto* score = app.add_subcommand("score", "Score sequences with one or more attacks (CSV)");
  std::string score_path;
  std::vector<std::string> attack_names{"ez"};
  int top_k = 1;
  double k_percent = kDefaultMinkPercent;
  score->add_option("traces", score_path, "Trace file")->required();
  score->add_option("-a,--attacks", attack_names, "Comma-separated attacks")
      ->delimiter(',')
      ->capture_default_str();
  score->add_option("-k,--top-k", top_k, "Error set: ground-truth rank > K")->capture_default_str();
  score->add_option("--k-percent", k_percent, "Min-K%++ fraction of tokens, in (0, 100]")
      ->capture_default_str();
  add_threads(score);
  add_out(score);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a score CSV: AUC, TPR@FPR, bootstrap CIs");
  std::string eval_path;
  std::vector<double> levels = kDefaultFprLevels;
  std::size_t resamples = kDefaultResamples;
  std::uint64_t seed = 0;
  std::string roc_csv;
  eval->add_option("scores", eval_path, "Score CSV from `score`")->required();
  eval->add_option("-l,--levels", levels, "Comma-separated FPR levels in (0, 1)")
      ->delimiter(',')
      ->capture_default_str();
  eval->add_option("-b,--bootstrap", resamples, "Bootstrap resamples (>= 1)")
      ->capture_default_str();
  eval->add_option("-s,--seed", seed, "Bootstrap seed")->capture_default_str();
  eval->add_option("--roc-csv", roc_csv, "Also dump ROC points to this CSV");
  add_threads(eval);
  add_out(eval);

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Aggregation and error-definition ablations");
  std::string ablate_path;
  ablate_cmd->add_option("traces", ablate_path, "Trace file")->required();
  add_threads(ablate_cmd);
  add_out(ablate_cmd);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic traces (additive model)");
  SynthConfig cfg;
  bool no_vocab_stats = false, no_compressed_len = false;
  synth->add_option("--n-members", cfg.n_members)->capture_default_str();
  synth->add_option("--n-nonmembers", cfg.n_nonmembers)->capture_default_str();
  synth->add_option("--errors-per-seq", cfg.errors_per_seq)->capture_default_str();
  synth->add_option("--g-sigma", cfg.g_sigma, "Spread of the generalization effect")
      ->capture_default_str();
  synth->add_option("--mem-mean", cfg.mem_mean, "Mean memorization effect (members)")
      ->capture_default_str();
  synth->add_option("-s,--seed", cfg.seed)->capture_default_str();
  synth->add_option("--success-fraction", cfg.success_fraction,
                    "Fraction of rank-1 (success) positions, in [0, 1)")
      ->capture_default_str();
  synth->add_option("--success-mem-scale", cfg.success_mem_scale,
                    "Memorization multiplier at success positions")
      ->capture_default_str();
  synth->add_option("--error-rank-scale", cfg.error_rank_scale,
                    "Spread of error ranks above 2 (0 pins ranks at 2)")
      ->capture_default_str();
  synth->add_flag("--no-vocab-stats", no_vocab_stats, "Omit mu/sigma");
  synth->add_flag("--no-compressed-len", no_compressed_len, "Omit compressed_len");
  add_threads(synth);
  add_out(synth);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Diagnostic analyses");
  analyze->require_subcommand(1);
  std::string an_traces, an_scores, an_attack = "ez", an_csv, an_mode = "auc";
  std::size_t an_bins = 4;
  double an_fpr = 0.10;
  int an_top_k = 1;
  double an_k_percent = kDefaultMinkPercent;
  auto add_analysis_common = [&](CLI::App* sub, bool scored) {
    sub->add_option("traces", an_traces, "Trace file")->required();
    sub->add_option("-k,--top-k", an_top_k, "Error set: ground-truth rank > K")
        ->capture_default_str();
    if (scored) {
      sub->add_option("--scores", an_scores, "Score CSV (default: compute --attack from traces)");
      sub->add_option("-a,--attack", an_attack, "Attack whose scores are analysed")
          ->capture_default_str();
      sub->add_option("--k-percent", an_k_percent, "Min-K%++ fraction when computing scores")
          ->capture_default_str();
    }
    sub->add_option("--csv", an_csv, "Per-sequence intermediates CSV");
    add_out(sub);
  };
  auto* an_bins_cmd = analyze->add_subcommand("bins", "Per-difficulty-bin AUC or delta means");
  add_analysis_common(an_bins_cmd, true);
  an_bins_cmd->add_option("-n,--n", an_bins, "Number of bins")->capture_default_str();
  an_bins_cmd->add_option("-m,--mode", an_mode, "auc | delta-means")
      ->check(CLI::IsMember({"auc", "delta-means"}))
      ->capture_default_str();
  auto* an_fail_cmd = analyze->add_subcommand("failure", "Profile false negatives and positives");
  add_analysis_common(an_fail_cmd, true);
  an_fail_cmd->add_option("--fpr", an_fpr, "Operating FPR level")->capture_default_str();
  auto* an_err_cmd = analyze->add_subcommand("errors", "Error-count statistics by label");
  add_analysis_common(an_err_cmd, false);
  auto* an_ks_cmd = analyze->add_subcommand("ks", "Shift-removed KS test and quantiles");
  add_analysis_common(an_ks_cmd, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitFailure;
  }

  RunManifest manifest;
  manifest.command_line.assign(argv, argv + argc);
  const std::optional<int> threads_opt =
      threads_flag > 0 ? std::optional<int>(threads_flag) : std::nullopt;
  const int threads = resolve_threads(threads_opt);

  try {
    if (validate->parsed()) {
      ValidationSummary s = validate_traces(validate_path);
      if (validate_json) {
        nlohmann::ordered_json j = detail::report_header();
        j["sequences"] = s.sequences;
        j["members"] = s.members;
        j["nonmembers"] = s.nonmembers;
        j["unknown"] = s.unknown;
        j["tokens"] = s.tokens;
        j["violations"] = nlohmann::ordered_json::array();
        for (const auto& v : s.violations) {
          j["violations"].push_back(
              {{"line", v.line}, {"id", v.sequence_id}, {"field", v.field}, {"message", v.message}});
        }
        out << j.dump(2) << '\n';
      } else {
        out << "sequences: " << s.sequences << '\n'
            << "members: " << s.members << '\n'
            << "nonmembers: " << s.nonmembers << '\n'
            << "unknown: " << s.unknown << '\n'
            << "tokens: " << s.tokens << '\n'
            << "violations: " << s.violations.size() << '\n';
        for (const auto& v : s.violations) {
          out << "  line " << v.line << ": sequence '" << v.sequence_id << "': " << v.field
              << ": " << v.message << '\n';
        }
      }
      return s.clean() ? kExitOk : kExitFindings;
    }

    if (score->parsed()) {
      const auto attacks = detail::parse_attacks(attack_names);
      const AttackParams params = detail::check_params(top_k, k_percent);
      TraceReader reader(score_path);
      detail::Output o(out_path, out);
      const auto mpath = detail::manifest_target(o, no_manifest);
      std::map<std::string, std::size_t> ok, failed;
      std::vector<ScoreError> errors;
      o.stream() << kScoreCsvHeader << '\n';
      score_file(
          reader, attacks, params, threads,
          [&](const AttackScore& s) {
            ++ok[s.attack];
            write_score_row(o.stream(), s);
          },
          [&](const ScoreError& e) {
            ++failed[e.attack];
            errors.push_back(e);
          });
      o.close();
      constexpr std::size_t kShown = 20;
      for (std::size_t i = 0; i < errors.size() && i < kShown; ++i) {
        err << "error: " << errors[i].message << '\n';
      }
      if (errors.size() > kShown) err << "... and " << errors.size() - kShown << " more errors\n";
      bool any_fully_failed = false;
      for (AttackKind a : attacks) {
        const std::string name(attack_name(a));
        if (failed[name] > 0) {
          err << name << ": " << ok[name] << " scored, " << failed[name] << " failed\n";
          if (ok[name] == 0) any_fully_failed = true;
        }
      }
      manifest.add_input(score_path);
      nlohmann::ordered_json names = nlohmann::ordered_json::array();
      for (AttackKind a : attacks) names.push_back(attack_name(a));
      manifest.parameters = {{"command", "score"},
                             {"attacks", names},
                             {"top_k", params.top_k},
                             {"k_percent", params.k_percent},
                             {"threads", threads}};
      detail::finish_manifest(manifest, o, mpath);
      return any_fully_failed ? kExitFindings : kExitOk;
    }

    if (eval->parsed()) {
      if (resamples < 1) throw UsageError("--bootstrap must be >= 1");
      try {
        check_levels(levels);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      const auto scores = read_scores_csv(eval_path);
      EvalOptions opt{levels, resamples, seed, threads};
      const EvalOutcome outcome = evaluate(scores, opt);
      detail::Output o(out_path, out);
      const auto mpath = detail::manifest_target(o, no_manifest);
      nlohmann::ordered_json j = detail::report_header();
      j["levels"] = levels;
      j["manifest"] = detail::manifest_ref(mpath);
      const auto body = to_json(outcome);
      j["reports"] = body["reports"];
      j["errors"] = body["errors"];
      o.stream() << j.dump(2) << '\n';
      o.close();
      for (const auto& e : outcome.errors) err << "error: " << e.attack << ": " << e.message << '\n';
      for (const auto& r : outcome.reports) {
        if (r.n_excluded_unknown > 0) {
          err << "warning: " << r.attack << ": excluded " << r.n_excluded_unknown
              << " unknown-label scores\n";
        }
      }
      if (!roc_csv.empty()) {
        std::ofstream roc_out(roc_csv, std::ios::binary | std::ios::trunc);
        if (!roc_out) throw IoError("cannot write '" + roc_csv + "'");
        roc_out << "attack,threshold,fpr,tpr\n";
        std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
        std::vector<std::string> order;
        for (const auto& s : scores) {
          auto [it, fresh] = groups.try_emplace(s.attack);
          if (fresh) order.push_back(s.attack);
          if (s.label == Label::member) it->second.first.push_back(s.score);
          if (s.label == Label::nonmember) it->second.second.push_back(s.score);
        }
        for (const auto& name : order) {
          const auto& [m, n] = groups.at(name);
          if (m.empty() || n.empty()) continue;
          write_roc_csv(roc_out, name, roc(m, n), false);
        }
        manifest.outputs.push_back(roc_csv);
      }
      manifest.add_input(eval_path);
      manifest.seeds = {seed};
      manifest.parameters = {{"command", "eval"},
                             {"levels", levels},
                             {"resamples", resamples},
                             {"seed", seed},
                             {"rng", kRngName},
                             {"threads", threads}};
      detail::finish_manifest(manifest, o, mpath);
      if (outcome.reports.empty()) return kExitFindings;
      return kExitOk;
    }

    if (ablate_cmd->parsed()) {
      const auto traces = detail::load_traces(ablate_path);
      AblationReport rep;
      try {
        rep = ablate(traces, threads);
      } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
      }
      detail::Output o(out_path, out);
      const auto mpath = detail::manifest_target(o, no_manifest);
      nlohmann::ordered_json j = detail::report_header();
      j["manifest"] = detail::manifest_ref(mpath);
      j.update(to_json(rep));
      o.stream() << j.dump(2) << '\n';
      o.close();
      manifest.add_input(ablate_path);
      manifest.parameters = {{"command", "ablate"}, {"threads", threads}};
      detail::finish_manifest(manifest, o, mpath);
      return kExitOk;
    }

    if (synth->parsed()) {
      cfg.emit_vocab_stats = !no_vocab_stats;
      cfg.emit_compressed_len = !no_compressed_len;
      try {
        cfg.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      if (out_path == "-") {
        for (std::size_t i = 0; i < cfg.size(); ++i) out << format_trace_line(synth_trace(cfg, i)) << '\n';
        return kExitOk;
      }
      generate_to_file(cfg, out_path, threads);
      if (!no_manifest) {
        manifest.seeds = {cfg.seed};
        manifest.parameters = to_json(cfg);
        manifest.parameters["command"] = "synth";
        manifest.outputs.push_back(out_path);
        write_manifest(manifest, manifest_path_for(out_path));
      }
      return kExitOk;
    }

    if (analyze->parsed()) {
      const AttackParams params = detail::check_params(an_top_k, an_k_percent);
      const auto traces = detail::load_traces(an_traces);
      manifest.add_input(an_traces);
      nlohmann::ordered_json report;
      std::vector<double> scores;
      std::vector<std::string> groups(traces.size());
      manifest.parameters = {{"command", "analyze"}, {"top_k", an_top_k}};
      try {
        if (an_bins_cmd->parsed() || an_fail_cmd->parsed()) {
          scores = detail::scores_for(traces, an_scores, an_attack, params);
          if (!an_scores.empty()) manifest.add_input(an_scores);
          manifest.parameters["attack"] = an_attack;
          manifest.parameters["k_percent"] = an_k_percent;
        }
        if (an_bins_cmd->parsed()) {
          if (an_bins < 1) throw UsageError("--n must be >= 1");
          const BinMode mode = an_mode == "auc" ? BinMode::auc : BinMode::delta_means;
          const auto rep = difficulty_bins(traces, scores, an_bins, mode, an_top_k);
          report = to_json(rep);
          report["attack"] = mode == BinMode::auc ? nlohmann::ordered_json(an_attack) : nullptr;
          for (std::size_t i = 0; i < traces.size(); ++i) {
            if (rep.assignment[i]) groups[i] = "bin" + std::to_string(*rep.assignment[i]);
          }
          manifest.parameters["analysis"] = "bins";
          manifest.parameters["n_bins"] = an_bins;
          manifest.parameters["mode"] = an_mode;
        } else if (an_fail_cmd->parsed()) {
          if (!(an_fpr > 0.0 && an_fpr < 1.0)) throw UsageError("--fpr must be in (0, 1)");
          const auto rep = failure_modes(traces, scores, an_fpr, an_top_k);
          report = to_json(rep);
          report["attack"] = an_attack;
          for (std::size_t i = 0; i < traces.size(); ++i) {
            if (traces[i].label == Label::unknown) continue;
            const bool pos = predicted_member(scores[i], rep.threshold);
            const bool mem = traces[i].label == Label::member;
            groups[i] = mem ? (pos ? "TP" : "FN") : (pos ? "FP" : "TN");
          }
          manifest.parameters["analysis"] = "failure";
          manifest.parameters["fpr"] = an_fpr;
        } else if (an_err_cmd->parsed()) {
          report = to_json(error_count_stats(traces, an_top_k));
          for (std::size_t i = 0; i < traces.size(); ++i) groups[i] = label_name(traces[i].label);
          manifest.parameters["analysis"] = "errors";
        } else {
          report = to_json(shift_removed_ks(traces, an_top_k));
          for (std::size_t i = 0; i < traces.size(); ++i) groups[i] = label_name(traces[i].label);
          manifest.parameters["analysis"] = "ks";
        }
      } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
      }
      detail::Output o(out_path, out);
      const auto mpath = detail::manifest_target(o, no_manifest);
      nlohmann::ordered_json j = detail::report_header();
      j["manifest"] = detail::manifest_ref(mpath);
      j.update(report);
      o.stream() << j.dump(2) << '\n';
      o.close();
      if (!an_csv.empty()) {
        std::ofstream csv(an_csv, std::ios::binary | std::ios::trunc);
        if (!csv) throw IoError("cannot write '" + an_csv + "'");
        write_sequence_csv(csv, traces, scores, groups, an_top_k);
        manifest.outputs.push_back(an_csv);
      }
      detail::finish_manifest(manifest, o, mpath);
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitFindings;
  } catch (const ValidationError& e) {
    err << "error: sequence '" << e.sequence_id() << "': " << e.what() << '\n';
    return kExitFindings;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace ezaudit::cli
