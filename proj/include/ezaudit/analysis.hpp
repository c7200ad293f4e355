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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "ezaudit/attacks.hpp"
#include "ezaudit/metrics.hpp"
#include "ezaudit/scoring.hpp"
#include "ezaudit/stats.hpp"
#include "ezaudit/trace.hpp"

namespace ezaudit {

// exp of the mean reference NLL; the difficulty proxy used for binning.
inline double reference_perplexity(const SequenceTrace& t) {
  double nll = 0.0;
  for (const auto& r : t.tokens) nll -= r.ref_logprob;
  return std::exp(nll / static_cast<double>(t.tokens.size()));
}

// Mean delta over every position of the sequence.
inline double mean_delta(const SequenceTrace& t) { return refl_attack(t); }

namespace detail {

inline void require_aligned(std::span<const SequenceTrace> traces,
                            std::span<const double> scores) {
  if (scores.size() != traces.size()) {
    throw std::invalid_argument("scores must align one-to-one with traces");
  }
}

// Indices of labelled traces, failing if either label is absent.
inline std::vector<std::size_t> labelled_population(std::span<const SequenceTrace> traces) {
  std::vector<std::size_t> idx;
  bool has_m = false, has_n = false;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].label == Label::unknown) continue;
    has_m |= traces[i].label == Label::member;
    has_n |= traces[i].label == Label::nonmember;
    idx.push_back(i);
  }
  if (!has_m || !has_n) {
    throw std::invalid_argument("population must contain both members and nonmembers");
  }
  return idx;
}

}  // namespace detail

enum class BinMode { auc, delta_means };

struct DifficultyBin {
  std::size_t index = 0;
  double perplexity_low = 0.0;
  double perplexity_high = 0.0;
  std::size_t n_members = 0;
  std::size_t n_nonmembers = 0;
  // auc mode
  std::optional<double> auc;
  // delta_means mode: token-level deltas at error positions, pooled per label
  std::optional<double> member_mean_delta;
  std::optional<double> nonmember_mean_delta;
  std::optional<double> t_statistic;
  std::optional<double> p_value;
  std::size_t member_positions = 0;
  std::size_t nonmember_positions = 0;
  std::string flag;  // nonempty when the bin could not be evaluated
};

struct DifficultyBinReport {
  BinMode mode = BinMode::auc;
  std::size_t n_bins = 0;
  int top_k = 1;
  std::vector<DifficultyBin> bins;
  // Bin of each input trace, aligned with the input; nullopt for unknown labels.
  std::vector<std::optional<std::size_t>> assignment;
};

// Equal-population bins by reference perplexity. Sequences are ordered by
// (perplexity, id); bin b holds ranks [b*n/k, (b+1)*n/k). Unknown labels
// are left out. `scores` aligns with `traces` and is only read in auc mode.
inline DifficultyBinReport difficulty_bins(std::span<const SequenceTrace> traces,
                                           std::span<const double> scores,
                                           std::size_t n_bins, BinMode mode,
                                           int top_k = 1) {
  if (mode == BinMode::auc) detail::require_aligned(traces, scores);
  auto pop = detail::labelled_population(traces);
  if (n_bins < 1 || n_bins > pop.size()) {
    throw std::invalid_argument("n_bins must be in [1, population size]");
  }
  std::vector<double> ppl(traces.size(), 0.0);
  for (std::size_t i : pop) ppl[i] = reference_perplexity(traces[i]);
  std::stable_sort(pop.begin(), pop.end(), [&](std::size_t a, std::size_t b) {
    if (ppl[a] != ppl[b]) return ppl[a] < ppl[b];
    return traces[a].id < traces[b].id;
  });

  DifficultyBinReport rep;
  rep.mode = mode;
  rep.n_bins = n_bins;
  rep.top_k = top_k;
  rep.assignment.assign(traces.size(), std::nullopt);
  const std::size_t n = pop.size();
  for (std::size_t b = 0; b < n_bins; ++b) {
    const std::size_t lo = n * b / n_bins, hi = n * (b + 1) / n_bins;
    DifficultyBin bin;
    bin.index = b;
    bin.perplexity_low = ppl[pop[lo]];
    bin.perplexity_high = ppl[pop[hi - 1]];
    std::vector<double> ms, ns;
    for (std::size_t r = lo; r < hi; ++r) {
      const SequenceTrace& t = traces[pop[r]];
      rep.assignment[pop[r]] = b;
      const bool member = t.label == Label::member;
      ++(member ? bin.n_members : bin.n_nonmembers);
      if (mode == BinMode::auc) {
        (member ? ms : ns).push_back(scores[pop[r]]);
      } else {
        for (double d : error_deltas(t, top_k)) (member ? ms : ns).push_back(d);
      }
    }
    if (mode == BinMode::auc) {
      if (ms.empty() || ns.empty()) {
        bin.flag = "single label in bin";
      } else {
        bin.auc = auc(ms, ns);
      }
    } else {
      bin.member_positions = ms.size();
      bin.nonmember_positions = ns.size();
      if (!ms.empty()) bin.member_mean_delta = stats::mean(ms);
      if (!ns.empty()) bin.nonmember_mean_delta = stats::mean(ns);
      if (bin.n_members == 0 || bin.n_nonmembers == 0) {
        bin.flag = "single label in bin";
      } else if (ms.size() < 2 || ns.size() < 2) {
        bin.flag = "fewer than 2 error positions for a label";
      } else {
        const auto w = stats::welch_t_test(ms, ns);
        bin.t_statistic = w.t;
        bin.p_value = w.p_value;
      }
    }
    rep.bins.push_back(std::move(bin));
  }
  return rep;
}

struct GroupProfile {
  std::string name;
  std::size_t size = 0;
  std::optional<double> avg_tokens;
  std::optional<double> avg_errors;
  std::optional<double> mean_delta;
};

struct FailureReport {
  double fpr_level = 0.0;
  std::optional<double> threshold;  // nullopt: operating point rejects all
  double tpr = 0.0;
  double fpr = 0.0;
  int top_k = 1;
  // all_members, false_negatives, all_nonmembers, false_positives
  std::array<GroupProfile, 4> groups;
};

inline bool predicted_member(double score, const std::optional<double>& threshold) {
  return threshold.has_value() && score >= *threshold;
}

// Profiles the misclassified sequences at the TPR@fpr_level operating
// point. Mean delta is the per-sequence mean over all positions, averaged
// across the group.
inline FailureReport failure_modes(std::span<const SequenceTrace> traces,
                                   std::span<const double> scores, double fpr_level,
                                   int top_k = 1) {
  detail::require_aligned(traces, scores);
  const auto pop = detail::labelled_population(traces);
  std::vector<double> ms, ns;
  for (std::size_t i : pop) {
    (traces[i].label == Label::member ? ms : ns).push_back(scores[i]);
  }
  const TprAtFpr op = tpr_at_fpr(roc(ms, ns), fpr_level);

  FailureReport rep;
  rep.fpr_level = fpr_level;
  rep.threshold = op.threshold;
  rep.tpr = op.tpr;
  rep.fpr = op.fpr;
  rep.top_k = top_k;
  const std::array<const char*, 4> names = {"all_members", "false_negatives",
                                            "all_nonmembers", "false_positives"};
  std::array<double, 4> tok{}, err{}, del{};
  std::array<std::size_t, 4> cnt{};
  auto add = [&](std::size_t g, const SequenceTrace& t) {
    ++cnt[g];
    tok[g] += static_cast<double>(t.tokens.size());
    err[g] += static_cast<double>(error_count(t, top_k));
    del[g] += mean_delta(t);
  };
  for (std::size_t i : pop) {
    const SequenceTrace& t = traces[i];
    const bool positive = predicted_member(scores[i], op.threshold);
    if (t.label == Label::member) {
      add(0, t);
      if (!positive) add(1, t);
    } else {
      add(2, t);
      if (positive) add(3, t);
    }
  }
  for (std::size_t g = 0; g < 4; ++g) {
    GroupProfile& p = rep.groups[g];
    p.name = names[g];
    p.size = cnt[g];
    if (cnt[g] > 0) {
      const double c = static_cast<double>(cnt[g]);
      p.avg_tokens = tok[g] / c;
      p.avg_errors = err[g] / c;
      p.mean_delta = del[g] / c;
    }
  }
  return rep;
}

struct ErrorCountGroup {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
};

struct ErrorCountStats {
  int top_k = 1;
  ErrorCountGroup members;
  ErrorCountGroup nonmembers;
  // Point-biserial correlation of error count with membership (member = 1).
  double r = 0.0;
  bool r_defined = false;  // false when error counts have zero variance
  double p_value = 1.0;
};

inline ErrorCountStats error_count_stats(std::span<const SequenceTrace> traces, int top_k = 1) {
  const auto pop = detail::labelled_population(traces);
  std::vector<double> counts, is_member, mc, nc;
  for (std::size_t i : pop) {
    const auto e = static_cast<double>(error_count(traces[i], top_k));
    const bool member = traces[i].label == Label::member;
    counts.push_back(e);
    is_member.push_back(member ? 1.0 : 0.0);
    (member ? mc : nc).push_back(e);
  }
  ErrorCountStats s;
  s.top_k = top_k;
  s.members = {mc.size(), stats::mean(mc), stats::sample_std(mc)};
  s.nonmembers = {nc.size(), stats::mean(nc), stats::sample_std(nc)};
  if (auto r = stats::pearson(counts, is_member)) {
    s.r = *r;
    s.r_defined = true;
    s.p_value = stats::correlation_p_value(*r, counts.size());
  }
  return s;
}

inline constexpr std::array<double, 5> kKsQuantileLevels = {0.10, 0.25, 0.50, 0.75, 0.90};
inline constexpr std::size_t kKsSmallSample = 50;

struct QuantileRow {
  double level = 0.0;
  double shifted_member = 0.0;
  double nonmember = 0.0;
  double diff = 0.0;
};

struct ShiftKsReport {
  int top_k = 1;
  std::size_t n_member = 0;
  std::size_t n_nonmember = 0;
  double member_mean = 0.0;
  double nonmember_mean = 0.0;
  double shift = 0.0;  // subtracted from every member value
  double ks_statistic = 0.0;
  double p_value = 1.0;
  bool small_sample = false;  // asymptotic p-value unreliable
  std::vector<QuantileRow> quantiles;
};

// Removes the member/nonmember mean difference and compares the remaining
// shapes with a two-sample KS test plus a quantile table.
inline ShiftKsReport shift_removed_ks(std::span<const double> member_pool,
                                      std::span<const double> nonmember_pool) {
  if (member_pool.size() < 2 || nonmember_pool.size() < 2) {
    throw std::invalid_argument("KS comparison needs >= 2 values in each pool");
  }
  ShiftKsReport rep;
  rep.n_member = member_pool.size();
  rep.n_nonmember = nonmember_pool.size();
  rep.member_mean = stats::mean(member_pool);
  rep.nonmember_mean = stats::mean(nonmember_pool);
  rep.shift = rep.member_mean - rep.nonmember_mean;
  std::vector<double> m(member_pool.begin(), member_pool.end());
  for (double& v : m) v -= rep.shift;
  std::vector<double> n(nonmember_pool.begin(), nonmember_pool.end());
  std::sort(m.begin(), m.end());
  std::sort(n.begin(), n.end());
  rep.ks_statistic = stats::ks_statistic_sorted(m, n);
  rep.p_value = stats::ks_p_value(rep.ks_statistic, m.size(), n.size());
  rep.small_sample = m.size() < kKsSmallSample || n.size() < kKsSmallSample;
  for (double q : kKsQuantileLevels) {
    const double a = stats::quantile_type1(m, q), b = stats::quantile_type1(n, q);
    rep.quantiles.push_back({q, a, b, a - b});
  }
  return rep;
}

inline ShiftKsReport shift_removed_ks(std::span<const SequenceTrace> traces, int top_k = 1) {
  std::vector<double> m, n;
  for (const auto& t : traces) {
    if (t.label == Label::unknown) continue;
    auto& pool = t.label == Label::member ? m : n;
    for (double d : error_deltas(t, top_k)) pool.push_back(d);
  }
  ShiftKsReport rep = shift_removed_ks(m, n);
  rep.top_k = top_k;
  return rep;
}

// --- JSON renderings -----------------------------------------------------

inline nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return format_real(*v);
  return *v;
}

inline nlohmann::ordered_json to_json(const DifficultyBinReport& r) {
  nlohmann::ordered_json j;
  j["analysis"] = "difficulty_bins";
  j["mode"] = r.mode == BinMode::auc ? "auc" : "delta-means";
  j["n_bins"] = r.n_bins;
  j["top_k"] = r.top_k;
  j["difficulty"] = "reference perplexity exp(mean reference NLL)";
  j["binning"] = "equal population by rank, ties ordered by (perplexity, id)";
  if (r.mode == BinMode::delta_means) {
    j["test"] = "Welch two-sample t-test on error-position deltas pooled per label";
  }
  j["bins"] = nlohmann::ordered_json::array();
  for (const auto& b : r.bins) {
    nlohmann::ordered_json jb;
    jb["bin"] = b.index;
    jb["perplexity_low"] = b.perplexity_low;
    jb["perplexity_high"] = b.perplexity_high;
    jb["n_members"] = b.n_members;
    jb["n_nonmembers"] = b.n_nonmembers;
    if (r.mode == BinMode::auc) {
      jb["auc"] = opt_json(b.auc);
    } else {
      jb["member_mean_delta"] = opt_json(b.member_mean_delta);
      jb["nonmember_mean_delta"] = opt_json(b.nonmember_mean_delta);
      jb["member_positions"] = b.member_positions;
      jb["nonmember_positions"] = b.nonmember_positions;
      jb["t_statistic"] = opt_json(b.t_statistic);
      jb["p_value"] = opt_json(b.p_value);
    }
    jb["flag"] = b.flag.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(b.flag);
    j["bins"].push_back(std::move(jb));
  }
  return j;
}

inline nlohmann::ordered_json to_json(const FailureReport& r) {
  nlohmann::ordered_json j;
  j["analysis"] = "failure_modes";
  j["fpr_level"] = r.fpr_level;
  j["threshold"] = threshold_json(r.threshold);
  j["tpr"] = r.tpr;
  j["fpr"] = r.fpr;
  j["top_k"] = r.top_k;
  j["mean_delta_definition"] =
      "per-sequence mean of delta over all positions, averaged over the group";
  j["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : r.groups) {
    j["groups"].push_back({{"group", g.name},
                           {"size", g.size},
                           {"avg_tokens", opt_json(g.avg_tokens)},
                           {"avg_errors", opt_json(g.avg_errors)},
                           {"mean_delta", opt_json(g.mean_delta)}});
  }
  return j;
}

inline nlohmann::ordered_json to_json(const ErrorCountStats& s) {
  nlohmann::ordered_json j;
  j["analysis"] = "error_count_stats";
  j["top_k"] = s.top_k;
  j["members"] = {{"n", s.members.n}, {"mean_errors", s.members.mean}, {"std", s.members.std}};
  j["nonmembers"] = {
      {"n", s.nonmembers.n}, {"mean_errors", s.nonmembers.mean}, {"std", s.nonmembers.std}};
  j["point_biserial_r"] = s.r_defined ? nlohmann::ordered_json(s.r) : nlohmann::ordered_json(nullptr);
  j["r_defined"] = s.r_defined;
  j["p_value"] = s.p_value;
  j["sign_convention"] = "member = 1";
  return j;
}

inline nlohmann::ordered_json to_json(const ShiftKsReport& r) {
  nlohmann::ordered_json j;
  j["analysis"] = "shift_removed_ks";
  j["top_k"] = r.top_k;
  j["n_member"] = r.n_member;
  j["n_nonmember"] = r.n_nonmember;
  j["member_mean"] = r.member_mean;
  j["nonmember_mean"] = r.nonmember_mean;
  j["shift"] = r.shift;
  j["ks_statistic"] = r.ks_statistic;
  j["p_value"] = r.p_value;
  j["p_value_method"] = "asymptotic Kolmogorov distribution";
  j["small_sample"] = r.small_sample;
  j["quantile_estimator"] = "type 1 (inverse empirical CDF)";
  j["quantiles"] = nlohmann::ordered_json::array();
  for (const auto& q : r.quantiles) {
    j["quantiles"].push_back({{"level", q.level},
                              {"shifted_member", q.shifted_member},
                              {"nonmember", q.nonmember},
                              {"diff", q.diff}});
  }
  return j;
}

// Per-sequence intermediates: id,label,perplexity,errors,mean_delta,score,group
inline void write_sequence_csv(std::ostream& out, std::span<const SequenceTrace> traces,
                               std::span<const double> scores,
                               std::span<const std::string> groups, int top_k = 1) {
  out << "id,label,perplexity,errors,mean_delta,score,group\n";
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    out << csv_field(t.id) << ',' << label_name(t.label) << ',' << format_real(reference_perplexity(t))
        << ',' << error_count(t, top_k) << ',' << format_real(mean_delta(t)) << ','
        << (i < scores.size() ? format_real(scores[i]) : std::string()) << ','
        << (i < groups.size() ? csv_field(groups[i]) : std::string()) << '\n';
  }
}

}  // namespace ezaudit
