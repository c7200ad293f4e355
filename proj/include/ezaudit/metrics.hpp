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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "ezaudit/attacks.hpp"
#include "ezaudit/parallel.hpp"
#include "ezaudit/real.hpp"
#include "ezaudit/rng.hpp"

namespace ezaudit {

namespace detail {

inline void require_groups(std::span<const double> members,
                           std::span<const double> nonmembers) {
  if (members.empty()) throw std::invalid_argument("no member scores");
  if (nonmembers.empty()) throw std::invalid_argument("no nonmember scores");
  for (double v : members) {
    if (!is_valid_score(v)) throw std::invalid_argument("NaN member score");
  }
  for (double v : nonmembers) {
    if (!is_valid_score(v)) throw std::invalid_argument("NaN nonmember score");
  }
}

inline std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

// Mann-Whitney AUC: P(member > nonmember) + 0.5 P(tie). Infinite scores
// compare like any other value, so two +inf scores tie.
inline double auc(std::span<const double> members, std::span<const double> nonmembers) {
  detail::require_groups(members, nonmembers);
  const auto m = detail::sorted_copy(members);
  const auto n = detail::sorted_copy(nonmembers);
  std::uint64_t twice_wins = 0;
  std::size_t below = 0;     // nonmembers < current member
  std::size_t not_above = 0; // nonmembers <= current member
  for (double v : m) {
    while (below < n.size() && n[below] < v) ++below;
    if (not_above < below) not_above = below;
    while (not_above < n.size() && n[not_above] <= v) ++not_above;
    twice_wins += 2 * below + (not_above - below);
  }
  return static_cast<double>(twice_wins) /
         (2.0 * static_cast<double>(m.size()) * static_cast<double>(n.size()));
}

// The rule is "member iff score >= threshold". The first point has no
// threshold: it rejects every sequence, including +inf scores.
struct RocPoint {
  std::optional<double> threshold;
  std::size_t false_positives = 0;
  std::size_t true_positives = 0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // strictest to loosest
  std::size_t n_members = 0;
  std::size_t n_nonmembers = 0;
};

inline RocCurve roc(std::span<const double> members, std::span<const double> nonmembers) {
  detail::require_groups(members, nonmembers);
  auto m = detail::sorted_copy(members);
  auto n = detail::sorted_copy(nonmembers);
  std::reverse(m.begin(), m.end());
  std::reverse(n.begin(), n.end());
  RocCurve c;
  c.n_members = m.size();
  c.n_nonmembers = n.size();
  const double nm = static_cast<double>(m.size());
  const double nn = static_cast<double>(n.size());
  c.points.push_back({std::nullopt, 0, 0, 0.0, 0.0});
  std::size_t i = 0, j = 0;
  while (i < m.size() || j < n.size()) {
    double tau;
    if (i == m.size()) tau = n[j];
    else if (j == n.size()) tau = m[i];
    else tau = std::max(m[i], n[j]);
    while (i < m.size() && m[i] == tau) ++i;
    while (j < n.size() && n[j] == tau) ++j;
    c.points.push_back({tau, j, i, static_cast<double>(j) / nn,
                        static_cast<double>(i) / nm});
  }
  return c;
}

struct TprAtFpr {
  double tpr = 0.0;
  double fpr = 0.0;
  std::optional<double> threshold;
};

// Largest empirical TPR with FPR <= alpha, no interpolation. Among points
// reaching that TPR, the loosest threshold is returned.
inline TprAtFpr tpr_at_fpr(const RocCurve& curve, double alpha) {
  if (curve.points.empty()) throw std::invalid_argument("empty ROC curve");
  TprAtFpr best{curve.points.front().tpr, curve.points.front().fpr,
                curve.points.front().threshold};
  for (const RocPoint& p : curve.points) {
    if (p.fpr <= alpha && p.tpr >= best.tpr) best = {p.tpr, p.fpr, p.threshold};
  }
  return best;
}

// Pooled scores reduced to integer ranks over their distinct values, so a
// resample reduces to two histograms.
class RankedPool {
 public:
  RankedPool(std::span<const double> members, std::span<const double> nonmembers) {
    detail::require_groups(members, nonmembers);
    // Canonical order makes resampling independent of input order.
    const auto m = detail::sorted_copy(members);
    const auto n = detail::sorted_copy(nonmembers);
    std::merge(m.begin(), m.end(), n.begin(), n.end(), std::back_inserter(values_));
    values_.erase(std::unique(values_.begin(), values_.end()), values_.end());
    member_ranks_ = rank_of(m);
    nonmember_ranks_ = rank_of(n);
  }

  std::size_t distinct() const noexcept { return values_.size(); }
  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<std::uint32_t>& member_ranks() const noexcept { return member_ranks_; }
  const std::vector<std::uint32_t>& nonmember_ranks() const noexcept {
    return nonmember_ranks_;
  }

 private:
  std::vector<std::uint32_t> rank_of(const std::vector<double>& sorted) const {
    std::vector<std::uint32_t> r;
    r.reserve(sorted.size());
    std::size_t k = 0;
    for (double v : sorted) {
      while (values_[k] < v) ++k;
      r.push_back(static_cast<std::uint32_t>(k));
    }
    return r;
  }

  std::vector<double> values_;
  std::vector<std::uint32_t> member_ranks_;
  std::vector<std::uint32_t> nonmember_ranks_;
};

struct PoolStats {
  double auc = 0.0;
  std::vector<double> tpr;  // one per requested level
};

// AUC and TPR@alpha from per-rank counts. Matches auc() and
// tpr_at_fpr(roc(...)) on the same multisets.
inline PoolStats stats_from_counts(std::span<const std::uint32_t> member_counts,
                                   std::span<const std::uint32_t> nonmember_counts,
                                   std::span<const double> levels) {
  std::uint64_t nm = 0, nn = 0;
  for (auto c : member_counts) nm += c;
  for (auto c : nonmember_counts) nn += c;
  PoolStats s;
  std::uint64_t twice_wins = 0, below = 0;
  for (std::size_t k = 0; k < member_counts.size(); ++k) {
    twice_wins += static_cast<std::uint64_t>(member_counts[k]) *
                  (2 * below + nonmember_counts[k]);
    below += nonmember_counts[k];
  }
  s.auc = static_cast<double>(twice_wins) /
          (2.0 * static_cast<double>(nm) * static_cast<double>(nn));
  s.tpr.assign(levels.size(), 0.0);
  std::uint64_t tp = 0, fp = 0;
  const double dm = static_cast<double>(nm), dn = static_cast<double>(nn);
  for (std::size_t k = member_counts.size(); k-- > 0;) {
    tp += member_counts[k];
    fp += nonmember_counts[k];
    bool any = false;
    const double fpr = static_cast<double>(fp) / dn;
    for (std::size_t l = 0; l < levels.size(); ++l) {
      if (fpr <= levels[l]) {
        s.tpr[l] = static_cast<double>(tp) / dm;
        any = true;
      }
    }
    if (!any) break;  // fpr only grows from here
  }
  return s;
}

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

// Linear-interpolation percentile of sorted values, q in [0, 1].
inline double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("percentile of empty sample");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

struct BootstrapResult {
  Interval auc;
  std::vector<Interval> tpr;  // per level
  std::size_t resamples = 0;
  std::uint64_t seed = 0;
  double confidence = 0.95;
};

// Percentile bootstrap. Members and nonmembers are resampled independently
// with replacement at their original sizes; resample r draws from
// substream(seed, r), so results do not depend on `threads`.
inline BootstrapResult bootstrap_ci(std::span<const double> members,
                                    std::span<const double> nonmembers,
                                    std::span<const double> levels,
                                    std::size_t resamples, std::uint64_t seed,
                                    int threads = 1, double confidence = 0.95) {
  if (resamples < 1) throw std::invalid_argument("resamples must be >= 1");
  const RankedPool pool(members, nonmembers);
  const auto& mr = pool.member_ranks();
  const auto& nr = pool.nonmember_ranks();
  std::vector<double> aucs(resamples);
  std::vector<std::vector<double>> tprs(levels.size(), std::vector<double>(resamples));
  parallel_for(resamples, threads, [&](std::size_t r) {
    auto gen = substream(seed, r);
    std::vector<std::uint32_t> mc(pool.distinct(), 0), nc(pool.distinct(), 0);
    std::uniform_int_distribution<std::size_t> pick_m(0, mr.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_n(0, nr.size() - 1);
    for (std::size_t i = 0; i < mr.size(); ++i) ++mc[mr[pick_m(gen)]];
    for (std::size_t i = 0; i < nr.size(); ++i) ++nc[nr[pick_n(gen)]];
    const PoolStats s = stats_from_counts(mc, nc, levels);
    aucs[r] = s.auc;
    for (std::size_t l = 0; l < levels.size(); ++l) tprs[l][r] = s.tpr[l];
  });
  const double tail = (1.0 - confidence) / 2.0;
  auto interval = [&](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    return Interval{percentile_sorted(v, tail), percentile_sorted(v, 1.0 - tail)};
  };
  BootstrapResult out;
  out.resamples = resamples;
  out.seed = seed;
  out.confidence = confidence;
  out.auc = interval(aucs);
  for (auto& v : tprs) out.tpr.push_back(interval(v));
  return out;
}

inline const std::vector<double> kDefaultFprLevels = {0.01, 0.001};
inline constexpr std::size_t kDefaultResamples = 1000;

struct EvalOptions {
  std::vector<double> levels = kDefaultFprLevels;
  std::size_t resamples = kDefaultResamples;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct TprEntry {
  double level = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::optional<double> threshold;
};

struct EvalReport {
  std::string attack;
  double auc = 0.0;
  Interval auc_ci;
  std::vector<TprEntry> tpr_at;
  std::size_t n_members = 0;
  std::size_t n_nonmembers = 0;
  std::size_t n_excluded_unknown = 0;
  std::size_t resamples = 0;
  std::uint64_t seed = 0;
  std::string rng = kRngName;
};

struct EvalError {
  std::string attack;
  std::string message;
};

struct EvalOutcome {
  std::vector<EvalReport> reports;
  std::vector<EvalError> errors;
};

inline void check_levels(std::span<const double> levels) {
  if (levels.empty()) throw std::invalid_argument("at least one FPR level is required");
  for (double a : levels) {
    if (!(a > 0.0 && a < 1.0)) {
      throw std::invalid_argument("FPR level must be in (0, 1), got " + format_real(a));
    }
  }
}

inline EvalReport evaluate_attack(std::string attack, std::span<const double> members,
                                  std::span<const double> nonmembers,
                                  std::size_t excluded_unknown, const EvalOptions& opt) {
  check_levels(opt.levels);
  EvalReport r;
  r.attack = std::move(attack);
  r.n_members = members.size();
  r.n_nonmembers = nonmembers.size();
  r.n_excluded_unknown = excluded_unknown;
  r.resamples = opt.resamples;
  r.seed = opt.seed;
  r.auc = auc(members, nonmembers);
  const RocCurve curve = roc(members, nonmembers);
  const BootstrapResult boot =
      bootstrap_ci(members, nonmembers, opt.levels, opt.resamples, opt.seed, opt.threads);
  // Percentile intervals can miss the point estimate; widen so the report
  // always brackets it.
  r.auc_ci = {std::min(boot.auc.low, r.auc), std::max(boot.auc.high, r.auc)};
  for (std::size_t l = 0; l < opt.levels.size(); ++l) {
    const TprAtFpr op = tpr_at_fpr(curve, opt.levels[l]);
    r.tpr_at.push_back({opt.levels[l], op.tpr, op.fpr, std::min(boot.tpr[l].low, op.tpr),
                        std::max(boot.tpr[l].high, op.tpr), op.threshold});
  }
  return r;
}

// One report per attack, in order of first appearance. Unknown labels are
// excluded and counted; an attack missing a label group becomes an error.
inline EvalOutcome evaluate(std::span<const AttackScore> scores, const EvalOptions& opt) {
  check_levels(opt.levels);
  struct Groups {
    std::vector<double> members, nonmembers;
    std::size_t unknown = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Groups> by_attack;
  for (const auto& s : scores) {
    auto [it, inserted] = by_attack.try_emplace(s.attack);
    if (inserted) order.push_back(s.attack);
    if (!is_valid_score(s.score)) throw std::invalid_argument("NaN score for " + s.sequence_id);
    switch (s.label) {
      case Label::member: it->second.members.push_back(s.score); break;
      case Label::nonmember: it->second.nonmembers.push_back(s.score); break;
      case Label::unknown: ++it->second.unknown; break;
    }
  }
  EvalOutcome out;
  for (const auto& name : order) {
    const Groups& g = by_attack.at(name);
    if (g.members.empty() || g.nonmembers.empty()) {
      out.errors.push_back({name, g.members.empty() ? "no member-labelled scores"
                                                    : "no nonmember-labelled scores"});
      continue;
    }
    out.reports.push_back(evaluate_attack(name, g.members, g.nonmembers, g.unknown, opt));
  }
  return out;
}

// Thresholds: finite values as numbers, +inf as "inf", reject-all as null.
inline nlohmann::ordered_json threshold_json(const std::optional<double>& t) {
  if (!t) return nullptr;
  if (std::isinf(*t)) return format_real(*t);
  return *t;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["attack"] = r.attack;
  j["auc"] = r.auc;
  j["auc_ci"] = {{"low", r.auc_ci.low}, {"high", r.auc_ci.high}};
  auto& levels = j["tpr_at"] = nlohmann::ordered_json::array();
  for (const auto& e : r.tpr_at) {
    nlohmann::ordered_json le;
    le["level"] = e.level;
    le["tpr"] = e.tpr;
    le["fpr"] = e.fpr;
    le["ci_low"] = e.ci_low;
    le["ci_high"] = e.ci_high;
    le["threshold"] = threshold_json(e.threshold);
    levels.push_back(std::move(le));
  }
  j["counts"] = {{"members", r.n_members},
                 {"nonmembers", r.n_nonmembers},
                 {"excluded_unknown", r.n_excluded_unknown}};
  j["bootstrap"] = {{"resamples", r.resamples}, {"seed", r.seed}, {"rng", r.rng}};
  return j;
}

inline nlohmann::ordered_json to_json(const EvalOutcome& o) {
  nlohmann::ordered_json j;
  j["reports"] = nlohmann::ordered_json::array();
  for (const auto& r : o.reports) j["reports"].push_back(to_json(r));
  j["errors"] = nlohmann::ordered_json::array();
  for (const auto& e : o.errors) {
    j["errors"].push_back({{"attack", e.attack}, {"message", e.message}});
  }
  return j;
}

inline void write_roc_csv(std::ostream& out, const std::string& attack,
                          const RocCurve& curve, bool header = true) {
  if (header) out << "attack,threshold,fpr,tpr\n";
  for (const auto& p : curve.points) {
    out << attack << ',' << (p.threshold ? format_real(*p.threshold) : std::string("none"))
        << ',' << format_real(p.fpr) << ',' << format_real(p.tpr) << '\n';
  }
}

}  // namespace ezaudit
