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

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ezaudit/attacks.hpp"
#include "ezaudit/metrics.hpp"
#include "ezaudit/parallel.hpp"
#include "ezaudit/stats.hpp"
#include "ezaudit/trace.hpp"

namespace ezaudit {

inline constexpr std::array<int, 3> kAblationTopK = {1, 5, 10};

// Aggregations compared in the table, EZ first.
inline constexpr std::array<AttackKind, 6> kAblationAggregations = {
    AttackKind::ez,           AttackKind::ez_log_ratio,    AttackKind::ez_p_minus_n,
    AttackKind::ez_pos_fraction, AttackKind::ez_median_delta, AttackKind::ez_mean_delta};

struct AblationCell {
  std::string aggregation;
  int top_k = 1;
  double auc = 0.0;
};

struct AblationReport {
  std::size_t n_members = 0;
  std::size_t n_nonmembers = 0;
  std::size_t n_excluded_unknown = 0;
  std::vector<AblationCell> cells;         // aggregation x top_k
  std::vector<AblationCell> success_zone;  // one per top_k
  std::vector<std::pair<int, double>> error_fraction;  // (top_k, errors / tokens)
  // Spearman correlation between aggregations at top-1, row-major over
  // kAblationAggregations; nullopt when a column is constant.
  std::vector<std::vector<std::optional<double>>> rank_correlation;
};

inline AblationReport ablate(std::span<const SequenceTrace> traces, int threads = 1) {
  std::vector<const SequenceTrace*> pop;
  AblationReport rep;
  for (const auto& t : traces) {
    if (t.label == Label::unknown) {
      ++rep.n_excluded_unknown;
      continue;
    }
    ++(t.label == Label::member ? rep.n_members : rep.n_nonmembers);
    pop.push_back(&t);
  }
  if (rep.n_members == 0 || rep.n_nonmembers == 0) {
    throw std::invalid_argument("ablation needs both members and nonmembers");
  }

  constexpr std::size_t kCols = kAblationAggregations.size() + 1;  // + success zone
  std::vector<double> table(pop.size() * kAblationTopK.size() * kCols);
  auto at = [&](std::size_t seq, std::size_t k, std::size_t col) -> double& {
    return table[(seq * kAblationTopK.size() + k) * kCols + col];
  };
  parallel_for(pop.size(), threads, [&](std::size_t i) {
    for (std::size_t k = 0; k < kAblationTopK.size(); ++k) {
      const AttackParams params{kAblationTopK[k], kDefaultMinkPercent};
      for (std::size_t a = 0; a < kAblationAggregations.size(); ++a) {
        at(i, k, a) = compute_attack(*pop[i], kAblationAggregations[a], params);
      }
      at(i, k, kCols - 1) = success_zone_score(*pop[i], kAblationTopK[k]);
    }
  });

  auto column_auc = [&](std::size_t k, std::size_t col) {
    std::vector<double> m, n;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      (pop[i]->label == Label::member ? m : n).push_back(at(i, k, col));
    }
    return auc(m, n);
  };
  for (std::size_t a = 0; a < kAblationAggregations.size(); ++a) {
    for (std::size_t k = 0; k < kAblationTopK.size(); ++k) {
      rep.cells.push_back({std::string(attack_name(kAblationAggregations[a])),
                           kAblationTopK[k], column_auc(k, a)});
    }
  }
  for (std::size_t k = 0; k < kAblationTopK.size(); ++k) {
    rep.success_zone.push_back({"success_zone", kAblationTopK[k], column_auc(k, kCols - 1)});
    std::size_t errors = 0, tokens = 0;
    for (const auto* t : pop) {
      errors += error_count(*t, kAblationTopK[k]);
      tokens += t->tokens.size();
    }
    rep.error_fraction.emplace_back(kAblationTopK[k],
                                    static_cast<double>(errors) / static_cast<double>(tokens));
  }

  std::vector<std::vector<double>> cols(kAblationAggregations.size());
  for (std::size_t a = 0; a < cols.size(); ++a) {
    for (std::size_t i = 0; i < pop.size(); ++i) cols[a].push_back(at(i, 0, a));
  }
  rep.rank_correlation.assign(cols.size(), std::vector<std::optional<double>>(cols.size()));
  for (std::size_t a = 0; a < cols.size(); ++a) {
    for (std::size_t b = 0; b < cols.size(); ++b) {
      rep.rank_correlation[a][b] =
          pop.size() >= 2 ? stats::spearman(cols[a], cols[b]) : std::nullopt;
    }
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const AblationReport& r) {
  nlohmann::ordered_json j;
  j["analysis"] = "ablation";
  j["counts"] = {{"members", r.n_members},
                 {"nonmembers", r.n_nonmembers},
                 {"excluded_unknown", r.n_excluded_unknown}};
  j["auc"] = nlohmann::ordered_json::array();
  for (const auto& c : r.cells) {
    j["auc"].push_back({{"aggregation", c.aggregation}, {"top_k", c.top_k}, {"auc", c.auc}});
  }
  j["success_zone"] = nlohmann::ordered_json::array();
  for (const auto& c : r.success_zone) {
    j["success_zone"].push_back({{"top_k", c.top_k}, {"auc", c.auc}});
  }
  j["error_fraction"] = nlohmann::ordered_json::array();
  for (const auto& [k, f] : r.error_fraction) {
    j["error_fraction"].push_back({{"top_k", k}, {"fraction", f}});
  }
  auto& rc = j["rank_correlation"];
  rc["method"] = "spearman, top-1";
  rc["aggregations"] = nlohmann::ordered_json::array();
  for (AttackKind a : kAblationAggregations) rc["aggregations"].push_back(attack_name(a));
  rc["matrix"] = nlohmann::ordered_json::array();
  for (const auto& row : r.rank_correlation) {
    auto jr = nlohmann::ordered_json::array();
    for (const auto& v : row) jr.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr));
    rc["matrix"].push_back(std::move(jr));
  }
  return j;
}

}  // namespace ezaudit
