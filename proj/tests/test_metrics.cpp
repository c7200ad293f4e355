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

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "ezaudit/metrics.hpp"
#include "ezaudit/rng.hpp"
#include "support.hpp"

using namespace ezaudit;
using ezaudit::testing::random_scores;

namespace {

double oracle_auc(const std::vector<double>& m, const std::vector<double>& n) {
  double wins = 0.0;
  for (double a : m) {
    for (double b : n) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  }
  return wins / (static_cast<double>(m.size()) * static_cast<double>(n.size()));
}

struct SweepResult {
  double tpr = 0.0;
  std::optional<double> threshold;
};

// Every candidate threshold under the rule score >= tau, plus reject-all.
// Best TPR first, then the smallest threshold reaching it.
SweepResult oracle_tpr(const std::vector<double>& m, const std::vector<double>& n, double alpha) {
  std::set<double> taus(m.begin(), m.end());
  taus.insert(n.begin(), n.end());
  struct Candidate {
    double tau, tpr;
  };
  std::vector<Candidate> ok;
  for (double tau : taus) {
    const auto fp = std::count_if(n.begin(), n.end(), [&](double v) { return v >= tau; });
    const auto tp = std::count_if(m.begin(), m.end(), [&](double v) { return v >= tau; });
    if (static_cast<double>(fp) / static_cast<double>(n.size()) <= alpha) {
      ok.push_back({tau, static_cast<double>(tp) / static_cast<double>(m.size())});
    }
  }
  SweepResult best;
  for (const Candidate& c : ok) best.tpr = std::max(best.tpr, c.tpr);
  for (const Candidate& c : ok) {
    if (c.tpr == best.tpr && (!best.threshold || c.tau < *best.threshold)) best.threshold = c.tau;
  }
  return best;
}

std::vector<double> with_infinities(std::mt19937_64& gen, std::vector<double> v) {
  std::bernoulli_distribution coin(0.05);
  for (auto& x : v) {
    if (coin(gen)) x = kInf;
  }
  return v;
}

}  // namespace

TEST_CASE("auc examples") {
  using V = std::vector<double>;
  CHECK(auc(V{3, 2}, V{1, 0}) == 1.0);
  CHECK(auc(V{1, 0}, V{3, 2}) == 0.0);
  CHECK(auc(V{2, 1}, V{1, 0}) == oracle_auc({2, 1}, {1, 0}));
  CHECK(auc(V{2, 1}, V{1, 0}) == 0.875);
  CHECK(auc(V{4, 4, 4}, V{4, 4}) == 0.5);
  CHECK(auc(V{kInf}, V{1e308}) == 1.0);
  CHECK(auc(V{kInf}, V{kInf}) == 0.5);
  CHECK_THROWS_AS(auc(V{}, V{1}), std::invalid_argument);
  CHECK_THROWS_AS(auc(V{1}, V{}), std::invalid_argument);
}

TEST_CASE("auc matches the pairwise oracle") {
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<std::size_t> size(1, 200);
  for (int i = 0; i < 300; ++i) {
    const int distinct = i % 3 == 0 ? 0 : 2 + i % 17;
    const auto m = with_infinities(gen, random_scores(gen, size(gen), distinct));
    const auto n = with_infinities(gen, random_scores(gen, size(gen), distinct));
    REQUIRE(std::fabs(auc(m, n) - oracle_auc(m, n)) <= 1e-12);
    REQUIRE(std::fabs(auc(m, n) + auc(n, m) - 1.0) <= 1e-12);
  }
}

TEST_CASE("roc examples") {
  using V = std::vector<double>;
  const RocCurve c = roc(V{1}, V{0});
  REQUIRE(c.points.size() == 3);
  CHECK_FALSE(c.points[0].threshold.has_value());
  CHECK(c.points[0].fpr == 0.0);
  CHECK(c.points[0].tpr == 0.0);
  CHECK(c.points[1].threshold == 1.0);
  CHECK(c.points[1].fpr == 0.0);
  CHECK(c.points[1].tpr == 1.0);
  CHECK(c.points[2].threshold == 0.0);
  CHECK(c.points[2].fpr == 1.0);
  CHECK(c.points[2].tpr == 1.0);

  const RocCurve diag = roc(V{1, 2, 3}, V{3, 1, 2});
  for (const auto& p : diag.points) CHECK(p.fpr == p.tpr);

  const RocCurve sentinel = roc(V{kInf}, V{5.0});
  REQUIRE(sentinel.points.size() == 3);
  CHECK(sentinel.points[1].threshold == kInf);
  CHECK(sentinel.points[1].fpr == 0.0);
  CHECK(sentinel.points[1].tpr == 1.0);
}

TEST_CASE("roc is monotone and ends at the corners") {
  std::mt19937_64 gen(2);
  for (int i = 0; i < 100; ++i) {
    const auto m = random_scores(gen, 1 + i, 5);
    const auto n = random_scores(gen, 1 + (i * 7) % 50, 5);
    const RocCurve c = roc(m, n);
    CHECK(c.points.front().fpr == 0.0);
    CHECK(c.points.front().tpr == 0.0);
    CHECK(c.points.back().fpr == 1.0);
    CHECK(c.points.back().tpr == 1.0);
    for (std::size_t k = 1; k < c.points.size(); ++k) {
      REQUIRE(c.points[k].fpr >= c.points[k - 1].fpr);
      REQUIRE(c.points[k].tpr >= c.points[k - 1].tpr);
      if (k > 1) REQUIRE(*c.points[k].threshold < *c.points[k - 1].threshold);
    }
  }
}

TEST_CASE("tpr at fpr examples") {
  using V = std::vector<double>;
  const TprAtFpr a = tpr_at_fpr(roc(V{5, 4, 3}, V{2, 1, 0}), 0.01);
  CHECK(a.tpr == 1.0);
  CHECK(a.fpr == 0.0);
  CHECK(a.threshold == 3.0);

  const TprAtFpr b = tpr_at_fpr(roc(V{3, 1}, V{2, 0}), 1e-9);
  CHECK(b.tpr == 0.5);
  CHECK(b.fpr == 0.0);
  CHECK(b.threshold == 3.0);
  CHECK(oracle_tpr({3, 1}, {2, 0}, 1e-9).tpr == 0.5);

  const TprAtFpr c = tpr_at_fpr(roc(V{3, 1}, V{2, 0}), 0.99);
  CHECK(c.tpr == 1.0);
  CHECK(c.fpr == 0.5);
  CHECK(c.threshold == 1.0);

  const TprAtFpr none = tpr_at_fpr(roc(V{1}, V{5}), 0.5);
  CHECK(none.tpr == 0.0);
  CHECK_FALSE(none.threshold.has_value());
}

TEST_CASE("tpr at fpr matches the threshold sweep") {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<std::size_t> size(1, 120);
  const std::vector<double> alphas = {0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 0.9};
  for (int i = 0; i < 200; ++i) {
    const int distinct = i % 2 ? 0 : 3 + i % 11;
    const auto m = with_infinities(gen, random_scores(gen, size(gen), distinct));
    const auto n = with_infinities(gen, random_scores(gen, size(gen), distinct));
    const RocCurve c = roc(m, n);
    double last = 0.0;
    for (double a : alphas) {
      const TprAtFpr got = tpr_at_fpr(c, a);
      const SweepResult want = oracle_tpr(m, n, a);
      REQUIRE(got.tpr == want.tpr);
      REQUIRE(got.threshold == want.threshold);
      REQUIRE(got.tpr >= last);
      last = got.tpr;
    }
  }
}

TEST_CASE("strictly increasing transforms change nothing but thresholds") {
  std::mt19937_64 gen(4);
  for (int i = 0; i < 50; ++i) {
    const auto m = random_scores(gen, 40, i % 2 ? 0 : 6);
    const auto n = random_scores(gen, 60, i % 2 ? 0 : 6);
    auto f = [](double x) { return std::exp(3.0 * x) - 7.0; };
    std::vector<double> fm, fn;
    for (double x : m) fm.push_back(f(x));
    for (double x : n) fn.push_back(f(x));
    REQUIRE(auc(m, n) == auc(fm, fn));
    const RocCurve a = roc(m, n), b = roc(fm, fn);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t k = 0; k < a.points.size(); ++k) {
      REQUIRE(a.points[k].fpr == b.points[k].fpr);
      REQUIRE(a.points[k].tpr == b.points[k].tpr);
    }
    for (double alpha : {0.01, 0.1, 0.3}) {
      REQUIRE(tpr_at_fpr(a, alpha).tpr == tpr_at_fpr(b, alpha).tpr);
    }
  }
}

TEST_CASE("histogram statistics agree with the direct ones") {
  std::mt19937_64 gen(5);
  const std::vector<double> levels = {0.01, 0.1, 0.5};
  for (int i = 0; i < 100; ++i) {
    const auto m = with_infinities(gen, random_scores(gen, 1 + i, i % 4 ? 8 : 0));
    const auto n = with_infinities(gen, random_scores(gen, 2 + (i * 3) % 90, i % 4 ? 8 : 0));
    const RankedPool pool(m, n);
    std::vector<std::uint32_t> mc(pool.distinct()), nc(pool.distinct());
    for (auto r : pool.member_ranks()) ++mc[r];
    for (auto r : pool.nonmember_ranks()) ++nc[r];
    const PoolStats s = stats_from_counts(mc, nc, levels);
    REQUIRE(s.auc == auc(m, n));
    const RocCurve c = roc(m, n);
    for (std::size_t l = 0; l < levels.size(); ++l) {
      REQUIRE(s.tpr[l] == tpr_at_fpr(c, levels[l]).tpr);
    }
  }
}

TEST_CASE("bootstrap of a separated pool has no spread") {
  const std::vector<double> m(30, 1.0), n(40, 0.0);
  const std::vector<double> levels = {0.01, 0.001};
  const BootstrapResult b = bootstrap_ci(m, n, levels, 200, 9);
  CHECK(b.auc.low == 1.0);
  CHECK(b.auc.high == 1.0);
  for (const auto& t : b.tpr) {
    CHECK(t.low == 1.0);
    CHECK(t.high == 1.0);
  }
}

TEST_CASE("bootstrap is deterministic and order free") {
  std::mt19937_64 gen(6);
  auto m = random_scores(gen, 80, 0);
  auto n = random_scores(gen, 120, 0);
  for (auto& x : m) x += 0.3;
  const std::vector<double> levels = {0.05, 0.2};
  const BootstrapResult a = bootstrap_ci(m, n, levels, 300, 42);
  const BootstrapResult b = bootstrap_ci(m, n, levels, 300, 42);
  CHECK(a.auc.low == b.auc.low);
  CHECK(a.auc.high == b.auc.high);

  std::shuffle(m.begin(), m.end(), gen);
  std::shuffle(n.begin(), n.end(), gen);
  for (int threads : {1, 3, 8}) {
    const BootstrapResult c = bootstrap_ci(m, n, levels, 300, 42, threads);
    REQUIRE(c.auc.low == a.auc.low);
    REQUIRE(c.auc.high == a.auc.high);
    for (std::size_t l = 0; l < levels.size(); ++l) {
      REQUIRE(c.tpr[l].low == a.tpr[l].low);
      REQUIRE(c.tpr[l].high == a.tpr[l].high);
    }
  }
  const BootstrapResult other = bootstrap_ci(m, n, levels, 300, 43);
  CHECK((other.auc.low != a.auc.low || other.auc.high != a.auc.high));
  CHECK(a.auc.low <= auc(m, n));
  CHECK(a.auc.high >= auc(m, n));
}

TEST_CASE("a single resample gives a degenerate interval at its own value") {
  std::mt19937_64 gen(7);
  const auto m = random_scores(gen, 25, 6);
  const auto n = random_scores(gen, 31, 6);
  const std::vector<double> levels = {0.1};
  const BootstrapResult b = bootstrap_ci(m, n, levels, 1, 77);
  CHECK(b.auc.low == b.auc.high);
  CHECK(b.tpr[0].low == b.tpr[0].high);

  // Rebuild resample 0 by the documented procedure: sorted groups, draws
  // from substream(seed, 0), members first.
  auto sm = m, sn = n;
  std::sort(sm.begin(), sm.end());
  std::sort(sn.begin(), sn.end());
  auto rng = substream(77, 0);
  std::uniform_int_distribution<std::size_t> pm(0, sm.size() - 1), pn(0, sn.size() - 1);
  std::vector<double> rm, rn;
  for (std::size_t i = 0; i < sm.size(); ++i) rm.push_back(sm[pm(rng)]);
  for (std::size_t i = 0; i < sn.size(); ++i) rn.push_back(sn[pn(rng)]);
  CHECK(b.auc.low == oracle_auc(rm, rn));
  CHECK(b.tpr[0].low == oracle_tpr(rm, rn, 0.1).tpr);
}

TEST_CASE("percentiles interpolate linearly") {
  const std::vector<double> v = {0, 1, 2, 3, 4};
  CHECK(percentile_sorted(v, 0.0) == 0.0);
  CHECK(percentile_sorted(v, 1.0) == 4.0);
  CHECK(percentile_sorted(v, 0.5) == 2.0);
  CHECK(percentile_sorted(v, 0.125) == 0.5);
}

TEST_CASE("evaluate groups by attack") {
  std::vector<AttackScore> s;
  for (int i = 0; i < 10; ++i) {
    const Label l = i < 5 ? Label::member : Label::nonmember;
    s.push_back({"s" + std::to_string(i), "ez", static_cast<double>(10 - i), l});
    s.push_back({"s" + std::to_string(i), "loss", static_cast<double>(i), l});
  }
  s.push_back({"u", "ez", 0.0, Label::unknown});
  s.push_back({"x", "lonely", 1.0, Label::member});
  EvalOptions opt;
  opt.resamples = 50;
  const EvalOutcome out = evaluate(s, opt);
  REQUIRE(out.reports.size() == 2);
  CHECK(out.reports[0].attack == "ez");
  CHECK(out.reports[0].auc == 1.0);
  CHECK(out.reports[0].n_excluded_unknown == 1);
  CHECK(out.reports[0].n_members == 5);
  CHECK(out.reports[1].attack == "loss");
  CHECK(out.reports[1].auc == 0.0);
  REQUIRE(out.errors.size() == 1);
  CHECK(out.errors[0].attack == "lonely");

  for (const EvalReport& r : out.reports) {
    REQUIRE(r.tpr_at.size() == 2);
    CHECK(r.tpr_at[0].level == 0.01);
    CHECK(r.tpr_at[1].level == 0.001);
    for (const TprEntry& e : r.tpr_at) {
      CHECK(e.ci_low <= e.tpr);
      CHECK(e.tpr <= e.ci_high);
    }
    CHECK(r.auc_ci.low <= r.auc);
    CHECK(r.auc <= r.auc_ci.high);
  }

  const auto j = to_json(out);
  CHECK(j["reports"][0]["tpr_at"][0]["level"].get<double>() == 0.01);
  CHECK(j["reports"][0]["bootstrap"]["rng"] == kRngName);
  CHECK(j["errors"][0]["attack"] == "lonely");

  EvalOptions bad = opt;
  bad.levels = {0.0};
  CHECK_THROWS_AS(evaluate(s, bad), std::invalid_argument);
  bad.levels = {1.0};
  CHECK_THROWS_AS(evaluate(s, bad), std::invalid_argument);
}

TEST_CASE("requested levels are echoed exactly") {
  std::vector<AttackScore> s = {{"a", "ez", 1.0, Label::member}, {"b", "ez", 0.0, Label::nonmember}};
  EvalOptions opt;
  opt.levels = {0.1, 0.01, 0.001, 1.0 / 3.0};
  opt.resamples = 5;
  const EvalOutcome out = evaluate(s, opt);
  REQUIRE(out.reports[0].tpr_at.size() == 4);
  for (std::size_t l = 0; l < opt.levels.size(); ++l) {
    CHECK(out.reports[0].tpr_at[l].level == opt.levels[l]);
  }
}

TEST_CASE("threshold rendering") {
  CHECK(threshold_json(std::nullopt).is_null());
  CHECK(threshold_json(kInf) == "inf");
  CHECK(threshold_json(2.5).get<double>() == 2.5);
}
