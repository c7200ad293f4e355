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
#include <vector>

#include "ezaudit/attacks.hpp"
#include "ezaudit/metrics.hpp"
#include "ezaudit/synth.hpp"
#include "support.hpp"

using namespace ezaudit;
using ezaudit::testing::TempDir;
using ezaudit::testing::slurp;

namespace {

double ez_auc(const std::vector<SequenceTrace>& traces) {
  std::vector<double> m, n;
  for (const auto& t : traces) {
    (t.label == Label::member ? m : n).push_back(ez_score(t).ez);
  }
  return auc(m, n);
}

SynthConfig small(double mem_mean, std::uint64_t seed = 1) {
  SynthConfig c;
  c.n_members = 300;
  c.n_nonmembers = 300;
  c.errors_per_seq = 30;
  c.mem_mean = mem_mean;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
  const SynthConfig c = small(1.0, 5);
  CHECK(generate(c) == generate(c));
  CHECK(generate(c) != generate(small(1.0, 6)));
  TempDir dir;
  generate_to_file(c, dir / "a.jsonl");
  generate_to_file(c, dir / "b.jsonl", 4);
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  CHECK(read_traces(dir / "a.jsonl") == generate(c, 3));
}

TEST_CASE("generated traces are valid and labelled in order") {
  SynthConfig c = small(2.0);
  c.success_fraction = 0.25;
  c.error_rank_scale = 3.0;
  const auto traces = generate(c);
  REQUIRE(traces.size() == 600);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const SequenceTrace& t = traces[i];
    REQUIRE(check_trace(t).empty());
    REQUIRE(t.id == synth_id(i));
    REQUIRE(t.label == (i < 300 ? Label::member : Label::nonmember));
    REQUIRE(t.tokens.size() == 40);
    REQUIRE(error_count(t) == 30);
    REQUIRE(t.compressed_len.has_value());
    for (const auto& r : t.tokens) {
      REQUIRE(r.target_logprob <= -1.0);
      REQUIRE(r.ref_logprob <= -1.0);
      REQUIRE(r.has_vocab_stats());
    }
  }
  CHECK(synth_id(42) == "syn-0000042");
}

TEST_CASE("every position is an error by default") {
  const auto traces = generate(small(0.0));
  for (const auto& t : traces) {
    for (const auto& r : t.tokens) REQUIRE(r.gt_rank == 2);
  }
}

TEST_CASE("optional fields can be switched off") {
  SynthConfig c = small(0.0);
  c.emit_vocab_stats = false;
  c.emit_compressed_len = false;
  const auto t = synth_trace(c, 0);
  CHECK_FALSE(t.compressed_len.has_value());
  CHECK_FALSE(t.tokens[0].has_vocab_stats());
}

TEST_CASE("encoded traces carry the drawn deltas") {
  SynthConfig c = small(1.5);
  c.success_fraction = 0.5;
  for (std::size_t i : {0u, 299u, 300u, 599u}) {
    auto pos = synth_positions(c, i);
    const auto t = synth_trace(c, i);
    REQUIRE(pos.size() == t.tokens.size());
    for (std::size_t k = 0; k < pos.size(); ++k) {
      REQUIRE(std::fabs(t.tokens[k].delta() - pos[k].delta) <= 1e-12 * (1.0 + std::fabs(pos[k].delta)));
      REQUIRE((t.tokens[k].gt_rank > 1) == pos[k].error);
    }
  }
  for (double d : {-3.0, -1e-9, 0.0, 1e-9, 7.5}) {
    const TokenRecord r = encode_delta(d);
    CHECK(r.target_logprob <= 0.0);
    CHECK(r.ref_logprob <= 0.0);
    CHECK(std::fabs(r.delta() - d) <= 1e-15);
  }
}

TEST_CASE("null model draws one law for both labels") {
  const SynthConfig c = small(0.0, 7);
  // Same draws: sequence i as member equals sequence i as nonmember.
  SynthConfig all_members = c;
  all_members.n_members = c.size();
  all_members.n_nonmembers = 1;
  for (std::size_t i = 300; i < 310; ++i) {
    const auto a = synth_positions(c, i);
    const auto b = synth_positions(all_members, i);
    for (std::size_t k = 0; k < a.size(); ++k) REQUIRE(a[k].delta == b[k].delta);
  }
  const double a = ez_auc(generate(c));
  CHECK(a >= 0.45);
  CHECK(a <= 0.55);
}

TEST_CASE("compressed length does not depend on the label") {
  SynthConfig c = small(3.0);
  SynthConfig flipped = c;
  flipped.n_members = 1;
  flipped.n_nonmembers = c.size() - 1;
  for (std::size_t i = 1; i < 50; ++i) {
    CHECK(synth_trace(c, i).compressed_len == synth_trace(flipped, i).compressed_len);
  }
}

TEST_CASE("strong signal separates the groups") {
  SynthConfig c;
  c.mem_mean = 5.0;
  c.seed = 3;
  const double a = ez_auc(generate(c));
  CHECK(a >= 0.95);
  CHECK(a == 1.0);  // pinned regression value
}

TEST_CASE("expected EZ oracle") {
  const SynthConfig null = small(0.0, 11);
  const ExpectedEz e0 = oracle_expected_ez(null, 10000);
  const double se0 = std::hypot(e0.member.std_error, e0.nonmember.std_error);
  CHECK(std::fabs(e0.member.mean - e0.nonmember.mean) <= 3.0 * se0);
  CHECK(e0.member.samples + e0.member.infinite == 10000);

  const ExpectedEz e1 = oracle_expected_ez(small(0.3, 11), 10000);
  const double se1 = std::hypot(e1.member.std_error, e1.nonmember.std_error);
  CHECK(e1.member.mean - e1.nonmember.mean > 5.0 * se1);
}

TEST_CASE("joint scaling leaves EZ unchanged") {
  SynthConfig c = small(0.8, 13);
  SynthConfig big = c;
  big.g_sigma *= 10.0;
  big.mem_mean *= 10.0;
  const auto a = generate(c);
  const auto b = generate(big);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = ez_score(a[i]).ez, y = ez_score(b[i]).ez;
    if (std::isinf(x)) {
      REQUIRE(y == x);
    } else {
      REQUIRE(std::fabs(x - y) <= 1e-9 * std::fabs(x));
    }
  }
}

TEST_CASE("config validation") {
  SynthConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = [](auto mutate) {
    SynthConfig x;
    mutate(x);
    return x;
  };
  CHECK_THROWS_AS(bad([](SynthConfig& x) { x.n_members = 0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](SynthConfig& x) { x.errors_per_seq = 0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](SynthConfig& x) { x.g_sigma = 0.0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](SynthConfig& x) { x.mem_mean = -1.0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](SynthConfig& x) { x.success_fraction = 1.0; }).validate(),
                  std::invalid_argument);
  CHECK(bad([](SynthConfig& x) { x.success_fraction = 0.5; }).success_per_seq() == 100);
  const auto j = to_json(c);
  CHECK(j["memorization_law"] == "exponential(mean mem_mean)");
}
