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
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "ezaudit/parallel.hpp"
#include "ezaudit/rng.hpp"
#include "ezaudit/trace.hpp"

namespace ezaudit {

// Additive memorization model: delta_t = M_t + G_t, with G_t ~ Normal(0,
// g_sigma) for everyone and M_t ~ Exponential(mean mem_mean) for members
// only. Success positions (rank 1) get memorization scaled by
// success_mem_scale.
struct SynthConfig {
  std::size_t n_members = 1000;
  std::size_t n_nonmembers = 1000;
  std::size_t errors_per_seq = 100;
  double g_sigma = 1.0;
  double mem_mean = 0.0;
  std::uint64_t seed = 0;
  // Fraction of positions that are successes; 0 means every position is an
  // error position.
  double success_fraction = 0.0;
  double success_mem_scale = 0.25;
  // Error ranks are 2 + floor(error_rank_scale * Exp(1)); 0 pins them at 2.
  double error_rank_scale = 0.0;
  bool emit_vocab_stats = true;
  bool emit_compressed_len = true;

  void validate() const {
    if (n_members < 1 || n_nonmembers < 1) {
      throw std::invalid_argument("n_members and n_nonmembers must be >= 1");
    }
    if (errors_per_seq < 1) throw std::invalid_argument("errors_per_seq must be >= 1");
    if (!(g_sigma > 0.0) || !std::isfinite(g_sigma)) {
      throw std::invalid_argument("g_sigma must be finite and > 0");
    }
    if (!(mem_mean >= 0.0) || !std::isfinite(mem_mean)) {
      throw std::invalid_argument("mem_mean must be finite and >= 0");
    }
    if (!(success_fraction >= 0.0 && success_fraction < 1.0)) {
      throw std::invalid_argument("success_fraction must be in [0, 1)");
    }
    if (!(success_mem_scale >= 0.0) || !(error_rank_scale >= 0.0)) {
      throw std::invalid_argument("scales must be >= 0");
    }
  }

  std::size_t success_per_seq() const {
    return static_cast<std::size_t>(std::llround(
        static_cast<double>(errors_per_seq) * success_fraction / (1.0 - success_fraction)));
  }

  std::size_t size() const { return n_members + n_nonmembers; }

  // Members occupy indices [0, n_members), nonmembers the rest.
  bool is_member(std::size_t index) const { return index < n_members; }
};

inline nlohmann::ordered_json to_json(const SynthConfig& c) {
  return {{"n_members", c.n_members},
          {"n_nonmembers", c.n_nonmembers},
          {"errors_per_seq", c.errors_per_seq},
          {"g_sigma", c.g_sigma},
          {"mem_mean", c.mem_mean},
          {"seed", c.seed},
          {"success_fraction", c.success_fraction},
          {"success_mem_scale", c.success_mem_scale},
          {"error_rank_scale", c.error_rank_scale},
          {"emit_vocab_stats", c.emit_vocab_stats},
          {"emit_compressed_len", c.emit_compressed_len},
          {"generalization_law", "normal(0, g_sigma)"},
          {"memorization_law", "exponential(mean mem_mean)"},
          {"rng", kRngName}};
}

struct SynthPosition {
  double delta = 0.0;
  bool error = true;
  std::int32_t rank = 2;
  double vocab_mean = 0.0;
  double vocab_std = 1.0;
};

// Raw draws for sequence `index`. Random numbers are consumed identically
// for members and nonmembers, so mem_mean = 0 gives one common law.
inline std::vector<SynthPosition> synth_positions(const SynthConfig& c, std::size_t index) {
  auto gen = substream(c.seed, index);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool member = c.is_member(index);
  const std::size_t n_err = c.errors_per_seq;
  const std::size_t n_total = n_err + c.success_per_seq();
  std::vector<SynthPosition> pos(n_total);
  for (std::size_t t = 0; t < n_total; ++t) {
    SynthPosition& p = pos[t];
    p.error = t < n_err;
    const double g = c.g_sigma * normal(gen);
    const double e = expo(gen);
    const double m = member ? c.mem_mean * e : 0.0;
    const double rank_draw = expo(gen);
    p.vocab_mean = -8.0 + normal(gen);
    p.vocab_std = 2.0 + unit(gen);
    if (p.error) {
      p.delta = m + g;
      p.rank = 2 + static_cast<std::int32_t>(
                       std::min(1e6, std::floor(c.error_rank_scale * rank_draw)));
    } else {
      p.delta = c.success_mem_scale * m + g;
      p.rank = 1;
    }
  }
  std::shuffle(pos.begin(), pos.end(), gen);
  return pos;
}

inline std::string synth_id(std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 7) digits.insert(0, 7 - digits.size(), '0');
  return "syn-" + digits;
}

// Encodes delta into two valid log-probabilities:
//   ref = -1 - [delta]_+ , target = -1 + [delta]_-
// so target - ref = delta and both stay <= -1.
inline TokenRecord encode_delta(double delta) {
  TokenRecord r;
  r.ref_logprob = -1.0 - std::max(delta, 0.0);
  r.target_logprob = -1.0 + std::min(delta, 0.0);
  return r;
}

inline SequenceTrace synth_trace(const SynthConfig& c, std::size_t index) {
  const auto pos = synth_positions(c, index);
  SequenceTrace t;
  t.id = synth_id(index);
  t.label = c.is_member(index) ? Label::member : Label::nonmember;
  t.tokens.reserve(pos.size());
  for (const SynthPosition& p : pos) {
    TokenRecord r = encode_delta(p.delta);
    r.gt_rank = p.rank;
    if (c.emit_vocab_stats) {
      r.vocab_mean = p.vocab_mean;
      r.vocab_std = p.vocab_std;
    }
    t.tokens.push_back(r);
  }
  if (c.emit_compressed_len) {
    // Label-independent stand-in for a DEFLATE length: 3..4 bytes per token.
    auto gen = substream(c.seed ^ 0xC0FFEEULL, index);
    std::uniform_int_distribution<std::int64_t> extra(0, static_cast<std::int64_t>(pos.size()));
    t.compressed_len = 3 * static_cast<std::int64_t>(pos.size()) + extra(gen);
  }
  return t;
}

inline std::vector<SequenceTrace> generate(const SynthConfig& c, int threads = 1) {
  c.validate();
  std::vector<SequenceTrace> out(c.size());
  parallel_for(out.size(), threads, [&](std::size_t i) { out[i] = synth_trace(c, i); });
  return out;
}

// Writes the synthetic population in index order without holding it all.
inline void generate_to_file(const SynthConfig& c, const std::filesystem::path& path,
                             int threads = 1) {
  c.validate();
  TraceWriter w(path);
  constexpr std::size_t kBatch = 1024;
  std::vector<SequenceTrace> batch;
  for (std::size_t start = 0; start < c.size(); start += kBatch) {
    const std::size_t n = std::min(kBatch, c.size() - start);
    batch.assign(n, {});
    parallel_for(n, threads, [&](std::size_t i) { batch[i] = synth_trace(c, start + i); });
    for (const auto& t : batch) w.write(t);
  }
  w.close();
}

struct GroupEzEstimate {
  double mean = 0.0;       // over finite EZ values
  double std_error = 0.0;
  std::size_t samples = 0;
  std::size_t infinite = 0;  // sequences with N = 0
};

struct ExpectedEz {
  GroupEzEstimate member;
  GroupEzEstimate nonmember;
};

// Monte-Carlo mean EZ per group, computed straight from the drawn deltas at
// error positions (no trace encoding, no attack code). Uses fresh sequence
// indices so the estimate is independent of a population generated from c.
inline ExpectedEz oracle_expected_ez(const SynthConfig& c, std::size_t samples_per_group = 10000) {
  c.validate();
  if (samples_per_group < 2) throw std::invalid_argument("need >= 2 samples per group");
  auto estimate = [&](bool member) {
    SynthConfig probe = c;
    probe.seed = splitmix64(c.seed ^ (member ? 0x6D656D62ULL : 0x6E6F6E6DULL));
    probe.n_members = member ? samples_per_group : 1;
    probe.n_nonmembers = samples_per_group;
    const std::size_t offset = member ? 0 : 1;
    GroupEzEstimate g;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t s = 0; s < samples_per_group; ++s) {
      double up = 0.0, down = 0.0;
      for (const auto& p : synth_positions(probe, s + offset)) {
        if (!p.error) continue;
        if (p.delta > 0) up += p.delta;
        else down += -p.delta;
      }
      if (down == 0.0 && up > 0.0) {
        ++g.infinite;
        continue;
      }
      const double ez = down > 0.0 ? up / down : 1.0;
      sum += ez;
      sum_sq += ez * ez;
      ++g.samples;
    }
    if (g.samples > 0) {
      const double n = static_cast<double>(g.samples);
      g.mean = sum / n;
      const double var = g.samples > 1 ? (sum_sq - n * g.mean * g.mean) / (n - 1.0) : 0.0;
      g.std_error = std::sqrt(std::max(var, 0.0) / n);
    }
    return g;
  };
  return {estimate(true), estimate(false)};
}

}  // namespace ezaudit
