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
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ezaudit/errors.hpp"
#include "ezaudit/real.hpp"
#include "ezaudit/trace.hpp"

namespace ezaudit {

// Positions (0-based) whose ground-truth token is outside the target's
// top-K predictions. K = 1 is the plain "top prediction is wrong" set.
inline std::vector<std::size_t> error_positions(const SequenceTrace& trace,
                                                int top_k = 1) {
  if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < trace.tokens.size(); ++t) {
    if (trace.tokens[t].gt_rank > top_k) out.push_back(t);
  }
  return out;
}

inline std::size_t error_count(const SequenceTrace& trace, int top_k = 1) {
  std::size_t n = 0;
  for (const auto& r : trace.tokens) n += r.gt_rank > top_k ? 1 : 0;
  return n;
}

// Target-minus-reference log-probability at the error (or success)
// positions for a given K.
inline std::vector<double> error_deltas(const SequenceTrace& trace, int top_k = 1) {
  std::vector<double> out;
  for (const auto& r : trace.tokens) {
    if (r.gt_rank > top_k) out.push_back(r.delta());
  }
  return out;
}

inline std::vector<double> success_deltas(const SequenceTrace& trace, int top_k = 1) {
  std::vector<double> out;
  for (const auto& r : trace.tokens) {
    if (r.gt_rank <= top_k) out.push_back(r.delta());
  }
  return out;
}

// Upward mass P, downward mass N and their odds.
//
// ez = P / N when N > 0, +inf when N = 0 < P, and 1 (neutral) when
// P = N = 0 over a nonempty set. An empty set scores +inf: a sequence the
// model predicts perfectly is classified as a member.
struct EzDecomposition {
  double positive_mass = 0.0;
  double negative_mass = 0.0;
  double ez = kInf;
  std::size_t positions = 0;
};

namespace detail {

// Masses are accumulated in extended precision and rounded once, so ratios
// of short sums such as (0.1 + 0.2) / 0.1 come out exact.
struct Masses {
  long double up = 0.0L;
  long double down = 0.0L;
};

inline Masses masses(std::span<const double> deltas) {
  Masses m;
  for (double v : deltas) {
    if (v > 0.0) {
      m.up += v;
    } else if (v < 0.0) {
      m.down -= v;
    }
  }
  return m;
}

inline double odds(const Masses& m, bool empty) {
  if (empty) return kInf;
  if (m.down > 0.0L) return static_cast<double>(m.up / m.down);
  if (m.up > 0.0L) return kInf;
  return 1.0;
}

}  // namespace detail

inline EzDecomposition decompose(std::span<const double> deltas) {
  const detail::Masses m = detail::masses(deltas);
  EzDecomposition d;
  d.positions = deltas.size();
  d.positive_mass = static_cast<double>(m.up);
  d.negative_mass = static_cast<double>(m.down);
  d.ez = detail::odds(m, deltas.empty());
  return d;
}

inline EzDecomposition ez_score(const SequenceTrace& trace, int top_k = 1) {
  const auto deltas = error_deltas(trace, top_k);
  return decompose(deltas);
}

enum class EzVariant { pos_fraction, median_delta, p_minus_n, log_ratio, mean_delta };

inline constexpr std::array<EzVariant, 5> kAllEzVariants = {
    EzVariant::pos_fraction, EzVariant::median_delta, EzVariant::p_minus_n,
    EzVariant::log_ratio, EzVariant::mean_delta};

inline double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return lower + (upper - lower) / 2.0;
}

// Alternative aggregations of the error-position deltas. Every variant maps
// an empty error set to its member extreme (+inf, or 1.0 for the fraction).
inline double aggregate_deltas(std::span<const double> deltas, EzVariant kind) {
  const detail::Masses m = detail::masses(deltas);
  switch (kind) {
    case EzVariant::pos_fraction: {
      if (deltas.empty()) return 1.0;
      const long double total = m.up + m.down;
      if (total == 0.0L) return 0.5;  // neutral, same point as ez = 1
      return static_cast<double>(m.up / total);
    }
    case EzVariant::p_minus_n:
      if (deltas.empty()) return kInf;
      return static_cast<double>(m.up - m.down);
    case EzVariant::log_ratio:
      return std::log(detail::odds(m, deltas.empty()));
    case EzVariant::median_delta:
      if (deltas.empty()) return kInf;
      return median_of({deltas.begin(), deltas.end()});
    case EzVariant::mean_delta: {
      if (deltas.empty()) return kInf;
      double s = 0.0;
      for (double v : deltas) s += v;
      return s / static_cast<double>(deltas.size());
    }
  }
  throw std::logic_error("unknown EzVariant");
}

inline double ez_variant(const SequenceTrace& trace, EzVariant kind, int top_k = 1) {
  const auto deltas = error_deltas(trace, top_k);
  return aggregate_deltas(deltas, kind);
}

// EZ over the complement of the error set.
inline double success_zone_score(const SequenceTrace& trace, int top_k = 1) {
  const auto deltas = success_deltas(trace, top_k);
  return decompose(deltas).ez;
}

// Mean target log-probability, i.e. negated mean NLL.
inline double loss_attack(const SequenceTrace& trace) {
  double s = 0.0;
  for (const auto& r : trace.tokens) s += r.target_logprob;
  return s / static_cast<double>(trace.tokens.size());
}

// Negated total NLL (nats) over the DEFLATE byte length of the text.
inline double zlib_attack(const SequenceTrace& trace) {
  if (!trace.compressed_len) {
    throw UnsupportedAttack(trace.id, "zlib attack requires compressed_len");
  }
  double s = 0.0;
  for (const auto& r : trace.tokens) s += r.target_logprob;
  return s / static_cast<double>(*trace.compressed_len);
}

inline constexpr double kDefaultMinkPercent = 20.0;

// Mean of the lowest k% z-normalized target log-probabilities (at least one).
inline double minkpp_attack(const SequenceTrace& trace,
                            double k_percent = kDefaultMinkPercent) {
  if (!(k_percent > 0.0 && k_percent <= 100.0)) {
    throw std::invalid_argument("k_percent must be in (0, 100]");
  }
  std::vector<double> z;
  z.reserve(trace.tokens.size());
  for (std::size_t i = 0; i < trace.tokens.size(); ++i) {
    const TokenRecord& r = trace.tokens[i];
    if (!r.has_vocab_stats()) {
      throw UnsupportedAttack(trace.id, "minkpp attack requires vocab_mean/vocab_std (mu/sigma) "
                                        "at every token; missing at token " +
                                            std::to_string(i));
    }
    z.push_back((r.target_logprob - *r.vocab_mean) / *r.vocab_std);
  }
  const double t = static_cast<double>(z.size());
  // The epsilon keeps exact products such as 20% of 5 from flooring to 0.
  auto keep = static_cast<std::size_t>(std::floor(k_percent * t / 100.0 + 1e-9));
  keep = std::clamp<std::size_t>(keep, 1, z.size());
  std::partial_sort(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(keep), z.end());
  double s = 0.0;
  for (std::size_t i = 0; i < keep; ++i) s += z[i];
  return s / static_cast<double>(keep);
}

// Reference-calibrated loss: mean reference NLL minus mean target NLL.
inline double refl_attack(const SequenceTrace& trace) {
  double s = 0.0;
  for (const auto& r : trace.tokens) s += r.delta();
  return s / static_cast<double>(trace.tokens.size());
}

enum class AttackKind {
  ez,
  ez_pos_fraction,
  ez_median_delta,
  ez_p_minus_n,
  ez_log_ratio,
  ez_mean_delta,
  success_zone,
  loss,
  zlib,
  minkpp,
  refl,
};

inline constexpr std::array<AttackKind, 11> kAllAttacks = {
    AttackKind::ez,           AttackKind::ez_pos_fraction, AttackKind::ez_median_delta,
    AttackKind::ez_p_minus_n, AttackKind::ez_log_ratio,    AttackKind::ez_mean_delta,
    AttackKind::success_zone, AttackKind::loss,            AttackKind::zlib,
    AttackKind::minkpp,       AttackKind::refl};

inline std::string_view attack_name(AttackKind k) noexcept {
  switch (k) {
    case AttackKind::ez: return "ez";
    case AttackKind::ez_pos_fraction: return "ez_pos_fraction";
    case AttackKind::ez_median_delta: return "ez_median_delta";
    case AttackKind::ez_p_minus_n: return "ez_p_minus_n";
    case AttackKind::ez_log_ratio: return "ez_log_ratio";
    case AttackKind::ez_mean_delta: return "ez_mean_delta";
    case AttackKind::success_zone: return "success_zone";
    case AttackKind::loss: return "loss";
    case AttackKind::zlib: return "zlib";
    case AttackKind::minkpp: return "minkpp";
    case AttackKind::refl: return "refl";
  }
  return "?";
}

inline std::optional<AttackKind> parse_attack(std::string_view s) noexcept {
  for (AttackKind k : kAllAttacks) {
    if (attack_name(k) == s) return k;
  }
  return std::nullopt;
}

inline std::optional<EzVariant> variant_of(AttackKind k) noexcept {
  switch (k) {
    case AttackKind::ez_pos_fraction: return EzVariant::pos_fraction;
    case AttackKind::ez_median_delta: return EzVariant::median_delta;
    case AttackKind::ez_p_minus_n: return EzVariant::p_minus_n;
    case AttackKind::ez_log_ratio: return EzVariant::log_ratio;
    case AttackKind::ez_mean_delta: return EzVariant::mean_delta;
    default: return std::nullopt;
  }
}

inline AttackKind attack_for(EzVariant v) noexcept {
  switch (v) {
    case EzVariant::pos_fraction: return AttackKind::ez_pos_fraction;
    case EzVariant::median_delta: return AttackKind::ez_median_delta;
    case EzVariant::p_minus_n: return AttackKind::ez_p_minus_n;
    case EzVariant::log_ratio: return AttackKind::ez_log_ratio;
    case EzVariant::mean_delta: return AttackKind::ez_mean_delta;
  }
  return AttackKind::ez;
}

struct AttackParams {
  int top_k = 1;
  double k_percent = kDefaultMinkPercent;
};

// Membership score, normalized so that higher means more member-like.
inline double compute_attack(const SequenceTrace& trace, AttackKind kind,
                             const AttackParams& params = {}) {
  switch (kind) {
    case AttackKind::ez: return ez_score(trace, params.top_k).ez;
    case AttackKind::success_zone: return success_zone_score(trace, params.top_k);
    case AttackKind::loss: return loss_attack(trace);
    case AttackKind::zlib: return zlib_attack(trace);
    case AttackKind::minkpp: return minkpp_attack(trace, params.k_percent);
    case AttackKind::refl: return refl_attack(trace);
    default: return ez_variant(trace, *variant_of(kind), params.top_k);
  }
}

struct AttackScore {
  std::string sequence_id;
  std::string attack;
  double score = 0.0;
  Label label = Label::unknown;

  friend bool operator==(const AttackScore&, const AttackScore&) = default;
};

}  // namespace ezaudit
