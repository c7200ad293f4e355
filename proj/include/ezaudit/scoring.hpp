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
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ezaudit/attacks.hpp"
#include "ezaudit/errors.hpp"
#include "ezaudit/parallel.hpp"
#include "ezaudit/real.hpp"
#include "ezaudit/trace.hpp"

namespace ezaudit {

struct ScoreError {
  std::string sequence_id;
  std::string attack;
  std::string message;
};

struct ScoreBatch {
  std::vector<AttackScore> scores;
  std::vector<ScoreError> errors;
};

// Scores every (trace, attack) pair. Output order is trace order, then
// attack order, independent of `threads`. A failing pair is reported in
// `errors` and does not suppress the others.
inline ScoreBatch score_traces(std::span<const SequenceTrace> traces,
                               std::span<const AttackKind> attacks,
                               const AttackParams& params, int threads = 1) {
  struct Slot {
    std::optional<double> score;
    std::string error;
  };
  std::vector<Slot> slots(traces.size() * attacks.size());
  parallel_for(traces.size(), threads, [&](std::size_t i) {
    for (std::size_t a = 0; a < attacks.size(); ++a) {
      Slot& slot = slots[i * attacks.size() + a];
      try {
        slot.score = compute_attack(traces[i], attacks[a], params);
      } catch (const UnsupportedAttack& e) {
        slot.error = e.what();
      }
    }
  });
  ScoreBatch out;
  out.scores.reserve(slots.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    for (std::size_t a = 0; a < attacks.size(); ++a) {
      const Slot& slot = slots[i * attacks.size() + a];
      const std::string name(attack_name(attacks[a]));
      if (slot.score) {
        out.scores.push_back({traces[i].id, name, *slot.score, traces[i].label});
      } else {
        out.errors.push_back({traces[i].id, name, slot.error});
      }
    }
  }
  return out;
}

inline constexpr std::size_t kScoringBatch = 2048;

// Streams a trace file through score_traces in fixed-size batches, so
// memory is bounded by one batch and output order matches the file.
inline void score_file(TraceReader& reader, std::span<const AttackKind> attacks,
                       const AttackParams& params, int threads,
                       const std::function<void(const AttackScore&)>& on_score,
                       const std::function<void(const ScoreError&)>& on_error) {
  std::vector<SequenceTrace> batch;
  batch.reserve(kScoringBatch);
  auto flush = [&] {
    ScoreBatch b = score_traces(batch, attacks, params, threads);
    for (const auto& s : b.scores) on_score(s);
    for (const auto& e : b.errors) on_error(e);
    batch.clear();
  };
  while (auto t = reader.next()) {
    batch.push_back(std::move(*t));
    if (batch.size() == kScoringBatch) flush();
  }
  if (!batch.empty()) flush();
}

// --- Score CSV: header `id,attack,score,label` ---------------------------

inline constexpr std::string_view kScoreCsvHeader = "id,attack,score,label";

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
inline std::optional<std::vector<std::string>> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool field_started_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty() && !field_started_quoted) {
      quoted = true;
      field_started_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      field_started_quoted = false;
    } else if (c == '\r' && i + 1 == line.size()) {
      break;
    } else {
      cur += c;
    }
  }
  if (quoted) return std::nullopt;
  fields.push_back(std::move(cur));
  return fields;
}

inline void write_score_row(std::ostream& out, const AttackScore& s) {
  out << csv_field(s.sequence_id) << ',' << csv_field(s.attack) << ','
      << format_real(s.score) << ',' << label_name(s.label) << '\n';
}

inline void write_scores_csv(std::ostream& out, std::span<const AttackScore> scores) {
  out << kScoreCsvHeader << '\n';
  for (const auto& s : scores) write_score_row(out, s);
}

inline std::vector<AttackScore> read_scores_csv(std::istream& in) {
  std::vector<AttackScore> out;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) return out;
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kScoreCsvHeader) {
    throw ParseError(line_no, "expected header '" + std::string(kScoreCsvHeader) + "'");
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (!fields || fields->size() != 4) {
      throw ParseError(line_no, "expected 4 CSV fields");
    }
    auto score = parse_real((*fields)[2]);
    if (!score) throw ParseError(line_no, "invalid score '" + (*fields)[2] + "'");
    auto label = parse_label((*fields)[3]);
    if (!label) throw ParseError(line_no, "invalid label '" + (*fields)[3] + "'");
    out.push_back({std::move((*fields)[0]), std::move((*fields)[1]), *score, *label});
  }
  return out;
}

inline std::vector<AttackScore> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open score file '" + path.string() + "'");
  return read_scores_csv(in);
}

}  // namespace ezaudit
