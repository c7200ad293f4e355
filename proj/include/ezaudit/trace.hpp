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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "ezaudit/errors.hpp"
#include "ezaudit/real.hpp"

namespace ezaudit {

enum class Label { member, nonmember, unknown };

inline std::string_view label_name(Label l) noexcept {
  switch (l) {
    case Label::member: return "member";
    case Label::nonmember: return "nonmember";
    case Label::unknown: return "unknown";
  }
  return "unknown";
}

inline std::optional<Label> parse_label(std::string_view s) noexcept {
  if (s == "member") return Label::member;
  if (s == "nonmember") return Label::nonmember;
  if (s == "unknown") return Label::unknown;
  return std::nullopt;
}

// Probe output for one conditioned position. Log-probabilities are in nats.
struct TokenRecord {
  double target_logprob = 0.0;
  double ref_logprob = 0.0;
  // 1-based rank of the ground-truth token under the target model.
  std::int32_t gt_rank = 1;
  // Mean and standard deviation of the target's full-vocabulary
  // log-probabilities. Present together or not at all.
  std::optional<double> vocab_mean;
  std::optional<double> vocab_std;

  double delta() const noexcept { return target_logprob - ref_logprob; }
  bool has_vocab_stats() const noexcept { return vocab_mean && vocab_std; }

  friend bool operator==(const TokenRecord&, const TokenRecord&) = default;
};

struct SequenceTrace {
  std::string id;
  Label label = Label::unknown;
  std::vector<TokenRecord> tokens;
  // DEFLATE length of the raw text in bytes, for the zlib baseline.
  std::optional<std::int64_t> compressed_len;

  friend bool operator==(const SequenceTrace&, const SequenceTrace&) = default;
};

struct Violation {
  std::size_t line = 0;  // 0 when the trace did not come from a file
  std::string sequence_id;
  std::string field;
  std::string message;
};

// Every invariant breach in one trace. Duplicate ids are a file-level
// property and are checked by the reader, not here.
inline std::vector<Violation> check_trace(const SequenceTrace& t) {
  std::vector<Violation> out;
  auto add = [&](std::string field, std::string msg) {
    out.push_back({0, t.id, std::move(field), std::move(msg)});
  };
  if (t.tokens.empty()) add("tokens", "sequence has no token records");
  if (t.compressed_len && *t.compressed_len < 1) {
    add("compressed_len", "must be >= 1, got " + std::to_string(*t.compressed_len));
  }
  for (std::size_t i = 0; i < t.tokens.size(); ++i) {
    const TokenRecord& r = t.tokens[i];
    const std::string at = " at token " + std::to_string(i);
    if (!(r.target_logprob <= 0.0) || std::isinf(r.target_logprob)) {
      add("target_logprob", "must be a finite value <= 0, got " +
                                format_real(r.target_logprob) + at);
    }
    if (!(r.ref_logprob <= 0.0) || std::isinf(r.ref_logprob)) {
      add("ref_logprob",
          "must be a finite value <= 0, got " + format_real(r.ref_logprob) + at);
    }
    if (r.gt_rank < 1) {
      add("gt_rank", "must be >= 1, got " + std::to_string(r.gt_rank) + at);
    }
    if (r.vocab_mean.has_value() != r.vocab_std.has_value()) {
      add(r.vocab_mean ? "vocab_std" : "vocab_mean",
          "vocab_mean and vocab_std must be present together" + at);
    }
    if (r.vocab_mean && !std::isfinite(*r.vocab_mean)) {
      add("vocab_mean", "must be finite" + at);
    }
    if (r.vocab_std && !(*r.vocab_std > 0.0 && std::isfinite(*r.vocab_std))) {
      add("vocab_std", "must be finite and > 0, got " + format_real(*r.vocab_std) + at);
    }
  }
  return out;
}

inline void require_valid(const SequenceTrace& t) {
  auto v = check_trace(t);
  if (!v.empty()) throw ValidationError(t.id, v.front().field, v.front().message);
}

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& obj,
                                         const char* key, const char* field,
                                         std::size_t line,
                                         const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ParseError(line, std::string("missing field ") + field + where);
  }
  return *it;
}

inline double as_real(const nlohmann::json& v, const char* field,
                      std::size_t line, const std::string& where) {
  if (!v.is_number()) {
    throw ParseError(line, std::string("field ") + field + " must be a number" + where);
  }
  return v.get<double>();
}

inline std::int64_t as_integer(const nlohmann::json& v, const char* field,
                               std::size_t line, const std::string& where) {
  if (!v.is_number_integer()) {
    throw ParseError(line, std::string("field ") + field + " must be an integer" + where);
  }
  return v.get<std::int64_t>();
}

}  // namespace detail

// Parses one line of the trace format without checking invariants.
inline SequenceTrace parse_trace_line(std::string_view line,
                                      std::size_t line_no = 1) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(line.begin(), line.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line_no, std::string("malformed record: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError(line_no, "record is not an object");

  SequenceTrace t;
  const auto& id = detail::require_key(doc, "id", "id", line_no, "");
  if (!id.is_string()) throw ParseError(line_no, "field id must be a string");
  t.id = id.get<std::string>();

  const auto& label = detail::require_key(doc, "label", "label", line_no, "");
  std::optional<Label> parsed_label;
  if (label.is_string()) parsed_label = parse_label(label.get_ref<const std::string&>());
  if (!parsed_label) {
    throw ParseError(line_no,
                     "field label must be one of \"member\", \"nonmember\", \"unknown\"");
  }
  t.label = *parsed_label;

  if (auto it = doc.find("compressed_len"); it != doc.end() && !it->is_null()) {
    t.compressed_len = detail::as_integer(*it, "compressed_len", line_no, "");
  }

  const auto& tokens = detail::require_key(doc, "tokens", "tokens", line_no, "");
  if (!tokens.is_array()) throw ParseError(line_no, "field tokens must be an array");
  t.tokens.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& rec = tokens[i];
    const std::string where = " (token " + std::to_string(i) + ")";
    if (!rec.is_object()) throw ParseError(line_no, "token record is not an object" + where);
    TokenRecord r;
    r.target_logprob = detail::as_real(
        detail::require_key(rec, "tl", "target_logprob", line_no, where),
        "target_logprob", line_no, where);
    r.ref_logprob = detail::as_real(
        detail::require_key(rec, "rl", "ref_logprob", line_no, where),
        "ref_logprob", line_no, where);
    const std::int64_t rank = detail::as_integer(
        detail::require_key(rec, "rank", "gt_rank", line_no, where), "gt_rank",
        line_no, where);
    if (rank > INT32_MAX || rank < INT32_MIN) {
      throw ParseError(line_no, "field gt_rank out of range" + where);
    }
    r.gt_rank = static_cast<std::int32_t>(rank);
    if (auto it = rec.find("mu"); it != rec.end() && !it->is_null()) {
      r.vocab_mean = detail::as_real(*it, "vocab_mean", line_no, where);
    }
    if (auto it = rec.find("sigma"); it != rec.end() && !it->is_null()) {
      r.vocab_std = detail::as_real(*it, "vocab_std", line_no, where);
    }
    t.tokens.push_back(r);
  }
  return t;
}

// One line of the trace format (no trailing newline). Refuses invalid traces.
inline std::string format_trace_line(const SequenceTrace& t) {
  require_valid(t);
  std::string out;
  out.reserve(64 + t.tokens.size() * 48);
  out += "{\"id\":";
  out += nlohmann::json(t.id).dump();
  out += ",\"label\":\"";
  out += label_name(t.label);
  out += '"';
  if (t.compressed_len) {
    out += ",\"compressed_len\":";
    out += std::to_string(*t.compressed_len);
  }
  out += ",\"tokens\":[";
  for (std::size_t i = 0; i < t.tokens.size(); ++i) {
    const TokenRecord& r = t.tokens[i];
    if (i) out += ',';
    out += "{\"tl\":";
    out += format_real17(r.target_logprob);
    out += ",\"rl\":";
    out += format_real17(r.ref_logprob);
    out += ",\"rank\":";
    out += std::to_string(r.gt_rank);
    if (r.has_vocab_stats()) {
      out += ",\"mu\":";
      out += format_real17(*r.vocab_mean);
      out += ",\"sigma\":";
      out += format_real17(*r.vocab_std);
    }
    out += '}';
  }
  out += "]}";
  return out;
}

struct ParsedRecord {
  SequenceTrace trace;
  std::size_t line = 0;
};

// Streams traces from a file, one line at a time. Blank lines are skipped.
class TraceReader {
 public:
  explicit TraceReader(const std::filesystem::path& path) : path_(path) {
    in_.open(path, std::ios::binary);
    if (!in_) throw IoError("cannot open trace file '" + path.string() + "'");
  }

  // Next record, parsed but not validated.
  std::optional<ParsedRecord> next_record() {
    while (std::getline(in_, buffer_)) {
      ++line_;
      if (buffer_.find_first_not_of(" \t\r") == std::string::npos) continue;
      return ParsedRecord{parse_trace_line(buffer_, line_), line_};
    }
    if (in_.bad()) throw IoError("read failure on '" + path_.string() + "'");
    return std::nullopt;
  }

  // Next record with every invariant enforced, including id uniqueness.
  std::optional<SequenceTrace> next() {
    auto rec = next_record();
    if (!rec) return std::nullopt;
    require_valid(rec->trace);
    if (!seen_ids_.insert(rec->trace.id).second) {
      throw ValidationError(rec->trace.id, "id",
                            "duplicate id (line " + std::to_string(rec->line) + ")");
    }
    return std::move(rec->trace);
  }

  std::size_t line_number() const noexcept { return line_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::string buffer_;
  std::size_t line_ = 0;
  std::unordered_set<std::string> seen_ids_;
};

// Convenience for small files and tests. Production paths iterate a reader.
inline std::vector<SequenceTrace> read_traces(const std::filesystem::path& path) {
  TraceReader reader(path);
  std::vector<SequenceTrace> out;
  while (auto t = reader.next()) out.push_back(std::move(*t));
  return out;
}

class TraceWriter {
 public:
  explicit TraceWriter(const std::filesystem::path& path) : path_(path) {
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot write trace file '" + path.string() + "'");
  }

  void write(const SequenceTrace& t) {
    out_ << format_trace_line(t) << '\n';
    if (!out_) throw IoError("write failure on '" + path_.string() + "'");
  }

  void close() {
    out_.close();
    if (!out_) throw IoError("write failure on '" + path_.string() + "'");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

template <typename Range>
void write_traces(const Range& traces, const std::filesystem::path& path) {
  TraceWriter w(path);
  for (const SequenceTrace& t : traces) w.write(t);
  w.close();
}

struct ValidationSummary {
  std::size_t sequences = 0;
  std::size_t members = 0;
  std::size_t nonmembers = 0;
  std::size_t unknown = 0;
  std::size_t tokens = 0;
  std::vector<Violation> violations;

  bool clean() const noexcept { return violations.empty(); }
};

// Reports every invariant violation in the file. Malformed lines still
// raise ParseError and IO failures IoError.
inline ValidationSummary validate_traces(const std::filesystem::path& path) {
  TraceReader reader(path);
  ValidationSummary s;
  std::unordered_set<std::string> ids;
  while (auto rec = reader.next_record()) {
    const SequenceTrace& t = rec->trace;
    ++s.sequences;
    s.tokens += t.tokens.size();
    switch (t.label) {
      case Label::member: ++s.members; break;
      case Label::nonmember: ++s.nonmembers; break;
      case Label::unknown: ++s.unknown; break;
    }
    for (Violation& v : check_trace(t)) {
      v.line = rec->line;
      s.violations.push_back(std::move(v));
    }
    if (!ids.insert(t.id).second) {
      s.violations.push_back({rec->line, t.id, "id", "duplicate id"});
    }
  }
  return s;
}

}  // namespace ezaudit
