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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ezaudit/synth.hpp"
#include "ezaudit/trace.hpp"

namespace ezaudit::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("ezaudit-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

// Trace whose deltas are exactly `deltas`, all at error rank 2 unless
// `ranks` is given.
inline SequenceTrace trace_from_deltas(std::string id, Label label,
                                       const std::vector<double>& deltas,
                                       const std::vector<std::int32_t>& ranks = {}) {
  SequenceTrace t;
  t.id = std::move(id);
  t.label = label;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    TokenRecord r;
    r.ref_logprob = -10.0;
    r.target_logprob = -10.0 + deltas[i];
    r.gt_rank = ranks.empty() ? 2 : ranks[i];
    t.tokens.push_back(r);
  }
  return t;
}

inline TokenRecord token(double target, double ref, std::int32_t rank) {
  TokenRecord r;
  r.target_logprob = target;
  r.ref_logprob = ref;
  r.gt_rank = rank;
  return r;
}

inline std::vector<double> random_scores(std::mt19937_64& gen, std::size_t n, int distinct) {
  std::vector<double> v(n);
  if (distinct > 0) {
    std::uniform_int_distribution<int> d(0, distinct - 1);
    for (auto& x : v) x = static_cast<double>(d(gen)) / 4.0;
  } else {
    std::normal_distribution<double> d(0.0, 1.0);
    for (auto& x : v) x = d(gen);
  }
  return v;
}

}  // namespace ezaudit::testing
