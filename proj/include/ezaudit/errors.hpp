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
#include <stdexcept>
#include <string>
#include <utility>

namespace ezaudit {

// Base of every error the engine raises on bad input.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed record. The message is prefixed with "line N: ".
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A structurally valid record that breaks a data-model invariant.
class ValidationError : public Error {
 public:
  ValidationError(std::string sequence_id, std::string field,
                  const std::string& what)
      : Error("sequence '" + sequence_id + "': " + field + ": " + what),
        sequence_id_(std::move(sequence_id)),
        field_(std::move(field)) {}

  const std::string& sequence_id() const noexcept { return sequence_id_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string sequence_id_;
  std::string field_;
};

// The requested attack needs trace fields this sequence does not carry.
class UnsupportedAttack : public Error {
 public:
  UnsupportedAttack(std::string sequence_id, const std::string& what)
      : Error("sequence '" + sequence_id + "': " + what),
        sequence_id_(std::move(sequence_id)) {}

  const std::string& sequence_id() const noexcept { return sequence_id_; }

 private:
  std::string sequence_id_;
};

}  // namespace ezaudit
