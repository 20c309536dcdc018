// Copyright 2026 The sync-edg Authors. All Rights Reserved.
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

#include <stdexcept>
#include <string>

namespace sync_edg {

// Bad arguments, shapes, or configuration values.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed files. The message names the offending record or line.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A recurrent state was used out of order (stale or future domain index).
class SequencingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// An operation was called before its inputs were ready (e.g. an empty bank).
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A loss term became NaN or infinite during training.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(std::string term, double value)
      : std::runtime_error("non-finite loss term '" + term + "' (" + std::to_string(value) + ")"),
        term_(std::move(term)) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

}  // namespace sync_edg
