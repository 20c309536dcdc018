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

// Pool of q_theta recurrent states carried from the last source domain into
// sequential inference.

#include "sync_edg/latent_model.hpp"

#include <vector>

namespace sync_edg {

// One stored state; rows are independent sequences.
struct BankEntry {
  ad::Matrix h;
  ad::Matrix c;
  int domain_index = 0;

  bool operator==(const BankEntry&) const = default;
};

class HiddenStateBank {
 public:
  void clear() { entries_.clear(); }
  // Stores a detached copy of the state's values.
  void add(const model::RecurrentState& state);
  void add(BankEntry entry);

  // Number of stored entries (training: one per iteration; inference: one
  // per sample).
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  // Rows across all entries; each row is one drawable state.
  Eigen::Index total_rows() const;
  // Domain index shared by every entry. Throws PreconditionError when empty
  // and SequencingError when entries disagree.
  int domain_index() const;

  // Gathers the given global rows into a batch state.
  model::RecurrentState gather(std::span<const Eigen::Index> rows) const;

  const std::vector<BankEntry>& entries() const { return entries_; }
  bool operator==(const HiddenStateBank&) const = default;

 private:
  std::vector<BankEntry> entries_;
};

}  // namespace sync_edg
