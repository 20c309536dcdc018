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


#include "sync_edg/hidden_state_bank.hpp"

#include "sync_edg/errors.hpp"

#include <algorithm>

namespace sync_edg {

void HiddenStateBank::add(const model::RecurrentState& state) {
  add(BankEntry{state.cell.h.value(), state.cell.c.value(), state.domain_index});
}

void HiddenStateBank::add(BankEntry entry) {
  if (entry.h.rows() != entry.c.rows() || entry.h.cols() != entry.c.cols() || entry.h.rows() == 0) {
    throw ValidationError("HiddenStateBank: malformed state");
  }
  if (!entries_.empty() && entries_.front().h.cols() != entry.h.cols()) {
    throw ValidationError("HiddenStateBank: state width differs from stored states");
  }
  entries_.push_back(std::move(entry));
}

Eigen::Index HiddenStateBank::total_rows() const {
  Eigen::Index n = 0;
  for (const auto& e : entries_) n += e.h.rows();
  return n;
}

int HiddenStateBank::domain_index() const {
  if (entries_.empty()) throw PreconditionError("hidden state bank is empty");
  const int t = entries_.front().domain_index;
  for (const auto& e : entries_) {
    if (e.domain_index != t) {
      throw SequencingError("hidden state bank mixes domains " + std::to_string(t) + " and " +
                            std::to_string(e.domain_index));
    }
  }
  return t;
}

model::RecurrentState HiddenStateBank::gather(std::span<const Eigen::Index> rows) const {
  const int t = domain_index();
  const Eigen::Index width = entries_.front().h.cols();
  ad::Matrix h(static_cast<Eigen::Index>(rows.size()), width);
  ad::Matrix c(static_cast<Eigen::Index>(rows.size()), width);
  // Prefix offsets of each entry.
  std::vector<Eigen::Index> offsets;
  Eigen::Index acc = 0;
  for (const auto& e : entries_) {
    offsets.push_back(acc);
    acc += e.h.rows();
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Eigen::Index r = rows[i];
    if (r < 0 || r >= acc) throw ValidationError("HiddenStateBank: row out of range");
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), r);
    const auto e = static_cast<std::size_t>(std::distance(offsets.begin(), it) - 1);
    const Eigen::Index local = r - offsets[e];
    h.row(static_cast<Eigen::Index>(i)) = entries_[e].h.row(local);
    c.row(static_cast<Eigen::Index>(i)) = entries_[e].c.row(local);
  }
  return {{ad::Tensor::constant(std::move(h)), ad::Tensor::constant(std::move(c))}, t};
}

}  // namespace sync_edg
