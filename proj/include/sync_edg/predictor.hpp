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

// Sequential inference over unseen domains. Each domain draws one bank state
// per sample, advances q_theta with it, and replaces the bank with the
// advanced states once the domain is done.

#include "sync_edg/domain_stream.hpp"
#include "sync_edg/hidden_state_bank.hpp"
#include "sync_edg/latent_model.hpp"
#include "sync_edg/trainer.hpp"

#include <cstdint>
#include <vector>

namespace sync_edg::predict {

struct PredictionRecord {
  int t = 0;
  std::vector<int> predicted;
  std::vector<int> labels;
  ad::Matrix logits;
  // mean(predicted == labels)
  double accuracy = 0.0;

  bool operator==(const PredictionRecord&) const = default;
};

// Drift sample for domain t: the drift prior rolled from t = 1 with its own
// argmax one-hot fed back at every step. 1 x K_d.
ad::Matrix drift_state_for(const model::SyncModel& model, int t);

// Predicts every domain of `targets` in order. `bank` must hold states that
// consumed domain targets.first_index() - 1; on return it holds the states
// after the last target domain. Bank draws for domain t are seeded from
// (seed, t), so splitting a call into consecutive pieces gives the same
// result.
std::vector<PredictionRecord> predict_sequence(const model::SyncModel& model,
                                               HiddenStateBank& bank,
                                               const data::DomainSequence& targets,
                                               std::uint64_t seed);

// Classifies a single batch of points as if they belonged to domain t, with
// bank rows drawn from (seed, t). The bank is left untouched.
ad::Matrix predict_logits(const model::SyncModel& model, const HiddenStateBank& bank,
                          const ad::Matrix& x, int t, std::uint64_t seed);

std::vector<PredictionRecord> predict_erm(const train::ErmModel& model,
                                          const data::DomainSequence& targets);

// Runs the bank through `intermediate` and returns the records of `target`.
std::vector<PredictionRecord> predict_targets(const model::SyncModel& model,
                                              const HiddenStateBank& bank,
                                              const data::DomainSequence& intermediate,
                                              const data::DomainSequence& target,
                                              std::uint64_t seed);

}  // namespace sync_edg::predict
