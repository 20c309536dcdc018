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


#include "sync_edg/predictor.hpp"

#include "sync_edg/errors.hpp"

#include <random>

namespace sync_edg::predict {

namespace {

using ad::Matrix;
using ad::Tensor;

std::mt19937_64 domain_rng(std::uint64_t seed, int t) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(t), 0xba4bu};
  return std::mt19937_64(seq);
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index p = 0;
    logits.row(r).maxCoeff(&p);
    out[static_cast<std::size_t>(r)] = static_cast<int>(p);
  }
  return out;
}

PredictionRecord make_record(int t, Matrix logits, std::vector<int> labels) {
  PredictionRecord rec;
  rec.t = t;
  rec.predicted = argmax_rows(logits);
  rec.labels = std::move(labels);
  rec.logits = std::move(logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rec.labels.size(); ++i) hits += rec.predicted[i] == rec.labels[i];
  rec.accuracy = rec.labels.empty() ? 0.0
                                    : static_cast<double>(hits) / static_cast<double>(rec.labels.size());
  return rec;
}

struct DomainForward {
  Matrix logits;
  model::RecurrentState advanced;
};

DomainForward forward_domain(const model::SyncModel& model, const HiddenStateBank& bank,
                             const Matrix& x, int t, std::uint64_t seed) {
  if (bank.empty()) throw PreconditionError("predict: hidden state bank is empty");
  if (x.cols() != model.dims().feature_dim) {
    throw ValidationError("predict: domain " + std::to_string(t) + " has " +
                          std::to_string(x.cols()) + " features, model expects " +
                          std::to_string(model.dims().feature_dim));
  }
  auto rng = domain_rng(seed, t);
  std::uniform_int_distribution<Eigen::Index> pick(0, bank.total_rows() - 1);
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(x.rows()));
  for (auto& r : rows) r = pick(rng);
  const model::RecurrentState state = bank.gather(rows);

  const Tensor xt = Tensor::constant(x);
  const auto q_st = model.encode_static(xt);
  auto [q_dy, advanced] = model.encode_dynamic(xt, state, t);
  // Deterministic top-k: rng is not consumed.
  std::mt19937_64 unused(0);
  const auto phi_st =
      model.mask_causal(q_st.mu, model::Branch::kStatic, stochastic::NoiseMode::kDeterministic,
                        unused);
  const auto phi_dy =
      model.mask_causal(q_dy.mu, model::Branch::kDynamic, stochastic::NoiseMode::kDeterministic,
                        unused);
  const Matrix z_d = drift_state_for(model, t).replicate(x.rows(), 1);
  Matrix logits = model.classify(phi_st.masked, phi_dy.masked, Tensor::constant(z_d)).value();
  return {std::move(logits), std::move(advanced)};
}

}  // namespace

Matrix drift_state_for(const model::SyncModel& model, int t) {
  if (t < 1) throw ValidationError("drift_state_for: t must be >= 1");
  const int kd = model.dims().drift_states;
  model::RecurrentState state = model.initial_prior_drift_state(1);
  Matrix z = Matrix::Zero(1, kd);
  for (int s = 1; s <= t; ++s) {
    auto [prior, next] = model.prior_drift(Tensor::constant(z), state, s);
    state = std::move(next);
    Eigen::Index p = 0;
    prior.logits.value().row(0).maxCoeff(&p);
    z.setZero();
    z(0, p) = 1.0;
  }
  return z;
}

std::vector<PredictionRecord> predict_sequence(const model::SyncModel& model,
                                               HiddenStateBank& bank,
                                               const data::DomainSequence& targets,
                                               std::uint64_t seed) {
  if (bank.empty()) throw PreconditionError("predict_sequence: hidden state bank is empty");
  if (targets.feature_dim != model.dims().feature_dim) {
    throw ValidationError("predict_sequence: sequence feature_dim " +
                          std::to_string(targets.feature_dim) + " does not match model " +
                          std::to_string(model.dims().feature_dim));
  }
  std::vector<PredictionRecord> out;
  out.reserve(targets.size());
  for (const auto& domain : targets.domains) {
    auto fwd = forward_domain(model, bank, domain.features(), domain.t, seed);
    HiddenStateBank next;
    const Matrix& h = fwd.advanced.cell.h.value();
    const Matrix& c = fwd.advanced.cell.c.value();
    for (Eigen::Index r = 0; r < h.rows(); ++r) next.add(BankEntry{h.row(r), c.row(r), domain.t});
    bank = std::move(next);
    out.push_back(make_record(domain.t, std::move(fwd.logits), domain.labels()));
  }
  return out;
}

Matrix predict_logits(const model::SyncModel& model, const HiddenStateBank& bank, const Matrix& x,
                      int t, std::uint64_t seed) {
  return forward_domain(model, bank, x, t, seed).logits;
}

std::vector<PredictionRecord> predict_erm(const train::ErmModel& model,
                                          const data::DomainSequence& targets) {
  if (targets.feature_dim != model.feature_dim()) {
    throw ValidationError("predict_erm: feature_dim mismatch");
  }
  std::vector<PredictionRecord> out;
  for (const auto& domain : targets.domains) {
    Matrix logits = model.logits(Tensor::constant(domain.features())).value();
    out.push_back(make_record(domain.t, std::move(logits), domain.labels()));
  }
  return out;
}

std::vector<PredictionRecord> predict_targets(const model::SyncModel& model,
                                              const HiddenStateBank& bank,
                                              const data::DomainSequence& intermediate,
                                              const data::DomainSequence& target,
                                              std::uint64_t seed) {
  HiddenStateBank running = bank;
  predict_sequence(model, running, intermediate, seed);
  return predict_sequence(model, running, target, seed);
}

}  // namespace sync_edg::predict
