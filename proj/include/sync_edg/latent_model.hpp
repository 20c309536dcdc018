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

// The SYNC network: static, dynamic and drift encoders, the learned dynamic
// and drift priors, decoder, linear classifier and the two causal maskers.

#include "sync_edg/autodiff.hpp"
#include "sync_edg/nn.hpp"
#include "sync_edg/stochastic.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sync_edg::model {

using ad::Matrix;
using ad::Tensor;
using stochastic::NoiseMode;

inline constexpr double kLogvarMin = -8.0;
inline constexpr double kLogvarMax = 8.0;

struct ModelDims {
  int feature_dim = 2;
  int num_classes = 2;
  int latent_dim = 20;    // N
  int drift_states = 2;   // K_d
  int hidden_width = 64;
  double mask_ratio = 0.6;  // kappa
  double tau_gumbel = stochastic::kDefaultTauGumbel;
  nn::Activation activation = nn::Activation::kRelu;

  // Throws ValidationError on a non-positive size or kappa outside (0, 1].
  void validate() const;
  int mask_k() const;
  bool operator==(const ModelDims&) const = default;
};

// Diagonal Gaussian, one row per sample. sigma2 = exp(logvar) > 0.
struct GaussianPosterior {
  Tensor mu;
  Tensor logvar;

  Matrix sigma2() const { return logvar.value().array().exp().matrix(); }
};

// Categorical over drift states, kept as logits.
struct CategoricalPosterior {
  Tensor logits;

  Tensor log_probs() const { return ad::log_softmax_rows(logits); }
  Matrix probs() const;
};

// LSTM state plus the last domain index it consumed (0 for the initial
// zero state).
struct RecurrentState {
  nn::LstmState cell;
  int domain_index = 0;

  Eigen::Index batch() const { return cell.h.rows(); }
};

enum class Branch { kStatic, kDynamic };

struct MaskedFeatures {
  Tensor masked;
  stochastic::KHotMask mask;
};

class SyncModel {
 public:
  SyncModel(const ModelDims& dims, std::uint64_t seed);
  // Parameters are shared handles; copies would alias them.
  SyncModel(const SyncModel&) = delete;
  SyncModel& operator=(const SyncModel&) = delete;
  SyncModel(SyncModel&&) = default;
  SyncModel& operator=(SyncModel&&) = default;

  const ModelDims& dims() const { return dims_; }

  GaussianPosterior encode_static(const Tensor& x) const;

  // Encodes domain t from a state that has consumed domain t - 1.
  std::pair<GaussianPosterior, RecurrentState> encode_dynamic(const Tensor& x,
                                                              const RecurrentState& state,
                                                              int t) const;
  std::pair<CategoricalPosterior, RecurrentState> encode_drift(const Tensor& y_one_hot,
                                                               const RecurrentState& state,
                                                               int t) const;

  // Priors for step t given the latent sampled at t - 1 (zeros at t = 1).
  std::pair<GaussianPosterior, RecurrentState> prior_dynamic(const Tensor& z_prev,
                                                             const RecurrentState& state,
                                                             int t) const;
  std::pair<CategoricalPosterior, RecurrentState> prior_drift(const Tensor& z_prev,
                                                              const RecurrentState& state,
                                                              int t) const;

  Tensor decode(const Tensor& z_st, const Tensor& z_dy) const;

  // features * mask with the mask drawn from the branch's score network.
  MaskedFeatures mask_causal(const Tensor& features, Branch which, NoiseMode mode,
                             std::mt19937_64& rng, bool straight_through = true) const;

  Tensor classify(const Tensor& phi_st, const Tensor& phi_dy, const Tensor& z_d) const;

  // Zero states for the three recurrences.
  RecurrentState initial_dynamic_state(Eigen::Index batch) const;
  RecurrentState initial_drift_state(Eigen::Index batch) const;
  RecurrentState initial_prior_dynamic_state(Eigen::Index batch) const;
  RecurrentState initial_prior_drift_state(Eigen::Index batch) const;

  // Every trainable tensor with a stable dotted name.
  nn::ParameterList parameters() const;

  // Deep copy of all parameter values, in parameters() order.
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

 private:
  void check_features(const Tensor& x, const char* op) const;

  ModelDims dims_;
  nn::Mlp static_extractor_;
  nn::Linear static_head_;
  nn::Mlp dynamic_extractor_;
  nn::LstmCell dynamic_cell_;
  nn::Linear dynamic_head_;
  nn::LstmCell drift_cell_;
  nn::Linear drift_head_;
  nn::LstmCell prior_dynamic_cell_;
  nn::Linear prior_dynamic_head_;
  nn::LstmCell prior_drift_cell_;
  nn::Linear prior_drift_head_;
  nn::Mlp decoder_;
  nn::Mlp static_masker_;
  nn::Mlp dynamic_masker_;
  nn::Linear classifier_;
};

Tensor one_hot(std::span<const int> labels, int num_classes);

// FNV-1a over a byte string; stable across platforms.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace sync_edg::model
