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


#include "sync_edg/latent_model.hpp"

#include "sync_edg/errors.hpp"

#include <array>

namespace sync_edg::model {

namespace {

void check_step(const RecurrentState& state, int t, const char* op) {
  if (t < 1 || state.domain_index != t - 1) {
    throw SequencingError(std::string(op) + ": state has consumed domain " +
                          std::to_string(state.domain_index) + ", cannot encode domain " +
                          std::to_string(t));
  }
}

void check_width(const Tensor& a, int width, const char* op, const char* what) {
  if (a.cols() != width) {
    throw ValidationError(std::string(op) + ": " + what + " has " + std::to_string(a.cols()) +
                          " columns, expected " + std::to_string(width));
  }
}

GaussianPosterior split_gaussian(const Tensor& out, int n) {
  return {ad::slice_cols(out, 0, n), ad::clamp(ad::slice_cols(out, n, n), kLogvarMin, kLogvarMax)};
}

RecurrentState zero_state(const nn::LstmCell& cell, Eigen::Index batch) {
  return {cell.zero_state(batch), 0};
}

}  // namespace

void ModelDims::validate() const {
  if (feature_dim <= 0 || num_classes <= 0 || latent_dim <= 0 || drift_states <= 0 ||
      hidden_width <= 0) {
    throw ValidationError("model dimensions must be positive");
  }
  if (!(mask_ratio > 0.0 && mask_ratio <= 1.0)) {
    throw ValidationError("mask_ratio must lie in (0, 1]");
  }
  if (!(tau_gumbel > 0.0)) throw ValidationError("tau_gumbel must be positive");
}

int ModelDims::mask_k() const { return stochastic::mask_size(mask_ratio, latent_dim); }

Matrix CategoricalPosterior::probs() const { return ad::softmax_rows(logits).value(); }

SyncModel::SyncModel(const ModelDims& dims, std::uint64_t seed) : dims_(dims) {
  dims_.validate();
  std::mt19937_64 rng(seed);
  const int d = dims_.feature_dim;
  const int c = dims_.num_classes;
  const int n = dims_.latent_dim;
  const int kd = dims_.drift_states;
  const int h = dims_.hidden_width;
  const auto act = dims_.activation;

  static_extractor_ = nn::Mlp({d, h, h, h}, act, rng);
  static_head_ = nn::Linear(h, 2 * n, rng);
  dynamic_extractor_ = nn::Mlp({d, h, h, h}, act, rng);
  dynamic_cell_ = nn::LstmCell(h, h, rng);
  dynamic_head_ = nn::Linear(h, 2 * n, rng);
  drift_cell_ = nn::LstmCell(c, h, rng);
  drift_head_ = nn::Linear(h, kd, rng);
  prior_dynamic_cell_ = nn::LstmCell(n, h, rng);
  prior_dynamic_head_ = nn::Linear(h, 2 * n, rng);
  prior_drift_cell_ = nn::LstmCell(kd, h, rng);
  prior_drift_head_ = nn::Linear(h, kd, rng);
  decoder_ = nn::Mlp({2 * n, h, h, d}, act, rng);
  static_masker_ = nn::Mlp({n, h, h, n}, act, rng);
  dynamic_masker_ = nn::Mlp({n, h, h, n}, act, rng);
  classifier_ = nn::Linear(2 * n + kd, c, rng);
}

void SyncModel::check_features(const Tensor& x, const char* op) const {
  check_width(x, dims_.feature_dim, op, "x");
}

GaussianPosterior SyncModel::encode_static(const Tensor& x) const {
  check_features(x, "encode_static");
  const Tensor f = nn::activate(static_extractor_(x), dims_.activation);
  return split_gaussian(static_head_(f), dims_.latent_dim);
}

std::pair<GaussianPosterior, RecurrentState> SyncModel::encode_dynamic(
    const Tensor& x, const RecurrentState& state, int t) const {
  check_features(x, "encode_dynamic");
  check_step(state, t, "encode_dynamic");
  const Tensor f = nn::activate(dynamic_extractor_(x), dims_.activation);
  RecurrentState next{dynamic_cell_.step(f, state.cell), t};
  return {split_gaussian(dynamic_head_(next.cell.h), dims_.latent_dim), std::move(next)};
}

std::pair<CategoricalPosterior, RecurrentState> SyncModel::encode_drift(
    const Tensor& y_one_hot, const RecurrentState& state, int t) const {
  check_width(y_one_hot, dims_.num_classes, "encode_drift", "labels");
  check_step(state, t, "encode_drift");
  RecurrentState next{drift_cell_.step(y_one_hot, state.cell), t};
  return {{drift_head_(next.cell.h)}, std::move(next)};
}

std::pair<GaussianPosterior, RecurrentState> SyncModel::prior_dynamic(
    const Tensor& z_prev, const RecurrentState& state, int t) const {
  check_width(z_prev, dims_.latent_dim, "prior_dynamic", "z_prev");
  check_step(state, t, "prior_dynamic");
  RecurrentState next{prior_dynamic_cell_.step(z_prev, state.cell), t};
  return {split_gaussian(prior_dynamic_head_(next.cell.h), dims_.latent_dim), std::move(next)};
}

std::pair<CategoricalPosterior, RecurrentState> SyncModel::prior_drift(
    const Tensor& z_prev, const RecurrentState& state, int t) const {
  check_width(z_prev, dims_.drift_states, "prior_drift", "z_prev");
  check_step(state, t, "prior_drift");
  RecurrentState next{prior_drift_cell_.step(z_prev, state.cell), t};
  return {{prior_drift_head_(next.cell.h)}, std::move(next)};
}

Tensor SyncModel::decode(const Tensor& z_st, const Tensor& z_dy) const {
  check_width(z_st, dims_.latent_dim, "decode", "z_st");
  check_width(z_dy, dims_.latent_dim, "decode", "z_dy");
  if (z_st.rows() != z_dy.rows()) throw ValidationError("decode: batch sizes differ");
  const std::array<Tensor, 2> parts{z_st, z_dy};
  return decoder_(ad::concat_cols(parts));
}

MaskedFeatures SyncModel::mask_causal(const Tensor& features, Branch which, NoiseMode mode,
                                      std::mt19937_64& rng, bool straight_through) const {
  check_width(features, dims_.latent_dim, "mask_causal", "features");
  const nn::Mlp& scorer = which == Branch::kStatic ? static_masker_ : dynamic_masker_;
  auto mask = stochastic::gumbel_khot(scorer(features), dims_.mask_k(), dims_.tau_gumbel, mode,
                                      rng, straight_through);
  Tensor masked = features * mask.values;
  return {std::move(masked), std::move(mask)};
}

Tensor SyncModel::classify(const Tensor& phi_st, const Tensor& phi_dy, const Tensor& z_d) const {
  check_width(phi_st, dims_.latent_dim, "classify", "phi_st");
  check_width(phi_dy, dims_.latent_dim, "classify", "phi_dy");
  check_width(z_d, dims_.drift_states, "classify", "z_d");
  if (phi_st.rows() != phi_dy.rows() || phi_st.rows() != z_d.rows()) {
    throw ValidationError("classify: batch sizes differ");
  }
  const std::array<Tensor, 3> parts{phi_st, phi_dy, z_d};
  return classifier_(ad::concat_cols(parts));
}

RecurrentState SyncModel::initial_dynamic_state(Eigen::Index batch) const {
  return zero_state(dynamic_cell_, batch);
}
RecurrentState SyncModel::initial_drift_state(Eigen::Index batch) const {
  return zero_state(drift_cell_, batch);
}
RecurrentState SyncModel::initial_prior_dynamic_state(Eigen::Index batch) const {
  return zero_state(prior_dynamic_cell_, batch);
}
RecurrentState SyncModel::initial_prior_drift_state(Eigen::Index batch) const {
  return zero_state(prior_drift_cell_, batch);
}

nn::ParameterList SyncModel::parameters() const {
  nn::ParameterList out;
  static_extractor_.collect("static_encoder.extractor", out);
  static_head_.collect("static_encoder.head", out);
  dynamic_extractor_.collect("dynamic_encoder.extractor", out);
  dynamic_cell_.collect("dynamic_encoder.lstm", out);
  dynamic_head_.collect("dynamic_encoder.head", out);
  drift_cell_.collect("drift_encoder.lstm", out);
  drift_head_.collect("drift_encoder.head", out);
  prior_dynamic_cell_.collect("dynamic_prior.lstm", out);
  prior_dynamic_head_.collect("dynamic_prior.head", out);
  prior_drift_cell_.collect("drift_prior.lstm", out);
  prior_drift_head_.collect("drift_prior.head", out);
  decoder_.collect("decoder", out);
  static_masker_.collect("static_masker", out);
  dynamic_masker_.collect("dynamic_masker", out);
  classifier_.collect("classifier", out);
  return out;
}

std::vector<Matrix> SyncModel::snapshot() const {
  std::vector<Matrix> out;
  for (const auto& p : parameters()) out.push_back(p.tensor.value());
  return out;
}

void SyncModel::restore(const std::vector<Matrix>& values) {
  auto params = parameters();
  if (values.size() != params.size()) {
    throw ValidationError("restore: expected " + std::to_string(params.size()) +
                          " tensors, got " + std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& dst = params[i].tensor.mutable_value();
    if (dst.rows() != values[i].rows() || dst.cols() != values[i].cols()) {
      throw ValidationError("restore: shape mismatch for " + params[i].name);
    }
    dst = values[i];
  }
}

Tensor one_hot(std::span<const int> labels, int num_classes) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " out of range");
    }
    m(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return Tensor::constant(std::move(m));
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace sync_edg::model
