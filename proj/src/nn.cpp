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

#include "sync_edg/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace sync_edg::nn {

namespace {

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  // Fill in row-major order so the draw sequence does not depend on storage.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

Tensor activate(const Tensor& x, Activation act) {
  return act == Activation::kRelu ? ad::relu(x) : ad::tanh(x);
}

Linear::Linear(int in, int out, std::mt19937_64& rng, bool bias) : has_bias_(bias) {
  if (in <= 0 || out <= 0) throw std::invalid_argument("Linear: sizes must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = Tensor(uniform(in, out, bound, rng), true);
  if (has_bias_) bias_ = Tensor(uniform(1, out, bound, rng), true);
}

Tensor Linear::operator()(const Tensor& x) const {
  if (x.cols() != weight_.rows()) {
    throw std::invalid_argument("Linear: expected " + std::to_string(weight_.rows()) +
                                " input features, got " + std::to_string(x.cols()));
  }
  Tensor y = ad::matmul(x, weight_);
  return has_bias_ ? ad::add_row(y, bias_) : y;
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight_});
  if (has_bias_) out.push_back({prefix + ".bias", bias_});
}

Mlp::Mlp(std::vector<int> widths, Activation act, std::mt19937_64& rng) : act_(act) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least two widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.emplace_back(widths[i], widths[i + 1], rng);
  }
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    if (i + 1 < layers_.size()) h = activate(h, act_);
  }
  return h;
}

void Mlp::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect(prefix + "." + std::to_string(i), out);
  }
}

LstmCell::LstmCell(int in, int hidden, std::mt19937_64& rng) : hidden_(hidden) {
  if (in <= 0 || hidden <= 0) throw std::invalid_argument("LstmCell: sizes must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  w_ih_ = Tensor(uniform(in, 4 * hidden, bound, rng), true);
  w_hh_ = Tensor(uniform(hidden, 4 * hidden, bound, rng), true);
  bias_ = Tensor(uniform(1, 4 * hidden, bound, rng), true);
}

LstmState LstmCell::step(const Tensor& x, const LstmState& state) const {
  if (x.cols() != w_ih_.rows()) throw std::invalid_argument("LstmCell: input width mismatch");
  if (state.h.rows() != x.rows() || state.h.cols() != hidden_) {
    throw std::invalid_argument("LstmCell: state shape mismatch");
  }
  const Tensor gates = ad::add_row(ad::matmul(x, w_ih_) + ad::matmul(state.h, w_hh_), bias_);
  const Tensor i = ad::sigmoid(ad::slice_cols(gates, 0, hidden_));
  const Tensor f = ad::sigmoid(ad::slice_cols(gates, hidden_, hidden_));
  const Tensor g = ad::tanh(ad::slice_cols(gates, 2 * hidden_, hidden_));
  const Tensor o = ad::sigmoid(ad::slice_cols(gates, 3 * hidden_, hidden_));
  Tensor c = f * state.c + i * g;
  Tensor h = o * ad::tanh(c);
  return {std::move(h), std::move(c)};
}

LstmState LstmCell::zero_state(Eigen::Index batch) const {
  return {Tensor::zeros(batch, hidden_), Tensor::zeros(batch, hidden_)};
}

void LstmCell::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".w_ih", w_ih_});
  out.push_back({prefix + ".w_hh", w_hh_});
  out.push_back({prefix + ".bias", bias_});
}

Adam::Adam(ParameterList params, AdamOptions options)
    : params_(std::move(params)), opt_(options) {
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    v_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

double global_grad_norm(const ParameterList& params) {
  double sq = 0.0;
  for (const auto& p : params) sq += p.tensor.grad().squaredNorm();
  return std::sqrt(sq);
}

double Adam::step() {
  ++t_;
  const double norm = global_grad_norm(params_);
  const double clip =
      (opt_.clip_norm > 0.0 && norm > opt_.clip_norm) ? opt_.clip_norm / (norm + 1e-12) : 1.0;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix g = params_[i].tensor.grad() * clip;
    m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
    v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g.cwiseProduct(g);
    const auto mhat = m_[i].array() / bc1;
    const auto vhat = v_[i].array() / bc2;
    params_[i].tensor.mutable_value().array() -=
        opt_.learning_rate * mhat / (vhat.sqrt() + opt_.epsilon);
  }
  return norm;
}

}  // namespace sync_edg::nn
