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

// Central finite differences of the full SYNC objective on a toy model.
// Straight-through masks and stop-gradients have no finite-difference
// counterpart, so the check runs the relaxed forward: soft masks, soft
// drift samples, no detached contrastive targets, zero noise.

#include "sync_edg/latent_model.hpp"
#include "sync_edg/objectives.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace gradcheck {

struct GroupError {
  std::string name;
  double analytic_norm = 0.0;
  double relative_error = 0.0;
};

inline std::vector<GroupError> run(std::uint64_t seed, double step = 1e-5) {
  namespace obj = sync_edg::objectives;
  namespace model = sync_edg::model;
  using sync_edg::ad::Matrix;

  model::ModelDims dims;
  dims.latent_dim = 4;
  dims.hidden_width = 6;
  dims.drift_states = 2;
  dims.mask_ratio = 0.5;
  // tanh keeps the objective smooth; relu kinks would corrupt the differences.
  dims.activation = sync_edg::nn::Activation::kTanh;
  model::SyncModel m(dims, seed);

  std::mt19937_64 data_rng(seed + 1);
  std::normal_distribution<double> nd;
  std::vector<Matrix> x(2, Matrix(4, 2));
  for (auto& xt : x) {
    for (Eigen::Index i = 0; i < xt.size(); ++i) xt.data()[i] = nd(data_rng);
  }
  const std::vector<std::vector<int>> y{{0, 1, 0, 1}, {1, 1, 0, 0}};
  const std::vector<double> sizes{4.0, 4.0};

  obj::ForwardOptions opt;
  opt.noise = sync_edg::stochastic::NoiseMode::kDeterministic;
  opt.straight_through = false;
  opt.detach_static_targets = false;
  // Weights large enough that every term moves the total.
  opt.alpha1 = 1.0;
  opt.alpha2 = 0.5;

  auto loss = [&] {
    std::mt19937_64 rng(0);
    return obj::forward_sequence(m, x, y, 1, sizes, opt, rng).loss.total;
  };

  auto params = m.parameters();
  for (auto& p : params) p.tensor.zero_grad();
  loss().backward();

  std::vector<GroupError> out;
  for (const auto& p : params) {
    auto tensor = p.tensor;
    const Matrix analytic = tensor.grad();
    Matrix numeric(analytic.rows(), analytic.cols());
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      double& v = tensor.mutable_value().data()[i];
      const double orig = v;
      v = orig + step;
      const double up = loss().item();
      v = orig - step;
      const double down = loss().item();
      v = orig;
      numeric.data()[i] = (up - down) / (2 * step);
    }
    const double denom = std::max({analytic.norm(), numeric.norm(), 1e-12});
    out.push_back({p.name, analytic.norm(), (analytic - numeric).norm() / denom});
  }
  return out;
}

}  // namespace gradcheck
