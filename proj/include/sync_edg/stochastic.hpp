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

// Differentiable sampling: Gaussian reparameterization, Gumbel-Softmax
// categorical draws and k-hot masks drawn without replacement.

#include "sync_edg/autodiff.hpp"

#include <random>

namespace sync_edg::stochastic {

using ad::Matrix;
using ad::Tensor;

// kDeterministic replaces every noise draw by zero (Gaussian) or zero Gumbel
// perturbation, turning the samplers into their mode-seeking counterparts.
enum class NoiseMode { kStochastic, kDeterministic };

// mu + sqrt(sigma2) * noise. Throws ValidationError on non-positive variance
// or mismatched shapes.
Tensor reparameterize_gaussian(const Tensor& mu, const Tensor& sigma2, const Matrix& noise);

// Same draw parameterized by log-variance, as used inside the model.
Tensor reparameterize_logvar(const Tensor& mu, const Tensor& logvar, const Matrix& noise);

// Standard-normal matrix, or zeros in deterministic mode.
Matrix gaussian_noise(Eigen::Index rows, Eigen::Index cols, NoiseMode mode, std::mt19937_64& rng);
// Gumbel(0, 1) matrix, or zeros in deterministic mode.
Matrix gumbel_noise(Eigen::Index rows, Eigen::Index cols, NoiseMode mode, std::mt19937_64& rng);

inline constexpr double kDefaultTauGumbel = 0.5;
// Added to a selected score so later draws cannot pick it again.
inline constexpr double kMaskedScore = -1e9;

// round(kappa * n), at least 1.
int mask_size(double mask_ratio, int n);

struct KHotMask {
  // What downstream code consumes: the hard mask forward with gradients of
  // the soft mask (straight-through), or the soft mask itself when relaxed.
  Tensor values;
  Tensor soft;
  // Exactly k ones per row.
  Matrix hard;
  // Selected positions per row, in draw order.
  std::vector<std::vector<Eigen::Index>> selected;
  int k = 0;
  double tau_gumbel = kDefaultTauGumbel;
};

// Row-wise k-hot sample from log-scores (one row per sample). Each of the k
// rounds draws m^l = softmax((s + xi^l) / tau) and then masks the argmax
// position of m^l; the soft mask is the elementwise max over rounds.
// `straight_through` = false makes `values` the soft mask.
KHotMask gumbel_khot(const Tensor& scores, int k, double tau_gumbel, NoiseMode mode,
                     std::mt19937_64& rng, bool straight_through = true);

// Relaxed one-hot draw softmax((logits + g) / tau) per row. With `hard` the
// forward value is the one-hot argmax (lowest index on ties) and gradients
// flow through the relaxed sample.
Tensor gumbel_categorical(const Tensor& logits, double tau_gumbel, NoiseMode mode,
                          std::mt19937_64& rng, bool hard = false);

}  // namespace sync_edg::stochastic
