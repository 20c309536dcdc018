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


#include "sync_edg/stochastic.hpp"

#include "sync_edg/errors.hpp"

#include <cmath>
#include <limits>

namespace sync_edg::stochastic {

Tensor reparameterize_gaussian(const Tensor& mu, const Tensor& sigma2, const Matrix& noise) {
  if (mu.rows() != sigma2.rows() || mu.cols() != sigma2.cols() || mu.rows() != noise.rows() ||
      mu.cols() != noise.cols()) {
    throw ValidationError("reparameterize_gaussian: mu, sigma2 and noise must share a shape");
  }
  if (!(sigma2.value().array() > 0.0).all()) {
    throw ValidationError("reparameterize_gaussian: variance must be strictly positive");
  }
  return mu + ad::sqrt(sigma2) * Tensor::constant(noise);
}

Tensor reparameterize_logvar(const Tensor& mu, const Tensor& logvar, const Matrix& noise) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols() || mu.rows() != noise.rows() ||
      mu.cols() != noise.cols()) {
    throw ValidationError("reparameterize_logvar: mu, logvar and noise must share a shape");
  }
  return mu + ad::exp(ad::scale(logvar, 0.5)) * Tensor::constant(noise);
}

Matrix gaussian_noise(Eigen::Index rows, Eigen::Index cols, NoiseMode mode,
                      std::mt19937_64& rng) {
  Matrix m = Matrix::Zero(rows, cols);
  if (mode == NoiseMode::kDeterministic) return m;
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

Matrix gumbel_noise(Eigen::Index rows, Eigen::Index cols, NoiseMode mode, std::mt19937_64& rng) {
  Matrix m = Matrix::Zero(rows, cols);
  if (mode == NoiseMode::kDeterministic) return m;
  // Open interval keeps both logs finite.
  std::uniform_real_distribution<double> dist(std::numeric_limits<double>::min(), 1.0);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double u = dist(rng);
      if (u >= 1.0) u = std::nextafter(1.0, 0.0);
      m(r, c) = -std::log(-std::log(u));
    }
  }
  return m;
}

int mask_size(double mask_ratio, int n) {
  if (!(mask_ratio > 0.0 && mask_ratio <= 1.0)) {
    throw ValidationError("mask ratio must lie in (0, 1]");
  }
  if (n <= 0) throw ValidationError("mask width must be positive");
  return std::max(1, static_cast<int>(std::lround(mask_ratio * n)));
}

KHotMask gumbel_khot(const Tensor& scores, int k, double tau_gumbel, NoiseMode mode,
                     std::mt19937_64& rng, bool straight_through) {
  const Eigen::Index rows = scores.rows();
  const Eigen::Index n = scores.cols();
  if (n <= 0 || rows <= 0) throw ValidationError("gumbel_khot: empty scores");
  if (k < 1 || k > n) {
    throw ValidationError("gumbel_khot: k = " + std::to_string(k) + " outside [1, " +
                          std::to_string(n) + "]");
  }
  if (!(tau_gumbel > 0.0)) throw ValidationError("gumbel_khot: tau_gumbel must be positive");

  KHotMask out;
  out.k = k;
  out.tau_gumbel = tau_gumbel;
  out.hard = Matrix::Zero(rows, n);
  out.selected.assign(static_cast<std::size_t>(rows), {});

  Matrix offset = Matrix::Zero(rows, n);
  Tensor soft;
  for (int round = 0; round < k; ++round) {
    const Matrix g = gumbel_noise(rows, n, mode, rng);
    const Tensor logits = ad::scale(scores + Tensor::constant(g + offset), 1.0 / tau_gumbel);
    const Tensor m = ad::softmax_rows(logits);
    soft = round == 0 ? m : ad::maximum(soft, m);
    for (Eigen::Index r = 0; r < rows; ++r) {
      Eigen::Index p = 0;
      // Ranks on the perturbed logits: same argmax as m without underflow ties.
      logits.value().row(r).maxCoeff(&p);
      out.selected[static_cast<std::size_t>(r)].push_back(p);
      out.hard(r, p) = 1.0;
      offset(r, p) += kMaskedScore;
    }
  }
  out.soft = soft;
  out.values = straight_through ? ad::straight_through(out.hard, soft) : soft;
  return out;
}

Tensor gumbel_categorical(const Tensor& logits, double tau_gumbel, NoiseMode mode,
                          std::mt19937_64& rng, bool hard) {
  if (logits.rows() == 0 || logits.cols() == 0) {
    throw ValidationError("gumbel_categorical: empty logits");
  }
  if (!(tau_gumbel > 0.0)) {
    throw ValidationError("gumbel_categorical: tau_gumbel must be positive");
  }
  const Matrix g = gumbel_noise(logits.rows(), logits.cols(), mode, rng);
  const Tensor perturbed = ad::scale(logits + Tensor::constant(g), 1.0 / tau_gumbel);
  const Tensor soft = ad::softmax_rows(perturbed);
  if (!hard) return soft;
  Matrix one_hot = Matrix::Zero(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index p = 0;
    perturbed.value().row(r).maxCoeff(&p);
    one_hot(r, p) = 1.0;
  }
  return ad::straight_through(std::move(one_hot), soft);
}

}  // namespace sync_edg::stochastic
