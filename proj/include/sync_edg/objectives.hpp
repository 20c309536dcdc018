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

// Loss terms of the SYNC objective: the evolving-pattern ELBO (feature
// reconstruction, static/dynamic KLs, classification and drift KL), the
// mutual-information penalty between static and dynamic latents, and the
// two contrastive conditional-MI causal losses.

#include "sync_edg/autodiff.hpp"
#include "sync_edg/latent_model.hpp"

#include <random>
#include <span>
#include <string>
#include <vector>

namespace sync_edg::objectives {

using ad::Matrix;
using ad::Tensor;
using model::CategoricalPosterior;
using model::GaussianPosterior;

inline constexpr double kDefaultTauContrastive = 0.1;
inline constexpr double kCategoricalEpsilon = 1e-8;

// KL(q || p) between diagonal Gaussians: summed over dimensions, averaged
// over rows.
Tensor gaussian_kl(const GaussianPosterior& q, const GaussianPosterior& p);
// KL(q || N(0, I)).
Tensor gaussian_kl_standard(const GaussianPosterior& q);
// Variance-parameterized form. Throws ValidationError on non-positive
// variances or mismatched shapes.
double gaussian_kl(const Matrix& mu_q, const Matrix& sigma2_q, const Matrix& mu_p,
                   const Matrix& sigma2_p);

// sum q log(q / p) per row, averaged over rows, with 0 log 0 = 0. Entries of
// p below kCategoricalEpsilon are clamped there and a warning is logged.
double categorical_kl(const Matrix& q, const Matrix& p);
// Differentiable form on logits; exact, no clamping needed.
Tensor categorical_kl(const CategoricalPosterior& q, const CategoricalPosterior& p);

// Entropy estimate -(1/B) sum_i log[(1/(B * B')) sum_j q(z_i | x_j)] with B
// the batch size and B' = dataset_size.
Tensor mws_entropy(const Tensor& z, const GaussianPosterior& posteriors, double dataset_size);
// Same estimate from a precomputed B x B matrix of log q(z_i | x_j).
Tensor mws_entropy_from_log_density(const Tensor& log_q, double dataset_size);

// H(z_st) + H(z_dy) - H(z_st, z_dy), each by mws_entropy. The joint density
// factorizes over the concatenated coordinates.
Tensor loss_mutual_info(const GaussianPosterior& st, const GaussianPosterior& dy,
                        const Tensor& z_st, const Tensor& z_dy, double dataset_size);

struct ContrastiveResult {
  Tensor value;
  int anchors_used = 0;
  // Anchors with no positive or no negative among the targets.
  int anchors_skipped = 0;
};

// Mean over anchors (and over each anchor's positives) of
//   log( e^{l+/tau} / (e^{l+/tau} + sum_neg e^{l-/tau}) ),
// l = cosine similarity. Targets sharing the anchor's label are positives,
// all others negatives. Zero rows are rejected with ValidationError. With no
// usable anchor the value is 0.
ContrastiveResult contrastive_cmi(const Tensor& anchors, std::span<const int> anchor_labels,
                                  const Tensor& targets, std::span<const int> target_labels,
                                  double tau_contrastive = kDefaultTauContrastive);

// -sum_{t >= 2} contrastive_cmi(phi_st[t], phi_st[t-1]) over masked static
// representations of consecutive domains.
Tensor loss_static_causal(std::span<const Tensor> phi_st, std::span<const std::vector<int>> labels,
                          double tau_contrastive = kDefaultTauContrastive);

// -sum_t contrastive_cmi(phi_dy[t], phi_st[t]) within each domain. With
// `detach_targets` no gradient reaches the static representations.
Tensor loss_dynamic_causal(std::span<const Tensor> phi_dy, std::span<const Tensor> phi_st,
                           std::span<const std::vector<int>> labels,
                           double tau_contrastive = kDefaultTauContrastive,
                           bool detach_targets = true);

struct FeaturePatternTerms {
  Tensor recon;
  Tensor kl_static;
  Tensor kl_dynamic;
};

// Unit-variance Gaussian reconstruction (0.5 * squared error, batch mean)
// and the two KL terms, summed over domains.
FeaturePatternTerms loss_feature_pattern(std::span<const Tensor> x_seq,
                                         std::span<const Tensor> x_hat_seq,
                                         std::span<const GaussianPosterior> posteriors_st,
                                         std::span<const GaussianPosterior> posteriors_dy,
                                         std::span<const GaussianPosterior> priors_dy);

struct MechanismTerms {
  Tensor nll_class;
  Tensor kl_drift;
};

MechanismTerms loss_mechanism(std::span<const Tensor> logits_seq,
                              std::span<const std::vector<int>> labels_seq,
                              std::span<const CategoricalPosterior> drift_posteriors,
                              std::span<const CategoricalPosterior> drift_priors);

struct LossTerms {
  Tensor recon;
  Tensor kl_static;
  Tensor kl_dynamic;
  Tensor kl_drift;
  Tensor nll_class;
  Tensor mi_penalty;
  Tensor static_contrastive;
  Tensor dynamic_contrastive;
};

struct LossBreakdown {
  double recon = 0.0;
  double kl_static = 0.0;
  double kl_dynamic = 0.0;
  double kl_drift = 0.0;
  double nll_class = 0.0;
  double mi_penalty = 0.0;
  double static_contrastive = 0.0;
  double dynamic_contrastive = 0.0;
  double total = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;

  static const std::vector<std::string>& field_names();
  std::vector<double> values() const;
};

struct TotalLoss {
  Tensor total;
  LossBreakdown breakdown;
};

// (recon + kl_static + kl_dynamic) + (nll_class + kl_drift) + alpha1 * mi
// + alpha2 * (static + dynamic contrastive). Throws NonFiniteLossError
// naming the first non-finite part.
TotalLoss total_loss(const LossTerms& parts, double alpha1, double alpha2);

struct ForwardOptions {
  stochastic::NoiseMode noise = stochastic::NoiseMode::kStochastic;
  // Hard k-hot masks forward with soft gradients. false uses the soft masks.
  bool straight_through = true;
  bool detach_static_targets = true;
  double tau_contrastive = kDefaultTauContrastive;
  double alpha1 = 1.0;
  double alpha2 = 0.02;
};

struct SequenceForward {
  TotalLoss loss;
  // q_theta state after the final domain.
  model::RecurrentState final_dynamic_state;
};

// One pass of the full model over index-aligned batches x[t], y[t] whose
// first domain has timestamp first_t. dataset_sizes[t] is B' for the MI term.
SequenceForward forward_sequence(const model::SyncModel& model, std::span<const Matrix> x,
                                 std::span<const std::vector<int>> y, int first_t,
                                 std::span<const double> dataset_sizes,
                                 const ForwardOptions& options, std::mt19937_64& rng);

}  // namespace sync_edg::objectives
