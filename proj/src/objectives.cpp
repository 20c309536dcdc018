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


#include "sync_edg/objectives.hpp"

#include "sync_edg/errors.hpp"
#include "sync_edg/stochastic.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>

namespace sync_edg::objectives {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string(op) + ": shape mismatch");
  }
}

Tensor zero() { return Tensor::scalar(0.0); }

GaussianPosterior standard_normal_like(const GaussianPosterior& q) {
  return {Tensor::zeros(q.mu.rows(), q.mu.cols()), Tensor::zeros(q.mu.rows(), q.mu.cols())};
}

double log_add_exp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Fused InfoNCE term on a precomputed similarity/temperature matrix.
ContrastiveResult contrastive_from_logits(const Tensor& s, std::span<const int> anchor_labels,
                                          std::span<const int> target_labels) {
  const Matrix& S = s.value();
  const Eigen::Index na = S.rows();
  const Eigen::Index nt = S.cols();
  ContrastiveResult res;

  // Per valid anchor: log-sum-exp over negatives and the softmax weights.
  std::vector<Eigen::Index> valid;
  Eigen::VectorXd neg_lse = Eigen::VectorXd::Zero(na);
  for (Eigen::Index j = 0; j < na; ++j) {
    bool has_pos = false;
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < nt; ++i) {
      if (target_labels[static_cast<std::size_t>(i)] == anchor_labels[static_cast<std::size_t>(j)]) {
        has_pos = true;
      } else {
        m = std::max(m, S(j, i));
      }
    }
    if (!has_pos || !std::isfinite(m)) {
      ++res.anchors_skipped;
      continue;
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < nt; ++i) {
      if (target_labels[static_cast<std::size_t>(i)] != anchor_labels[static_cast<std::size_t>(j)]) {
        acc += std::exp(S(j, i) - m);
      }
    }
    neg_lse(j) = m + std::log(acc);
    valid.push_back(j);
  }
  res.anchors_used = static_cast<int>(valid.size());
  if (valid.empty()) {
    res.value = ad::make_result(Matrix::Zero(1, 1), {s}, [](ad::Node&) {});
    return res;
  }

  double total = 0.0;
  for (Eigen::Index j : valid) {
    double per = 0.0;
    int n_pos = 0;
    for (Eigen::Index k = 0; k < nt; ++k) {
      if (target_labels[static_cast<std::size_t>(k)] != anchor_labels[static_cast<std::size_t>(j)]) {
        continue;
      }
      per += S(j, k) - log_add_exp(S(j, k), neg_lse(j));
      ++n_pos;
    }
    total += per / n_pos;
  }
  const double inv_valid = 1.0 / static_cast<double>(valid.size());

  std::vector<int> a_lab(anchor_labels.begin(), anchor_labels.end());
  std::vector<int> t_lab(target_labels.begin(), target_labels.end());
  res.value = ad::make_result(
      Matrix::Constant(1, 1, total * inv_valid), {s},
      [valid, neg_lse, inv_valid, a_lab = std::move(a_lab), t_lab = std::move(t_lab)](ad::Node& self) {
        ad::Node& parent = *self.parents[0];
        if (!parent.requires_grad) return;
        const Matrix& S = parent.value;
        Matrix& G = parent.grad_buffer();
        const double g = self.grad(0, 0) * inv_valid;
        for (Eigen::Index j : valid) {
          const int label = a_lab[static_cast<std::size_t>(j)];
          int n_pos = 0;
          for (int tl : t_lab) n_pos += tl == label ? 1 : 0;
          const double gj = g / n_pos;
          // d/dS_jk of S_jk - log(e^S_jk + e^n_j) is 1 - sigma_jk; the same
          // factor flows into n_j with a minus sign.
          double into_neg = 0.0;
          for (Eigen::Index k = 0; k < S.cols(); ++k) {
            if (t_lab[static_cast<std::size_t>(k)] != label) continue;
            const double sigma = std::exp(S(j, k) - log_add_exp(S(j, k), neg_lse(j)));
            G(j, k) += gj * (1.0 - sigma);
            into_neg += gj * (1.0 - sigma);
          }
          for (Eigen::Index i = 0; i < S.cols(); ++i) {
            if (t_lab[static_cast<std::size_t>(i)] == label) continue;
            G(j, i) -= into_neg * std::exp(S(j, i) - neg_lse(j));
          }
        }
      });
  return res;
}

void reject_zero_rows(const Tensor& a, const char* what) {
  const Eigen::VectorXd norms = a.value().rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r) {
    if (!(norms(r) > 0.0)) {
      throw ValidationError(std::string("contrastive_cmi: ") + what + " row " + std::to_string(r) +
                            " has zero norm, cosine similarity undefined");
    }
  }
}

}  // namespace

Tensor gaussian_kl(const GaussianPosterior& q, const GaussianPosterior& p) {
  require_same_shape(q.mu, p.mu, "gaussian_kl");
  require_same_shape(q.logvar, p.logvar, "gaussian_kl");
  require_same_shape(q.mu, q.logvar, "gaussian_kl");
  // 0.5 * (lv_p - lv_q + (s2_q + (mu_q - mu_p)^2) / s2_p - 1)
  const Tensor ratio = ad::div(ad::exp(q.logvar) + ad::square(q.mu - p.mu), ad::exp(p.logvar));
  const Tensor per = ad::add_scalar(p.logvar - q.logvar + ratio, -1.0);
  return ad::scale(ad::sum(per), 0.5 / static_cast<double>(q.mu.rows()));
}

Tensor gaussian_kl_standard(const GaussianPosterior& q) {
  return gaussian_kl(q, standard_normal_like(q));
}

double gaussian_kl(const Matrix& mu_q, const Matrix& sigma2_q, const Matrix& mu_p,
                   const Matrix& sigma2_p) {
  if (mu_q.rows() != sigma2_q.rows() || mu_q.cols() != sigma2_q.cols() ||
      mu_q.rows() != mu_p.rows() || mu_q.cols() != mu_p.cols() ||
      mu_p.rows() != sigma2_p.rows() || mu_p.cols() != sigma2_p.cols()) {
    throw ValidationError("gaussian_kl: shape mismatch");
  }
  if (!(sigma2_q.array() > 0.0).all() || !(sigma2_p.array() > 0.0).all()) {
    throw ValidationError("gaussian_kl: variances must be strictly positive");
  }
  const GaussianPosterior q{Tensor::constant(mu_q),
                            Tensor::constant(sigma2_q.array().log().matrix())};
  const GaussianPosterior p{Tensor::constant(mu_p),
                            Tensor::constant(sigma2_p.array().log().matrix())};
  return gaussian_kl(q, p).item();
}

double categorical_kl(const Matrix& q, const Matrix& p) {
  if (q.rows() != p.rows() || q.cols() != p.cols() || q.size() == 0) {
    throw ValidationError("categorical_kl: shape mismatch");
  }
  double total = 0.0;
  bool clamped = false;
  for (Eigen::Index r = 0; r < q.rows(); ++r) {
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
      const double qi = q(r, c);
      if (qi <= 0.0) continue;
      double pi = p(r, c);
      if (pi < kCategoricalEpsilon) {
        pi = kCategoricalEpsilon;
        clamped = true;
      }
      total += qi * std::log(qi / pi);
    }
  }
  if (clamped) {
    spdlog::warn("categorical_kl: prior has (near) zero mass where the posterior has mass; "
                 "clamped to {}",
                 kCategoricalEpsilon);
  }
  return total / static_cast<double>(q.rows());
}

Tensor categorical_kl(const CategoricalPosterior& q, const CategoricalPosterior& p) {
  require_same_shape(q.logits, p.logits, "categorical_kl");
  const Tensor log_q = q.log_probs();
  const Tensor kl = ad::exp(log_q) * (log_q - p.log_probs());
  return ad::scale(ad::sum(kl), 1.0 / static_cast<double>(q.logits.rows()));
}

Tensor mws_entropy_from_log_density(const Tensor& log_q, double dataset_size) {
  const auto b = static_cast<double>(log_q.rows());
  if (log_q.rows() == 0 || log_q.rows() != log_q.cols()) {
    throw ValidationError("mws_entropy: log-density matrix must be square and non-empty");
  }
  if (dataset_size < b) throw ValidationError("mws_entropy: dataset_size smaller than batch");
  return ad::add_scalar(ad::neg(ad::mean(ad::logsumexp_rows(log_q))), std::log(b * dataset_size));
}

Tensor mws_entropy(const Tensor& z, const GaussianPosterior& posteriors, double dataset_size) {
  require_same_shape(z, posteriors.mu, "mws_entropy");
  require_same_shape(z, posteriors.logvar, "mws_entropy");
  return mws_entropy_from_log_density(
      ad::gaussian_log_density_matrix(z, posteriors.mu, posteriors.logvar), dataset_size);
}

Tensor loss_mutual_info(const GaussianPosterior& st, const GaussianPosterior& dy,
                        const Tensor& z_st, const Tensor& z_dy, double dataset_size) {
  require_same_shape(z_st, st.mu, "loss_mutual_info");
  require_same_shape(z_dy, dy.mu, "loss_mutual_info");
  if (z_st.rows() != z_dy.rows()) throw ValidationError("loss_mutual_info: batch sizes differ");
  const Tensor lq_st = ad::gaussian_log_density_matrix(z_st, st.mu, st.logvar);
  const Tensor lq_dy = ad::gaussian_log_density_matrix(z_dy, dy.mu, dy.logvar);
  return mws_entropy_from_log_density(lq_st, dataset_size) +
         mws_entropy_from_log_density(lq_dy, dataset_size) -
         mws_entropy_from_log_density(lq_st + lq_dy, dataset_size);
}

ContrastiveResult contrastive_cmi(const Tensor& anchors, std::span<const int> anchor_labels,
                                  const Tensor& targets, std::span<const int> target_labels,
                                  double tau_contrastive) {
  if (anchors.cols() != targets.cols()) {
    throw ValidationError("contrastive_cmi: anchors and targets differ in width");
  }
  if (static_cast<std::size_t>(anchors.rows()) != anchor_labels.size() ||
      static_cast<std::size_t>(targets.rows()) != target_labels.size()) {
    throw ValidationError("contrastive_cmi: label count does not match rows");
  }
  if (!(tau_contrastive > 0.0)) throw ValidationError("contrastive_cmi: tau must be positive");
  reject_zero_rows(anchors, "anchor");
  reject_zero_rows(targets, "target");
  const Tensor sim = ad::matmul_nt(ad::l2_normalize_rows(anchors), ad::l2_normalize_rows(targets));
  return contrastive_from_logits(ad::scale(sim, 1.0 / tau_contrastive), anchor_labels,
                                 target_labels);
}

Tensor loss_static_causal(std::span<const Tensor> phi_st, std::span<const std::vector<int>> labels,
                          double tau_contrastive) {
  if (phi_st.size() != labels.size()) throw ValidationError("loss_static_causal: misaligned");
  Tensor loss = zero();
  for (std::size_t t = 1; t < phi_st.size(); ++t) {
    auto r = contrastive_cmi(phi_st[t], labels[t], phi_st[t - 1], labels[t - 1], tau_contrastive);
    if (r.anchors_skipped > 0) {
      spdlog::debug("loss_static_causal: skipped {} anchors at pair {}", r.anchors_skipped, t);
    }
    loss = loss - r.value;
  }
  return loss;
}

Tensor loss_dynamic_causal(std::span<const Tensor> phi_dy, std::span<const Tensor> phi_st,
                           std::span<const std::vector<int>> labels, double tau_contrastive,
                           bool detach_targets) {
  if (phi_dy.size() != phi_st.size() || phi_dy.size() != labels.size()) {
    throw ValidationError("loss_dynamic_causal: misaligned");
  }
  Tensor loss = zero();
  for (std::size_t t = 0; t < phi_dy.size(); ++t) {
    const Tensor targets = detach_targets ? ad::detach(phi_st[t]) : phi_st[t];
    auto r = contrastive_cmi(phi_dy[t], labels[t], targets, labels[t], tau_contrastive);
    if (r.anchors_skipped > 0) {
      spdlog::debug("loss_dynamic_causal: skipped {} anchors in domain {}", r.anchors_skipped, t);
    }
    loss = loss - r.value;
  }
  return loss;
}

FeaturePatternTerms loss_feature_pattern(std::span<const Tensor> x_seq,
                                         std::span<const Tensor> x_hat_seq,
                                         std::span<const GaussianPosterior> posteriors_st,
                                         std::span<const GaussianPosterior> posteriors_dy,
                                         std::span<const GaussianPosterior> priors_dy) {
  const std::size_t T = x_seq.size();
  if (x_hat_seq.size() != T || posteriors_st.size() != T || posteriors_dy.size() != T ||
      priors_dy.size() != T) {
    throw ValidationError("loss_feature_pattern: sequences are misaligned");
  }
  FeaturePatternTerms out{zero(), zero(), zero()};
  for (std::size_t t = 0; t < T; ++t) {
    require_same_shape(x_seq[t], x_hat_seq[t], "loss_feature_pattern");
    const double inv_b = 1.0 / static_cast<double>(x_seq[t].rows());
    out.recon = out.recon + ad::scale(ad::sum(ad::square(x_hat_seq[t] - x_seq[t])), 0.5 * inv_b);
    out.kl_static = out.kl_static + gaussian_kl_standard(posteriors_st[t]);
    out.kl_dynamic = out.kl_dynamic + gaussian_kl(posteriors_dy[t], priors_dy[t]);
  }
  return out;
}

MechanismTerms loss_mechanism(std::span<const Tensor> logits_seq,
                              std::span<const std::vector<int>> labels_seq,
                              std::span<const CategoricalPosterior> drift_posteriors,
                              std::span<const CategoricalPosterior> drift_priors) {
  const std::size_t T = logits_seq.size();
  if (labels_seq.size() != T || drift_posteriors.size() != T || drift_priors.size() != T) {
    throw ValidationError("loss_mechanism: sequences are misaligned");
  }
  MechanismTerms out{zero(), zero()};
  for (std::size_t t = 0; t < T; ++t) {
    for (int y : labels_seq[t]) {
      if (y < 0 || y >= logits_seq[t].cols()) {
        throw ValidationError("loss_mechanism: label " + std::to_string(y) + " out of range");
      }
    }
    out.nll_class = out.nll_class + ad::cross_entropy(logits_seq[t], labels_seq[t]);
    out.kl_drift = out.kl_drift + categorical_kl(drift_posteriors[t], drift_priors[t]);
  }
  return out;
}

const std::vector<std::string>& LossBreakdown::field_names() {
  static const std::vector<std::string> names{
      "recon",     "kl_static",          "kl_dynamic",          "kl_drift",
      "nll_class", "mi_penalty",         "static_contrastive",  "dynamic_contrastive",
      "total",     "alpha1",             "alpha2"};
  return names;
}

std::vector<double> LossBreakdown::values() const {
  return {recon,      kl_static,          kl_dynamic,          kl_drift, nll_class, mi_penalty,
          static_contrastive, dynamic_contrastive, total, alpha1, alpha2};
}

TotalLoss total_loss(const LossTerms& parts, double alpha1, double alpha2) {
  const std::pair<const char*, const Tensor*> named[] = {
      {"recon", &parts.recon},
      {"kl_static", &parts.kl_static},
      {"kl_dynamic", &parts.kl_dynamic},
      {"kl_drift", &parts.kl_drift},
      {"nll_class", &parts.nll_class},
      {"mi_penalty", &parts.mi_penalty},
      {"static_contrastive", &parts.static_contrastive},
      {"dynamic_contrastive", &parts.dynamic_contrastive}};
  for (const auto& [name, t] : named) {
    if (!std::isfinite(t->item())) throw NonFiniteLossError(name, t->item());
  }
  const Tensor evolve =
      (parts.recon + parts.kl_static + parts.kl_dynamic) + (parts.nll_class + parts.kl_drift);
  const Tensor total = evolve + ad::scale(parts.mi_penalty, alpha1) +
                       ad::scale(parts.static_contrastive + parts.dynamic_contrastive, alpha2);

  LossBreakdown b;
  b.recon = parts.recon.item();
  b.kl_static = parts.kl_static.item();
  b.kl_dynamic = parts.kl_dynamic.item();
  b.kl_drift = parts.kl_drift.item();
  b.nll_class = parts.nll_class.item();
  b.mi_penalty = parts.mi_penalty.item();
  b.static_contrastive = parts.static_contrastive.item();
  b.dynamic_contrastive = parts.dynamic_contrastive.item();
  b.alpha1 = alpha1;
  b.alpha2 = alpha2;
  b.total = total.item();
  if (!std::isfinite(b.total)) throw NonFiniteLossError("total", b.total);
  return {total, b};
}

SequenceForward forward_sequence(const model::SyncModel& model, std::span<const Matrix> x,
                                 std::span<const std::vector<int>> y, int first_t,
                                 std::span<const double> dataset_sizes,
                                 const ForwardOptions& options, std::mt19937_64& rng) {
  const std::size_t T = x.size();
  if (T == 0 || y.size() != T || dataset_sizes.size() != T) {
    throw ValidationError("forward_sequence: x, y and dataset_sizes must have one entry per domain");
  }
  const auto& dims = model.dims();
  const Eigen::Index B = x[0].rows();
  for (std::size_t t = 0; t < T; ++t) {
    if (x[t].rows() != B || static_cast<Eigen::Index>(y[t].size()) != B) {
      throw ValidationError("forward_sequence: batches are not index-aligned");
    }
  }

  auto start = [first_t](model::RecurrentState s) {
    s.domain_index = first_t - 1;
    return s;
  };
  model::RecurrentState dyn = start(model.initial_dynamic_state(B));
  model::RecurrentState drift = start(model.initial_drift_state(B));
  model::RecurrentState prior_dyn = start(model.initial_prior_dynamic_state(B));
  model::RecurrentState prior_drift = start(model.initial_prior_drift_state(B));
  Tensor z_dy_prev = Tensor::zeros(B, dims.latent_dim);
  Tensor z_d_prev = Tensor::zeros(B, dims.drift_states);

  std::vector<Tensor> xs, x_hat, logits, phi_st, phi_dy;
  std::vector<GaussianPosterior> post_st, post_dy, prior_dy;
  std::vector<CategoricalPosterior> post_d, prior_d;
  Tensor mi = zero();

  for (std::size_t k = 0; k < T; ++k) {
    const int t = first_t + static_cast<int>(k);
    const Tensor xt = Tensor::constant(x[k]);
    xs.push_back(xt);

    post_st.push_back(model.encode_static(xt));
    auto [q_dy, dyn_next] = model.encode_dynamic(xt, dyn, t);
    dyn = std::move(dyn_next);
    post_dy.push_back(q_dy);
    auto [p_dy, prior_dyn_next] = model.prior_dynamic(z_dy_prev, prior_dyn, t);
    prior_dyn = std::move(prior_dyn_next);
    prior_dy.push_back(p_dy);
    auto [q_d, drift_next] = model.encode_drift(model::one_hot(y[k], dims.num_classes), drift, t);
    drift = std::move(drift_next);
    post_d.push_back(q_d);
    auto [p_d, prior_drift_next] = model.prior_drift(z_d_prev, prior_drift, t);
    prior_drift = std::move(prior_drift_next);
    prior_d.push_back(p_d);

    const GaussianPosterior& qs = post_st.back();
    const Tensor z_st = stochastic::reparameterize_logvar(
        qs.mu, qs.logvar, stochastic::gaussian_noise(B, dims.latent_dim, options.noise, rng));
    const Tensor z_dy = stochastic::reparameterize_logvar(
        q_dy.mu, q_dy.logvar, stochastic::gaussian_noise(B, dims.latent_dim, options.noise, rng));
    const Tensor z_d = stochastic::gumbel_categorical(q_d.logits, dims.tau_gumbel, options.noise,
                                                      rng, false);

    x_hat.push_back(model.decode(z_st, z_dy));
    phi_st.push_back(
        model.mask_causal(qs.mu, model::Branch::kStatic, options.noise, rng, options.straight_through)
            .masked);
    phi_dy.push_back(model
                         .mask_causal(q_dy.mu, model::Branch::kDynamic, options.noise, rng,
                                      options.straight_through)
                         .masked);
    logits.push_back(model.classify(phi_st.back(), phi_dy.back(), z_d));
    mi = mi + loss_mutual_info(qs, q_dy, z_st, z_dy, dataset_sizes[k]);

    z_dy_prev = z_dy;
    z_d_prev = z_d;
  }

  const auto pattern = loss_feature_pattern(xs, x_hat, post_st, post_dy, prior_dy);
  const auto mechanism = loss_mechanism(logits, y, post_d, prior_d);
  LossTerms terms{pattern.recon,
                  pattern.kl_static,
                  pattern.kl_dynamic,
                  mechanism.kl_drift,
                  mechanism.nll_class,
                  mi,
                  loss_static_causal(phi_st, y, options.tau_contrastive),
                  loss_dynamic_causal(phi_dy, phi_st, y, options.tau_contrastive,
                                      options.detach_static_targets)};
  return {total_loss(terms, options.alpha1, options.alpha2), std::move(dyn)};
}

}  // namespace sync_edg::objectives
