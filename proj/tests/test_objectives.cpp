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

#include "gradcheck.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

namespace {

using namespace sync_edg::objectives;
namespace ad = sync_edg::ad;
namespace model = sync_edg::model;
using sync_edg::NonFiniteLossError;
using sync_edg::ValidationError;

oracle::Rows rows(const Matrix& m) {
  oracle::Rows out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r].push_back(m(r, c));
  }
  return out;
}

Matrix random(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

GaussianPosterior posterior(const Matrix& mu, const Matrix& logvar) {
  return {Tensor::constant(mu), Tensor::constant(logvar)};
}

TEST(Objectives, GaussianKlMatchesClosedForm) {
  std::mt19937_64 rng(0);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix mq = random(3, 5, rng), mp = random(3, 5, rng);
    const Matrix vq = random(3, 5, rng, 0.1, 3), vp = random(3, 5, rng, 0.1, 3);
    const double expect = oracle::gaussian_kl(rows(mq), rows(vq), rows(mp), rows(vp));
    EXPECT_NEAR(gaussian_kl(mq, vq, mp, vp), expect, 1e-10);
    const auto q = posterior(mq, vq.array().log().matrix());
    const auto p = posterior(mp, vp.array().log().matrix());
    EXPECT_NEAR(gaussian_kl(q, p).item(), expect, 1e-10);
  }
}

TEST(Objectives, GaussianKlSpecialCases) {
  std::mt19937_64 rng(1);
  const Matrix mu = random(2, 3, rng), v = random(2, 3, rng, 0.5, 2);
  EXPECT_NEAR(gaussian_kl(mu, v, mu, v), 0.0, 1e-15);
  // KL(N(m, 1) || N(0, 1)) = m^2 / 2 per dimension.
  const auto q = posterior(Matrix::Constant(1, 2, 3.0), Matrix::Zero(1, 2));
  EXPECT_NEAR(gaussian_kl_standard(q).item(), 9.0, 1e-12);
  EXPECT_THROW(gaussian_kl(mu, Matrix::Zero(2, 3), mu, v), ValidationError);
  EXPECT_THROW(gaussian_kl(mu, v, Matrix::Zero(1, 3), v), ValidationError);
}

TEST(Objectives, CategoricalKl) {
  Matrix q(2, 3), p(2, 3);
  q << 0.2, 0.3, 0.5, 1.0, 0.0, 0.0;
  p << 0.4, 0.4, 0.2, 0.5, 0.25, 0.25;
  const double row0 = 0.2 * std::log(0.5) + 0.3 * std::log(0.75) + 0.5 * std::log(2.5);
  const double row1 = std::log(2.0);
  EXPECT_NEAR(categorical_kl(q, p), (row0 + row1) / 2, 1e-14);
  EXPECT_NEAR(categorical_kl(p, p), 0.0, 1e-15);

  Matrix zero_p(1, 2), q1(1, 2);
  zero_p << 1.0, 0.0;
  q1 << 0.5, 0.5;
  EXPECT_NEAR(categorical_kl(q1, zero_p), 0.5 * std::log(0.5) + 0.5 * std::log(0.5 / 1e-8), 1e-9);

  // Logit form agrees with the probability form.
  std::mt19937_64 rng(2);
  const Matrix lq = random(4, 3, rng, -2, 2), lp = random(4, 3, rng, -2, 2);
  const model::CategoricalPosterior cq{Tensor::constant(lq)}, cp{Tensor::constant(lp)};
  EXPECT_NEAR(categorical_kl(cq, cp).item(), categorical_kl(cq.probs(), cp.probs()), 1e-12);
}

TEST(Objectives, MwsEntropyMatchesDoubleLoop) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int b = 1 + static_cast<int>(rng() % 16);
    const int n = 1 + static_cast<int>(rng() % 6);
    const Matrix z = random(b, n, rng, -2, 2), mu = random(b, n, rng, -2, 2);
    const Matrix lv = random(b, n, rng, -1, 1);
    const double size = b + static_cast<double>(rng() % 100);
    const double expect = oracle::mws_entropy(rows(z), rows(mu), rows(lv), size);
    EXPECT_NEAR(mws_entropy(Tensor::constant(z), posterior(mu, lv), size).item(), expect, 1e-6);
  }
}

TEST(Objectives, MwsEntropyRejectsBadInput) {
  const auto q = posterior(Matrix::Zero(3, 2), Matrix::Zero(3, 2));
  EXPECT_THROW(mws_entropy(Tensor::zeros(3, 2), q, 2.0), ValidationError);
  EXPECT_THROW(mws_entropy(Tensor::zeros(2, 2), q, 10.0), ValidationError);
}

TEST(Objectives, MutualInfoIsEntropyCombination) {
  std::mt19937_64 rng(4);
  const int b = 6;
  const Matrix zs = random(b, 3, rng), ms = random(b, 3, rng), ls = random(b, 3, rng, -1, 0);
  const Matrix zd = random(b, 2, rng), md = random(b, 2, rng), ld = random(b, 2, rng, -1, 0);
  auto cat = [](const Matrix& a, const Matrix& c) {
    Matrix out(a.rows(), a.cols() + c.cols());
    out << a, c;
    return out;
  };
  const double expect = oracle::mws_entropy(rows(zs), rows(ms), rows(ls), 50) +
                        oracle::mws_entropy(rows(zd), rows(md), rows(ld), 50) -
                        oracle::mws_entropy(rows(cat(zs, zd)), rows(cat(ms, md)),
                                            rows(cat(ls, ld)), 50);
  const double got = loss_mutual_info(posterior(ms, ls), posterior(md, ld), Tensor::constant(zs),
                                      Tensor::constant(zd), 50)
                         .item();
  EXPECT_NEAR(got, expect, 1e-9);
}

TEST(Objectives, ContrastiveMatchesOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix a = random(5, 4, rng), t = random(7, 4, rng);
    std::vector<int> al(5), tl(7);
    for (auto& l : al) l = static_cast<int>(rng() % 3);
    for (auto& l : tl) l = static_cast<int>(rng() % 3);
    const auto r = contrastive_cmi(Tensor::constant(a), al, Tensor::constant(t), tl, 0.1);
    EXPECT_NEAR(r.value.item(), oracle::contrastive(rows(a), al, rows(t), tl, 0.1), 1e-10);
    EXPECT_EQ(r.anchors_used + r.anchors_skipped, 5);
  }
}

TEST(Objectives, ContrastiveUniformSimilarity) {
  for (int m = 1; m <= 8; ++m) {
    const Matrix anchors = Matrix::Ones(1, 3);
    const Matrix targets = Matrix::Ones(m + 1, 3);
    std::vector<int> tl(static_cast<std::size_t>(m + 1), 1);
    tl[0] = 0;
    const auto r = contrastive_cmi(Tensor::constant(anchors), std::vector<int>{0},
                                   Tensor::constant(targets), tl, 0.1);
    EXPECT_NEAR(r.value.item(), -std::log(m + 1.0), 1e-9) << m;
  }
}

TEST(Objectives, ContrastiveSkipsAnchorsWithoutPairs) {
  const Matrix a = Matrix::Random(2, 3), t = Matrix::Random(2, 3);
  // Anchor 2 has no positive.
  const auto r = contrastive_cmi(Tensor::constant(a), std::vector<int>{0, 2},
                                 Tensor::constant(t), std::vector<int>{0, 1}, 0.1);
  EXPECT_EQ(r.anchors_used, 1);
  EXPECT_EQ(r.anchors_skipped, 1);
  // Positives but no negatives.
  const auto none = contrastive_cmi(Tensor::constant(a), std::vector<int>{1, 1},
                                    Tensor::constant(t), std::vector<int>{1, 1}, 0.1);
  EXPECT_EQ(none.anchors_skipped, 2);
  EXPECT_EQ(none.value.item(), 0.0);
  EXPECT_THROW(contrastive_cmi(Tensor::zeros(1, 3), std::vector<int>{0}, Tensor::constant(t),
                               std::vector<int>{0, 1}, 0.1),
               ValidationError);
}

TEST(Objectives, ContrastiveGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  const Matrix a0 = random(4, 3, rng), t0 = random(5, 3, rng);
  const std::vector<int> al{0, 1, 0, 1}, tl{1, 0, 0, 1, 1};
  Tensor a(a0, true), t(t0, true);
  contrastive_cmi(a, al, t, tl, 0.2).value.backward();
  auto f = [&](const Matrix& am, const Matrix& tm) {
    return oracle::contrastive(rows(am), al, rows(tm), tl, 0.2);
  };
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < a0.size(); ++i) {
    Matrix up = a0, dn = a0;
    up.data()[i] += h;
    dn.data()[i] -= h;
    EXPECT_NEAR(a.grad().data()[i], (f(up, t0) - f(dn, t0)) / (2 * h), 1e-6);
  }
  for (Eigen::Index i = 0; i < t0.size(); ++i) {
    Matrix up = t0, dn = t0;
    up.data()[i] += h;
    dn.data()[i] -= h;
    EXPECT_NEAR(t.grad().data()[i], (f(a0, up) - f(a0, dn)) / (2 * h), 1e-6);
  }
}

TEST(Objectives, StaticCausalUniformRepresentations) {
  // M + 1 classes, one sample each, identical representations everywhere:
  // every anchor has one positive and M negatives.
  for (int m = 1; m <= 4; ++m) {
    for (int T = 2; T <= 4; ++T) {
      std::vector<Tensor> phi(T, Tensor::constant(Matrix::Ones(m + 1, 2)));
      std::vector<int> l(static_cast<std::size_t>(m + 1));
      for (int i = 0; i <= m; ++i) l[i] = i;
      std::vector<std::vector<int>> labels(T, l);
      EXPECT_NEAR(loss_static_causal(phi, labels).item(), (T - 1) * std::log(m + 1.0), 1e-9);
    }
  }
}

TEST(Objectives, StaticCausalMinimalForClassAlignedRepresentations) {
  // Class 0 along +e1, class 1 along -e1 in every domain: positives have
  // cosine 1 and negatives -1, the extremes of the similarity range.
  Matrix aligned(4, 2);
  aligned << 1, 0, -1, 0, 1, 0, -1, 0;
  const std::vector<std::vector<int>> labels{{0, 1, 0, 1}, {0, 1, 0, 1}, {0, 1, 0, 1}};
  const std::vector<Tensor> best(3, Tensor::constant(aligned));
  const double best_loss = loss_static_causal(best, labels).item();
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tensor> other;
    for (int t = 0; t < 3; ++t) other.push_back(Tensor::constant(random(4, 2, rng)));
    EXPECT_LE(best_loss, loss_static_causal(other, labels).item() + 1e-12);
  }
  // Each positive scores log(e^10 / (e^10 + 2 e^-10)); two domain pairs.
  EXPECT_NEAR(best_loss, -2 * (10 - std::log(std::exp(10.0) + 2 * std::exp(-10.0))), 1e-9);
}

TEST(Objectives, DynamicCausalDetachesStaticTargets) {
  std::mt19937_64 rng(8);
  Tensor dy(random(4, 3, rng), true), st(random(4, 3, rng), true);
  const std::vector<std::vector<int>> labels{{0, 1, 0, 1}};
  const std::vector<Tensor> dys{dy}, sts{st};
  const Tensor detached = loss_dynamic_causal(dys, sts, labels, 0.1, true);
  EXPECT_NEAR(detached.item(),
              -oracle::contrastive(rows(dy.value()), labels[0], rows(st.value()), labels[0], 0.1),
              1e-10);
  detached.backward();
  EXPECT_EQ(st.grad().norm(), 0.0);
  EXPECT_GT(dy.grad().norm(), 0.0);
  dy.zero_grad();
  loss_dynamic_causal(dys, sts, labels, 0.1, false).backward();
  EXPECT_GT(st.grad().norm(), 0.0);
}

TEST(Objectives, FeaturePatternAndMechanismTerms) {
  std::mt19937_64 rng(9);
  const Matrix x = random(3, 2, rng), xh = random(3, 2, rng);
  const Matrix mu = random(3, 4, rng), lv = random(3, 4, rng), pm = random(3, 4, rng),
               pl = random(3, 4, rng);
  const std::vector<Tensor> xs{Tensor::constant(x)}, xhs{Tensor::constant(xh)};
  const std::vector<GaussianPosterior> st{posterior(mu, lv)}, dy{posterior(pm, lv)},
      pr{posterior(mu, pl)};
  const auto f = loss_feature_pattern(xs, xhs, st, dy, pr);
  EXPECT_NEAR(f.recon.item(), 0.5 * (xh - x).squaredNorm() / 3, 1e-12);
  const oracle::Rows ones(3, std::vector<double>(4, 1.0)), zeros(3, std::vector<double>(4, 0.0));
  const Matrix v = lv.array().exp().matrix();
  EXPECT_NEAR(f.kl_static.item(), oracle::gaussian_kl(rows(mu), rows(v), zeros, ones), 1e-12);
  EXPECT_NEAR(f.kl_dynamic.item(),
              oracle::gaussian_kl(rows(pm), rows(v), rows(mu), rows(pl.array().exp().matrix())),
              1e-12);

  const Matrix logits = random(3, 2, rng);
  const std::vector<std::vector<int>> y{{0, 1, 1}};
  const std::vector<Tensor> ls{Tensor::constant(logits)};
  const std::vector<model::CategoricalPosterior> q{{Tensor::constant(random(3, 2, rng))}},
      p{{Tensor::constant(random(3, 2, rng))}};
  const auto mech = loss_mechanism(ls, y, q, p);
  double nll = 0;
  for (int i = 0; i < 3; ++i) {
    const auto sm = oracle::softmax({logits(i, 0), logits(i, 1)});
    nll -= std::log(sm[static_cast<std::size_t>(y[0][i])]);
  }
  EXPECT_NEAR(mech.nll_class.item(), nll / 3, 1e-12);
  EXPECT_NEAR(mech.kl_drift.item(), categorical_kl(q[0].probs(), p[0].probs()), 1e-12);
  const std::vector<std::vector<int>> bad{{0, 2, 1}};
  EXPECT_THROW(loss_mechanism(ls, bad, q, p), ValidationError);
}

TEST(Objectives, TotalLossWeightsAndNonFinite) {
  auto s = [](double v) { return Tensor::scalar(v); };
  LossTerms parts{s(1), s(2), s(3), s(4), s(5), s(6), s(7), s(8)};
  const auto t = total_loss(parts, 0.5, 0.25);
  EXPECT_DOUBLE_EQ(t.breakdown.total, 1 + 2 + 3 + 4 + 5 + 0.5 * 6 + 0.25 * (7 + 8));
  EXPECT_DOUBLE_EQ(t.total.item(), t.breakdown.total);
  EXPECT_EQ(LossBreakdown::field_names().size(), t.breakdown.values().size());

  parts.mi_penalty = s(std::numeric_limits<double>::quiet_NaN());
  try {
    total_loss(parts, 1, 1);
    FAIL();
  } catch (const NonFiniteLossError& e) {
    EXPECT_EQ(e.term(), "mi_penalty");
  }
}

TEST(Objectives, ForwardSequenceIsDeterministicWithoutNoise) {
  model::ModelDims dims;
  dims.latent_dim = 5;
  dims.hidden_width = 8;
  const model::SyncModel m(dims, 0);
  std::mt19937_64 rng(1);
  const std::vector<Matrix> x{random(6, 2, rng), random(6, 2, rng), random(6, 2, rng)};
  const std::vector<std::vector<int>> y{{0, 1, 0, 1, 0, 1}, {1, 1, 0, 0, 1, 0}, {0, 0, 1, 1, 0, 1}};
  const std::vector<double> sizes{100, 100, 100};
  ForwardOptions opt;
  opt.noise = sync_edg::stochastic::NoiseMode::kDeterministic;
  std::mt19937_64 r1(5), r2(6);
  const auto a = forward_sequence(m, x, y, 4, sizes, opt, r1);
  const auto b = forward_sequence(m, x, y, 4, sizes, opt, r2);
  EXPECT_EQ(a.loss.breakdown.values(), b.loss.breakdown.values());
  EXPECT_EQ(a.final_dynamic_state.domain_index, 6);
  EXPECT_TRUE(std::isfinite(a.loss.breakdown.total));

  opt.noise = sync_edg::stochastic::NoiseMode::kStochastic;
  std::mt19937_64 r3(5), r4(5), r5(6);
  const auto c = forward_sequence(m, x, y, 1, sizes, opt, r3);
  EXPECT_EQ(c.loss.breakdown.values(), forward_sequence(m, x, y, 1, sizes, opt, r4).loss.breakdown.values());
  EXPECT_NE(c.loss.breakdown.total, forward_sequence(m, x, y, 1, sizes, opt, r5).loss.breakdown.total);

  const std::vector<double> short_sizes{100, 100};
  EXPECT_THROW(forward_sequence(m, x, y, 1, short_sizes, opt, r3), ValidationError);
}

TEST(Objectives, TotalLossGradientMatchesFiniteDifferences) {
  for (const auto& g : gradcheck::run(11)) {
    EXPECT_LT(g.relative_error, 1e-4) << g.name << " |grad| " << g.analytic_norm;
  }
}

}  // namespace
