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


#include "sync_edg/evaluation.hpp"
#include "sync_edg/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

namespace {

using namespace sync_edg;
namespace fs = std::filesystem;

predict::PredictionRecord record(int t, double acc) {
  predict::PredictionRecord r;
  r.t = t;
  r.accuracy = acc;
  return r;
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("sync_edg_eval_" + name);
}

TEST(Evaluation, WorstAndAverage) {
  const auto m = eval::compute_metrics({record(21, 0.9), record(22, 0.5), record(23, 0.7)},
                                       "circle", "sync", 3);
  EXPECT_DOUBLE_EQ(m.wst, 0.5);
  EXPECT_NEAR(m.avg, 0.7, 1e-15);
  EXPECT_EQ(m.domains, (std::vector<int>{21, 22, 23}));
  const auto j = m.to_json();
  EXPECT_EQ(j["dataset"], "circle");
  EXPECT_EQ(j["seed"], 3);
  EXPECT_THROW(eval::compute_metrics({}), ValidationError);
}

TEST(Evaluation, MetricsArePermutationInvariant) {
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<predict::PredictionRecord> recs;
  for (int t = 1; t <= 17; ++t) recs.push_back(record(t, u(rng)));
  const auto base = eval::compute_metrics(recs);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(recs.begin(), recs.end(), rng);
    const auto m = eval::compute_metrics(recs);
    EXPECT_EQ(m.wst, base.wst);
    EXPECT_EQ(m.avg, base.avg);
  }
}

TEST(Evaluation, CurveFlagsAndLength) {
  std::vector<train::EpochRecord> epochs;
  const double mi[] = {3.0, 2.5, 2.7, 2.7, 1.0};
  for (int e = 0; e < 5; ++e) {
    train::EpochRecord r;
    r.epoch = e + 1;
    r.mutual_info = mi[e];
    epochs.push_back(r);
  }
  const auto c = eval::disentanglement_curve(epochs);
  ASSERT_EQ(c.size(), 5u);
  const bool flags[] = {true, true, false, true, true};
  for (int e = 0; e < 5; ++e) {
    EXPECT_EQ(c[e].non_increasing, flags[e]) << e;
    EXPECT_EQ(c[e].mutual_info, mi[e]);
  }
  epochs[2].mutual_info = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(eval::disentanglement_curve(epochs), ValidationError);
}

TEST(Evaluation, ConstantMiGivesFlatCurve) {
  std::vector<train::EpochRecord> epochs(4);
  for (int e = 0; e < 4; ++e) {
    epochs[e].epoch = e + 1;
    epochs[e].mutual_info = 1.25;
  }
  for (const auto& p : eval::disentanglement_curve(epochs)) {
    EXPECT_EQ(p.mutual_info, 1.25);
    EXPECT_TRUE(p.non_increasing);
  }
}

TEST(Evaluation, CurveFromEpochLog) {
  std::vector<train::EpochRecord> epochs(3);
  for (int e = 0; e < 3; ++e) {
    epochs[e].epoch = e + 1;
    epochs[e].mutual_info = 1.0 / (e + 1);
  }
  train::write_epoch_log(temp_path("log.csv"), epochs);
  const auto c = eval::disentanglement_curve(temp_path("log.csv"));
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[2].mutual_info, 1.0 / 3);
  EXPECT_EQ(c[2].epoch, 3);

  std::ofstream(temp_path("nomi.csv")) << "epoch,total\n1,2.0\n";
  EXPECT_THROW(eval::disentanglement_curve(temp_path("nomi.csv")), ParseError);
  std::ofstream(temp_path("blank.csv")) << "epoch,mutual_info\n1,\n";
  EXPECT_THROW(eval::disentanglement_curve(temp_path("blank.csv")), ParseError);
}

TEST(Evaluation, GridLatticeIncludesEdges) {
  int calls = 0;
  const auto g = eval::decision_boundary_grid(
      [&](const ad::Matrix& pts) {
        calls += static_cast<int>(pts.rows());
        return std::vector<int>(static_cast<std::size_t>(pts.rows()), 0);
      },
      eval::Bounds{}, 100);
  EXPECT_EQ(calls, 10000);
  EXPECT_EQ(g.labels.rows(), 100);
  EXPECT_EQ(g.labels.cols(), 100);
  EXPECT_DOUBLE_EQ(g.x(0), -2.0);
  EXPECT_DOUBLE_EQ(g.x(99), 2.0);
  EXPECT_DOUBLE_EQ(g.y(0), -2.0);
  EXPECT_DOUBLE_EQ(g.y(99), 2.0);
  EXPECT_THROW(eval::decision_boundary_grid([](const ad::Matrix&) { return std::vector<int>{}; },
                                            eval::Bounds{}, 4),
               ValidationError);
}

TEST(Evaluation, GeneratorGridReproducesRotatingHalfPlane) {
  // The Circle generator as a classifier: at domain t the boundary is the
  // radial line at angle pi (t - 1) / (n - 1).
  const int n = 30;
  for (int t : {1, 10, 20, 30}) {
    const double theta = data::circle_angle(t, n);
    const auto g = eval::decision_boundary_grid(
        [&](const ad::Matrix& pts) {
          std::vector<int> out;
          for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            out.push_back(data::circle_label(pts(i, 0), pts(i, 1), std::cos(theta),
                                             std::sin(theta), theta));
          }
          return out;
        },
        eval::Bounds{}, 41);
    for (int r = 0; r < 41; ++r) {
      for (int c = 0; c < 41; ++c) {
        const double x = g.x(c), y = g.y(r);
        const double alpha = std::atan2(y, x);
        // Counter-clockwise of the boundary ray (within half a turn) is class 1.
        double diff = std::remainder(alpha - theta, 2 * std::numbers::pi);
        const double dist = std::abs(-std::sin(theta) * x + std::cos(theta) * y);
        if (dist < 1e-9) continue;
        EXPECT_EQ(g.labels(r, c), diff > 0 ? 1 : 0) << t << " " << x << "," << y;
      }
    }
  }
}

TEST(Evaluation, GridFileRoundTrip) {
  eval::Grid g;
  g.bounds = {-1.5, 2.5, -3.0, 1.0};
  g.resolution = 5;
  g.labels = Eigen::MatrixXi::Random(5, 5).unaryExpr([](int v) { return std::abs(v) % 3; });
  eval::write_grid(temp_path("grid.txt"), g);
  const auto back = eval::read_grid(temp_path("grid.txt"));
  EXPECT_EQ(back.resolution, 5);
  EXPECT_EQ(back.labels, g.labels);
  EXPECT_DOUBLE_EQ(back.bounds.x_min, -1.5);
  EXPECT_DOUBLE_EQ(back.bounds.y_min, -3.0);
  std::ofstream(temp_path("badgrid.txt")) << "# 0 1 0 1 3\n0 1 0\n1 1\n";
  EXPECT_THROW(eval::read_grid(temp_path("badgrid.txt")), ParseError);
}

TEST(Evaluation, ModelGridUsesDomainInferencePath) {
  model::ModelDims d;
  d.latent_dim = 4;
  d.hidden_width = 8;
  const model::SyncModel m(d, 0);
  HiddenStateBank bank;
  bank.add(BankEntry{ad::Matrix::Random(2, 8), ad::Matrix::Random(2, 8), 15});
  const auto g = eval::decision_boundary_grid(m, bank, eval::Bounds{}, 12, 25, 3);
  EXPECT_EQ(g.labels.rows(), 12);
  EXPECT_EQ(g.labels, eval::decision_boundary_grid(m, bank, eval::Bounds{}, 12, 25, 3).labels);

  // Same lattice through predict_logits with the bank relabelled to t - 1.
  HiddenStateBank shifted;
  shifted.add(BankEntry{bank.entries()[0].h, bank.entries()[0].c, 24});
  ad::Matrix pts(12 * 12, 2);
  for (int r = 0; r < 12; ++r) {
    for (int c = 0; c < 12; ++c) pts.row(r * 12 + c) << g.x(c), g.y(r);
  }
  const ad::Matrix logits = predict::predict_logits(m, shifted, pts, 25, 3);
  for (int r = 0; r < 12; ++r) {
    for (int c = 0; c < 12; ++c) {
      Eigen::Index p = 0;
      logits.row(r * 12 + c).maxCoeff(&p);
      EXPECT_EQ(g.labels(r, c), p);
    }
  }

  d.feature_dim = 3;
  const model::SyncModel m3(d, 0);
  EXPECT_THROW(eval::decision_boundary_grid(m3, bank, eval::Bounds{}, 12, 25, 3), ValidationError);
}

}  // namespace
