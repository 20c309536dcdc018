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


#include "sync_edg/domain_stream.hpp"
#include "sync_edg/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

namespace {

using namespace sync_edg::data;
using sync_edg::ParseError;
using sync_edg::ValidationError;
namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("sync_edg_test_" + name);
}

// Rotating the point by -theta puts the boundary on the x axis; label 1 is
// the upper half-plane.
int rotated_circle_label(double x, double y, double theta) {
  const double yr = -std::sin(theta) * x + std::cos(theta) * y;
  return yr >= 0.0 ? 1 : 0;
}

TEST(DomainStream, CircleShapeAndLabels) {
  const auto seq = generate_circle(30, 100, 0);
  ASSERT_EQ(seq.size(), 30u);
  EXPECT_EQ(seq.feature_dim, 2);
  for (const auto& d : seq.domains) {
    ASSERT_EQ(d.size(), 100u);
    const double theta = std::numbers::pi * (d.t - 1) / 29.0;
    int ones = 0;
    for (const auto& s : d.samples) {
      EXPECT_EQ(s.domain_index, d.t);
      EXPECT_EQ(s.label, rotated_circle_label(s.features[0], s.features[1], theta));
      ones += s.label;
    }
    EXPECT_GE(ones, 20);
    EXPECT_LE(ones, 80);
  }
  // First domain centered at (1, 0), last at (-1, 0).
  double mx = 0;
  for (const auto& s : seq.domains.front().samples) mx += s.features[0];
  EXPECT_NEAR(mx / 100, 1.0, 0.1);
  mx = 0;
  for (const auto& s : seq.domains.back().samples) mx += s.features[0];
  EXPECT_NEAR(mx / 100, -1.0, 0.1);
}

TEST(DomainStream, SineLabelsFollowShiftedCurve) {
  const auto seq = generate_sine(24, 100, 3);
  ASSERT_EQ(seq.size(), 24u);
  for (const auto& d : seq.domains) {
    for (const auto& s : d.samples) {
      const double x = s.features[0], y = s.features[1];
      EXPECT_GE(x, -1.0);
      EXPECT_LE(x, 1.0);
      const double curve = std::sin(std::numbers::pi * (x + 1.0) + 2 * std::numbers::pi * (d.t - 1) / 24.0);
      EXPECT_EQ(s.label, y >= curve ? 1 : 0);
    }
  }
}

TEST(DomainStream, GenerationIsSeedDeterministic) {
  EXPECT_EQ(generate_circle(6, 40, 7), generate_circle(6, 40, 7));
  EXPECT_NE(generate_circle(6, 40, 7), generate_circle(6, 40, 8));
}

TEST(DomainStream, RejectsDegenerateArguments) {
  EXPECT_THROW(generate_circle(1, 100, 0), ValidationError);
  EXPECT_THROW(generate_sine(5, 1, 0), ValidationError);
}

TEST(DomainStream, SplitCountsAndTimestamps) {
  const auto split = split_domains(generate_circle(30, 10, 0));
  EXPECT_EQ(split.source.size(), 15u);
  EXPECT_EQ(split.intermediate.size(), 5u);
  EXPECT_EQ(split.target.size(), 10u);
  EXPECT_EQ(split.intermediate.first_index(), 16);
  EXPECT_EQ(split.target.first_index(), 21);
  EXPECT_EQ(split.target.last_index(), 30);

  const auto sine = split_domains(generate_sine(24, 10, 0));
  EXPECT_EQ(sine.source.size(), 12u);
  EXPECT_EQ(sine.intermediate.size(), 4u);
  EXPECT_EQ(sine.target.size(), 8u);
}

TEST(DomainStream, SplitValidatesFractions) {
  const auto seq = generate_circle(6, 10, 0);
  EXPECT_THROW(split_domains(seq, {{1, 2}, {1, 2}, {1, 2}}), ValidationError);
  EXPECT_THROW(split_domains(generate_circle(2, 10, 0)), ValidationError);
}

TEST(DomainStream, DriftAngles) {
  const int n = 11;
  const auto gradual = drift_boundary_angles(n, DriftKind::kGradual, 0);
  EXPECT_DOUBLE_EQ(gradual.front(), 0.0);
  EXPECT_NEAR(gradual.back(), std::numbers::pi, 1e-12);
  for (int t = 2; t <= n; ++t) EXPECT_GT(gradual[t - 1], gradual[t - 2]);
  // Steps grow: the rotation accelerates.
  EXPECT_GT(gradual[n - 1] - gradual[n - 2], gradual[1] - gradual[0]);

  const auto abrupt = drift_boundary_angles(n, DriftKind::kAbrupt, 0);
  for (int t = 1; t <= n; ++t) {
    const double base = std::numbers::pi * (t - 1) / (n - 1);
    EXPECT_NEAR(abrupt[t - 1], t <= n / 2 ? base : base + std::numbers::pi / 2, 1e-12) << t;
  }

  const auto noisy = drift_boundary_angles(n, DriftKind::kNoise, 5);
  EXPECT_EQ(noisy, drift_boundary_angles(n, DriftKind::kNoise, 5));
  EXPECT_NE(noisy, drift_boundary_angles(n, DriftKind::kNoise, 6));
}

TEST(DomainStream, DriftVariantRelabelsOnly) {
  const auto base = generate_circle(10, 50, 1);
  const auto v = apply_drift_variant(base, DriftKind::kAbrupt, 0);
  EXPECT_EQ(v.name, "circle-abrupt");
  int flipped = 0;
  for (std::size_t t = 0; t < base.size(); ++t) {
    for (std::size_t i = 0; i < base.domains[t].size(); ++i) {
      EXPECT_EQ(v.domains[t].samples[i].features, base.domains[t].samples[i].features);
      flipped += v.domains[t].samples[i].label != base.domains[t].samples[i].label;
    }
  }
  // The first half keeps its boundary, the second half is rotated.
  EXPECT_GT(flipped, 0);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(v.domains[t], base.domains[t]);
  EXPECT_THROW(apply_drift_variant(generate_sine(4, 10, 0), DriftKind::kNoise, 0), ValidationError);
}

TEST(DomainStream, BatchesAreAlignedAndCoverEachEpoch) {
  const auto seq = generate_circle(3, 10, 0);
  SequenceBatches batches(seq, 4, 9);
  EXPECT_EQ(batches.batches_per_epoch(), 3);
  AlignedBatch b;
  std::vector<std::multiset<std::size_t>> seen(3);
  int n = 0;
  while (batches.next(b)) {
    ++n;
    ASSERT_EQ(b.x.size(), 3u);
    for (std::size_t t = 0; t < 3; ++t) {
      ASSERT_EQ(b.x[t].rows(), 4);
      for (std::size_t r = 0; r < 4; ++r) {
        const auto& s = seq.domains[t].samples[b.indices[t][r]];
        EXPECT_EQ(b.y[t][r], s.label);
        EXPECT_EQ(b.x[t](static_cast<Eigen::Index>(r), 0), s.features[0]);
        seen[t].insert(b.indices[t][r]);
      }
    }
  }
  EXPECT_EQ(n, 3);
  // 12 draws from 10 samples: every sample once, two wrap-around repeats.
  for (const auto& s : seen) {
    EXPECT_EQ(s.size(), 12u);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_GE(s.count(i), 1u);
  }
}

TEST(DomainStream, BatchesReproducePerEpoch) {
  const auto seq = generate_circle(2, 20, 0);
  SequenceBatches a(seq, 5, 1), b(seq, 5, 1);
  AlignedBatch x, y;
  a.start_epoch(3);
  b.start_epoch(3);
  while (a.next(x)) {
    ASSERT_TRUE(b.next(y));
    EXPECT_EQ(x.indices, y.indices);
  }
  a.start_epoch(4);
  a.next(x);
  b.start_epoch(3);
  b.next(y);
  EXPECT_NE(x.indices, y.indices);
}

TEST(DomainStream, BatchSizeLargerThanDomainNeedsReplacement) {
  const auto seq = generate_circle(2, 10, 0);
  EXPECT_THROW(SequenceBatches(seq, 16, 0), ValidationError);
  SequenceBatches r(seq, 16, 0, true);
  AlignedBatch b;
  ASSERT_TRUE(r.next(b));
  EXPECT_EQ(b.x[0].rows(), 16);
}

TEST(DomainStream, SaveLoadRoundTripIsExact) {
  const auto seq = generate_sine(5, 17, 11);
  const auto path = temp_file("roundtrip.txt");
  save_sequence(seq, path);
  EXPECT_EQ(load_sequence(path), seq);
  const auto split = split_domains(seq);
  save_sequence(split.target, path);
  const auto tgt = load_sequence(path);
  EXPECT_EQ(tgt, split.target);
  EXPECT_EQ(tgt.first_index(), split.target.first_index());
}

TEST(DomainStream, LoadReportsOffendingRecord) {
  const auto path = temp_file("bad.txt");
  auto write = [&](const std::string& body) {
    std::ofstream os(path);
    os << "sync-edg-sequence 1\nname circle\nfeature_dim 2\nnum_classes 2\nnum_domains 2\n"
          "first_domain 1\ncolumns t label x0 x1\n"
       << body;
  };
  write("1 0 0.5 0.5\n2 1 0.1\n");
  try {
    load_sequence(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos) << e.what();
  }
  write("1 0 0.5 0.5\n3 1 0.1 0.2\n");
  EXPECT_THROW(load_sequence(path), ParseError);
  write("1 0 0.5 0.5\n2 7 0.1 0.2\n");
  EXPECT_THROW(load_sequence(path), ParseError);
  write("1 0 0.5 abc\n2 1 0.1 0.2\n");
  EXPECT_THROW(load_sequence(path), ParseError);
  EXPECT_THROW(load_sequence(temp_file("missing.txt")), ParseError);
}

}  // namespace
