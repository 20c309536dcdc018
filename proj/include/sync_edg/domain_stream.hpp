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

// Evolving domain sequences: synthetic generators (Circle, Sine and the
// Circle drift variants), contiguous splits, index-aligned mini-batching and
// a plain-text on-disk format.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace sync_edg::data {

struct Sample {
  std::vector<double> features;
  int label = 0;
  int domain_index = 1;

  bool operator==(const Sample&) const = default;
};

struct Domain {
  int t = 1;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  // n x d matrix of features, one row per sample.
  Eigen::MatrixXd features() const;
  std::vector<int> labels() const;

  bool operator==(const Domain&) const = default;
};

// Ordered domains with consecutive timestamps. A freshly generated or loaded
// sequence starts at t = 1; the blocks produced by split_domains keep their
// absolute timestamps.
struct DomainSequence {
  std::string name;
  int feature_dim = 0;
  int num_classes = 0;
  std::vector<Domain> domains;

  std::size_t size() const { return domains.size(); }
  bool empty() const { return domains.empty(); }
  int first_index() const { return domains.front().t; }
  int last_index() const { return domains.back().t; }
  std::size_t min_domain_size() const;

  // Throws ValidationError when an invariant is broken.
  void validate(bool require_start_at_one = false) const;

  // Sub-sequence of domains [begin, begin + count).
  DomainSequence slice(std::size_t begin, std::size_t count) const;

  bool operator==(const DomainSequence&) const = default;
};

// Exact non-negative fraction.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  // round-half-up of (num / den) * n
  std::int64_t round_times(std::int64_t n) const;
};

struct SplitSpec {
  Rational source{1, 2};
  Rational intermediate{1, 6};
  Rational target{1, 3};
};

struct SplitResult {
  DomainSequence source;
  DomainSequence intermediate;
  DomainSequence target;
};

struct CircleParams {
  double radius = 1.0;
  double noise_std = 0.15;
};

// Sine boundary x2 = amplitude * sin(2*pi*(x1 - x_min)/(x_max - x_min) + phase_t)
// with phase_t = 2*pi*(t-1)/n_domains; features uniform over the box.
struct SineParams {
  double x_min = -1.0;
  double x_max = 1.0;
  double y_min = -1.5;
  double y_max = 1.5;
  double amplitude = 1.0;
};

enum class DriftKind { kGradual, kAbrupt, kNoise };

DriftKind parse_drift_kind(const std::string& name);
std::string to_string(DriftKind kind);

struct DriftParams {
  // Standard deviation (radians) of the per-domain boundary perturbation.
  double noise_std = 0.35;
};

// Minimum share of each class per generated domain; generators redraw a
// domain until it holds.
inline constexpr double kMinClassShare = 0.2;

// Angle of the arc point that centers domain t of an n-domain Circle.
double circle_angle(int t, int n_domains);

// Circle labelling rule: the boundary is the line through the arc point
// `center` with direction angle `boundary_angle`. Points on its
// counter-clockwise side (and on the line itself) get label 1. With
// boundary_angle equal to the arc angle this is the radial line through the
// origin.
int circle_label(double x, double y, double center_x, double center_y, double boundary_angle);

// Sine labelling rule for domain t: 1 iff the point lies on or above the curve.
int sine_label(double x, double y, int t, int n_domains, const SineParams& params = {});

DomainSequence generate_circle(int n_domains, int samples_per_domain, std::uint64_t seed,
                               const CircleParams& params = {});
DomainSequence generate_sine(int n_domains, int samples_per_domain, std::uint64_t seed,
                             const SineParams& params = {});

// Per-domain boundary angles of a drift variant over an n-domain Circle.
std::vector<double> drift_boundary_angles(int n_domains, DriftKind kind, std::uint64_t seed,
                                          const DriftParams& params = {});

// Relabels a Circle sequence; features are left untouched.
DomainSequence apply_drift_variant(const DomainSequence& seq, DriftKind kind, std::uint64_t seed,
                                   const DriftParams& params = {},
                                   const CircleParams& circle = {});

SplitResult split_domains(const DomainSequence& seq, const SplitSpec& spec = {});

// One mini-batch per source domain, row-aligned across domains.
struct AlignedBatch {
  std::vector<Eigen::MatrixXd> x;
  std::vector<std::vector<int>> y;
  // Positions of the drawn samples inside each domain.
  std::vector<std::vector<std::size_t>> indices;
};

// Epoch-based batch iterator. Each epoch draws an independent permutation
// per domain from (seed, epoch). Batches past the end of the smallest domain
// wrap around to the start of its permutation so every batch has exactly
// batch_size rows.
class SequenceBatches {
 public:
  SequenceBatches(const DomainSequence& source, int batch_size, std::uint64_t seed,
                  bool with_replacement = false);

  // ceil(min domain size / batch_size)
  int batches_per_epoch() const { return batches_per_epoch_; }
  void start_epoch(int epoch);
  // Fills `out` and returns true while the current epoch has batches left.
  bool next(AlignedBatch& out);

 private:
  const DomainSequence* source_;
  int batch_size_;
  std::uint64_t seed_;
  bool with_replacement_;
  int batches_per_epoch_;
  int cursor_ = 0;
  std::mt19937_64 rng_;
  std::vector<std::vector<std::size_t>> perms_;
};

void save_sequence(const DomainSequence& seq, const std::filesystem::path& path);
DomainSequence load_sequence(const std::filesystem::path& path);

}  // namespace sync_edg::data
