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

// Metrics (worst-case and average target accuracy), the static/dynamic MI
// training curve, and decision-boundary grids for 2-D models.

#include "sync_edg/hidden_state_bank.hpp"
#include "sync_edg/latent_model.hpp"
#include "sync_edg/predictor.hpp"
#include "sync_edg/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace sync_edg::eval {

struct MetricReport {
  std::vector<int> domains;
  std::vector<double> accuracies;
  double wst = 0.0;  // min over domains
  double avg = 0.0;  // mean over domains
  std::string dataset;
  std::string method;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

MetricReport compute_metrics(const std::vector<predict::PredictionRecord>& records,
                             const std::string& dataset = "", const std::string& method = "",
                             std::uint64_t seed = 0);

struct CurvePoint {
  int epoch = 0;
  double mutual_info = 0.0;
  // True when this value does not exceed the previous one (true for the
  // first point).
  bool non_increasing = true;
};

std::vector<CurvePoint> disentanglement_curve(const std::vector<train::EpochRecord>& epochs);
// Reads an epoch log written by train::write_epoch_log. Throws ParseError
// when the epoch or mutual_info column is missing or empty.
std::vector<CurvePoint> disentanglement_curve(const std::filesystem::path& epoch_log);

struct Bounds {
  double x_min = -2.0;
  double x_max = 2.0;
  double y_min = -2.0;
  double y_max = 2.0;
};

// labels(r, c) is the class predicted at (x(c), y(r)); the lattice includes
// the four edges of the box.
struct Grid {
  Bounds bounds;
  int resolution = 0;
  Eigen::MatrixXi labels;

  double x(int c) const;
  double y(int r) const;
};

using PointClassifier = std::function<std::vector<int>(const ad::Matrix& points)>;

Grid decision_boundary_grid(const PointClassifier& classify, const Bounds& bounds, int resolution);

// Model grid under the domain-t inference path: bank states from the
// end-of-training snapshot (treated as having consumed domain t - 1), the
// drift prior rolled to t, deterministic masks.
Grid decision_boundary_grid(const model::SyncModel& model, const HiddenStateBank& bank_snapshot,
                            const Bounds& bounds, int resolution, int domain_t,
                            std::uint64_t seed);

// Plain-text matrix: a "# x_min x_max y_min y_max resolution" header then
// one row of labels per line, top row = y_min.
void write_grid(const std::filesystem::path& path, const Grid& grid);
Grid read_grid(const std::filesystem::path& path);

}  // namespace sync_edg::eval
