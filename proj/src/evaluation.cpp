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
#include "sync_edg/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace sync_edg::eval {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

nlohmann::json MetricReport::to_json() const {
  return {{"dataset", dataset}, {"method", method},         {"seed", seed},
          {"wst", wst},         {"avg", avg},               {"domains", domains},
          {"accuracies", accuracies}};
}

MetricReport compute_metrics(const std::vector<predict::PredictionRecord>& records,
                             const std::string& dataset, const std::string& method,
                             std::uint64_t seed) {
  if (records.empty()) throw ValidationError("compute_metrics: no prediction records");
  MetricReport r;
  r.dataset = dataset;
  r.method = method;
  r.seed = seed;
  for (const auto& rec : records) {
    r.domains.push_back(rec.t);
    r.accuracies.push_back(rec.accuracy);
  }
  r.wst = *std::min_element(r.accuracies.begin(), r.accuracies.end());
  // Sorted summation so the mean does not depend on domain order.
  std::vector<double> sorted = r.accuracies;
  std::sort(sorted.begin(), sorted.end());
  r.avg = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  return r;
}

std::vector<CurvePoint> disentanglement_curve(const std::vector<train::EpochRecord>& epochs) {
  std::vector<CurvePoint> out;
  for (const auto& e : epochs) {
    if (!std::isfinite(e.mutual_info)) {
      throw ValidationError("disentanglement_curve: epoch " + std::to_string(e.epoch) +
                            " has no mutual-information estimate");
    }
    const bool down = out.empty() || e.mutual_info <= out.back().mutual_info;
    out.push_back({e.epoch, e.mutual_info, down});
  }
  return out;
}

std::vector<CurvePoint> disentanglement_curve(const std::filesystem::path& epoch_log) {
  std::ifstream is(epoch_log);
  if (!is) throw ParseError("cannot open '" + epoch_log.string() + "'");
  std::string line;
  if (!std::getline(is, line)) throw ParseError(epoch_log.string() + ": empty file");
  const auto head = split_csv(line);
  const auto col = [&](const char* name) {
    const auto it = std::find(head.begin(), head.end(), name);
    if (it == head.end()) {
      throw ParseError(epoch_log.string() + ": missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - head.begin());
  };
  const std::size_t c_epoch = col("epoch");
  const std::size_t c_mi = col("mutual_info");
  std::vector<train::EpochRecord> epochs;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != head.size() || cells[c_mi].empty()) {
      throw ParseError(epoch_log.string() + ":" + std::to_string(line_no) +
                       ": missing mutual_info value");
    }
    train::EpochRecord e;
    try {
      e.epoch = std::stoi(cells[c_epoch]);
      e.mutual_info = std::stod(cells[c_mi]);
    } catch (const std::exception&) {
      throw ParseError(epoch_log.string() + ":" + std::to_string(line_no) + ": bad number");
    }
    epochs.push_back(e);
  }
  return disentanglement_curve(epochs);
}

double Grid::x(int c) const {
  return bounds.x_min + (bounds.x_max - bounds.x_min) * c / (resolution - 1);
}

double Grid::y(int r) const {
  return bounds.y_min + (bounds.y_max - bounds.y_min) * r / (resolution - 1);
}

Grid decision_boundary_grid(const PointClassifier& classify, const Bounds& bounds,
                            int resolution) {
  if (resolution < 2) throw ValidationError("decision_boundary_grid: resolution must be >= 2");
  if (!(bounds.x_max > bounds.x_min && bounds.y_max > bounds.y_min)) {
    throw ValidationError("decision_boundary_grid: empty bounds");
  }
  Grid g{bounds, resolution, Eigen::MatrixXi(resolution, resolution)};
  ad::Matrix pts(static_cast<Eigen::Index>(resolution) * resolution, 2);
  for (int r = 0; r < resolution; ++r) {
    for (int c = 0; c < resolution; ++c) {
      const Eigen::Index i = static_cast<Eigen::Index>(r) * resolution + c;
      pts(i, 0) = g.x(c);
      pts(i, 1) = g.y(r);
    }
  }
  const std::vector<int> labels = classify(pts);
  if (static_cast<Eigen::Index>(labels.size()) != pts.rows()) {
    throw ValidationError("decision_boundary_grid: classifier returned the wrong count");
  }
  for (int r = 0; r < resolution; ++r) {
    for (int c = 0; c < resolution; ++c) {
      g.labels(r, c) = labels[static_cast<std::size_t>(r) * resolution + c];
    }
  }
  return g;
}

Grid decision_boundary_grid(const model::SyncModel& model, const HiddenStateBank& bank_snapshot,
                            const Bounds& bounds, int resolution, int domain_t,
                            std::uint64_t seed) {
  if (model.dims().feature_dim != 2) {
    throw ValidationError("decision_boundary_grid: model is not 2-D (feature_dim " +
                          std::to_string(model.dims().feature_dim) + ")");
  }
  if (domain_t < 1) throw ValidationError("decision_boundary_grid: domain_t must be >= 1");
  HiddenStateBank bank;
  for (auto e : bank_snapshot.entries()) {
    e.domain_index = domain_t - 1;
    bank.add(std::move(e));
  }
  return decision_boundary_grid(
      [&](const ad::Matrix& pts) {
        const ad::Matrix logits = predict::predict_logits(model, bank, pts, domain_t, seed);
        std::vector<int> out(static_cast<std::size_t>(logits.rows()));
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
          Eigen::Index p = 0;
          logits.row(i).maxCoeff(&p);
          out[static_cast<std::size_t>(i)] = static_cast<int>(p);
        }
        return out;
      },
      bounds, resolution);
}

void write_grid(const std::filesystem::path& path, const Grid& grid) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "# " << format_double(grid.bounds.x_min) << ' ' << format_double(grid.bounds.x_max) << ' '
     << format_double(grid.bounds.y_min) << ' ' << format_double(grid.bounds.y_max) << ' '
     << grid.resolution << '\n';
  for (int r = 0; r < grid.resolution; ++r) {
    for (int c = 0; c < grid.resolution; ++c) os << (c ? " " : "") << grid.labels(r, c);
    os << '\n';
  }
}

Grid read_grid(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open '" + path.string() + "'");
  std::string hash;
  Grid g;
  if (!(is >> hash >> g.bounds.x_min >> g.bounds.x_max >> g.bounds.y_min >> g.bounds.y_max >>
        g.resolution) ||
      hash != "#" || g.resolution < 2) {
    throw ParseError(path.string() + ": bad grid header");
  }
  g.labels.resize(g.resolution, g.resolution);
  for (int r = 0; r < g.resolution; ++r) {
    for (int c = 0; c < g.resolution; ++c) {
      if (!(is >> g.labels(r, c))) {
        throw ParseError(path.string() + ": grid row " + std::to_string(r + 1) + " is short");
      }
    }
  }
  return g;
}

}  // namespace sync_edg::eval
