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

// Training loops: SYNC over index-aligned source batches with the hidden
// state bank, and the pooled-ERM baseline. Both select the epoch with the
// best average accuracy on the intermediate domains.

#include "sync_edg/domain_stream.hpp"
#include "sync_edg/hidden_state_bank.hpp"
#include "sync_edg/latent_model.hpp"
#include "sync_edg/nn.hpp"
#include "sync_edg/objectives.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sync_edg::train {

struct TrainConfig {
  std::string dataset = "circle";
  int batch_size = 64;
  int epochs = 30;
  double learning_rate = 5e-6;
  double alpha1 = 1.0;
  double alpha2 = 0.02;
  double mask_ratio = 0.6;
  int latent_dim = 20;
  // 0 means "number of classes".
  int drift_states = 0;
  int hidden_width = 64;
  nn::Activation activation = nn::Activation::kRelu;
  double tau_gumbel = stochastic::kDefaultTauGumbel;
  double tau_contrastive = objectives::kDefaultTauContrastive;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 10.0;
  bool with_replacement = false;
  // Source rows used for the per-epoch static/dynamic MI estimate.
  int mi_samples = 512;
  std::uint64_t seed = 0;
  std::string device = "cpu";

  // Per-dataset defaults: circle (B 64, 30 epochs, lr 5e-6, alpha2 0.02,
  // N 20) and sine (B 64, 50 epochs, lr 1e-5, alpha2 0.001, N 32).
  static TrainConfig defaults_for(const std::string& dataset);

  void validate() const;
  model::ModelDims model_dims(int feature_dim, int num_classes) const;
  nn::AdamOptions adam() const;

  nlohmann::json to_json() const;
  // Strict: unknown keys and type errors are collected and thrown together
  // as one ValidationError.
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base);
  std::uint64_t hash() const;
};

// Plain feature extractor plus linear classifier on pooled source samples.
class ErmModel {
 public:
  ErmModel(int feature_dim, int num_classes, int hidden_width, nn::Activation act,
           std::uint64_t seed);
  ErmModel(const ErmModel&) = delete;
  ErmModel& operator=(const ErmModel&) = delete;
  ErmModel(ErmModel&&) = default;
  ErmModel& operator=(ErmModel&&) = default;

  ad::Tensor logits(const ad::Tensor& x) const;
  nn::ParameterList parameters() const;
  std::vector<ad::Matrix> snapshot() const;
  void restore(const std::vector<ad::Matrix>& values);

  int feature_dim() const { return extractor_.in_features(); }
  int num_classes() const { return head_.out_features(); }

 private:
  nn::Mlp extractor_;
  nn::Linear head_;
  nn::Activation act_;
};

struct StepRecord {
  int step = 0;
  int epoch = 0;
  objectives::LossBreakdown loss;
  double grad_norm = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  objectives::LossBreakdown mean_loss;
  double intermediate_avg = 0.0;
  // Static/dynamic MI estimate on the fixed source slice (NaN for ERM).
  double mutual_info = 0.0;
  bool best = false;
  int bank_size = 0;
};

// Append-only record of a run.
struct RunManifest {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::string source_hash;
  std::string method;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_intermediate_avg = 0.0;
  double wall_clock_seconds = 0.0;
  std::vector<std::string> checkpoint_paths;

  // `with_timing` = false drops wall-clock so two runs compare equal.
  nlohmann::json to_json(bool with_timing = true) const;
};

struct TrainOptions {
  // When set, the best checkpoint so far is written here after every
  // improvement, so an aborted run keeps its last good state.
  std::optional<std::filesystem::path> checkpoint_path;
  bool verbose = false;
};

struct SyncRun {
  model::SyncModel model;
  HiddenStateBank bank;
  RunManifest manifest;
  std::vector<StepRecord> steps;
};

struct ErmRun {
  ErmModel model;
  RunManifest manifest;
  std::vector<StepRecord> steps;
};

SyncRun train(const TrainConfig& config, const data::DomainSequence& source,
              const data::DomainSequence& intermediate, const TrainOptions& options = {});

ErmRun train_erm_baseline(const TrainConfig& config, const data::DomainSequence& source,
                          const data::DomainSequence& intermediate,
                          const TrainOptions& options = {});

// Mean over source domains of the MWS estimate of I(z_st; z_dy), evaluated
// at the posterior means on the first ceil(mi_samples / T) rows of every
// domain.
double estimate_static_dynamic_mi(const model::SyncModel& model,
                                  const data::DomainSequence& source, int mi_samples);

// Checkpoints: versioned JSON holding the config (and its hash), model dims,
// every parameter tensor by name, and for SYNC the hidden state bank.
void save_checkpoint(const std::filesystem::path& path, const model::SyncModel& model,
                     const HiddenStateBank& bank, const TrainConfig& config);
void save_checkpoint(const std::filesystem::path& path, const ErmModel& model,
                     const TrainConfig& config);

struct LoadedSync {
  model::SyncModel model;
  HiddenStateBank bank;
  TrainConfig config;
};
struct LoadedErm {
  ErmModel model;
  TrainConfig config;
};

// "sync" or "erm".
std::string checkpoint_kind(const std::filesystem::path& path);
LoadedSync load_sync_checkpoint(const std::filesystem::path& path);
LoadedErm load_erm_checkpoint(const std::filesystem::path& path);

// CSV writers; doubles use shortest round-trip formatting so identical runs
// produce identical bytes.
void write_step_log(const std::filesystem::path& path, const std::vector<StepRecord>& steps);
void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochRecord>& epochs);

// Identifier of the source tree this binary was built from.
std::string source_hash();

}  // namespace sync_edg::train
