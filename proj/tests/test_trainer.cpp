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


#include "sync_edg/trainer.hpp"
#include "sync_edg/errors.hpp"
#include "sync_edg/predictor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace {

using namespace sync_edg;
using train::TrainConfig;
namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("sync_edg_trainer_" + name);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.epochs = 3;
  c.learning_rate = 3e-3;
  c.latent_dim = 4;
  c.hidden_width = 8;
  c.mi_samples = 32;
  c.seed = 5;
  return c;
}

struct TinyData {
  data::SplitResult split = data::split_domains(data::generate_circle(8, 16, 2));
};

TEST(Trainer, PerDatasetDefaults) {
  const auto c = TrainConfig::defaults_for("circle");
  EXPECT_EQ(c.batch_size, 64);
  EXPECT_EQ(c.epochs, 30);
  EXPECT_DOUBLE_EQ(c.learning_rate, 5e-6);
  EXPECT_DOUBLE_EQ(c.alpha1, 1.0);
  EXPECT_DOUBLE_EQ(c.alpha2, 0.02);
  EXPECT_DOUBLE_EQ(c.mask_ratio, 0.6);
  EXPECT_EQ(c.latent_dim, 20);
  const auto s = TrainConfig::defaults_for("sine");
  EXPECT_EQ(s.epochs, 50);
  EXPECT_DOUBLE_EQ(s.learning_rate, 1e-5);
  EXPECT_DOUBLE_EQ(s.alpha2, 0.001);
  EXPECT_EQ(s.latent_dim, 32);
  EXPECT_EQ(c.model_dims(2, 2).drift_states, 2);
  EXPECT_EQ(c.model_dims(2, 2).mask_k(), 12);
}

TEST(Trainer, ValidationListsEveryProblem) {
  TrainConfig c;
  c.batch_size = 0;
  c.learning_rate = -1;
  c.device = "gpu";
  try {
    c.validate();
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("batch_size"), std::string::npos);
    EXPECT_NE(msg.find("learning_rate"), std::string::npos);
    EXPECT_NE(msg.find("device"), std::string::npos);
  }
}

TEST(Trainer, ConfigJsonIsStrictAndRoundTrips) {
  const auto c = tiny_config();
  const auto back = TrainConfig::from_json(c.to_json(), TrainConfig{});
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  TrainConfig other = c;
  other.alpha2 = 0.5;
  EXPECT_NE(other.hash(), c.hash());

  nlohmann::json j = {{"epochs", "many"}, {"nonsense", 1}, {"alpha1", 2.0}, {"typo_key", true}};
  try {
    TrainConfig::from_json(j, TrainConfig{});
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epochs"), std::string::npos);
    EXPECT_NE(msg.find("nonsense"), std::string::npos);
    EXPECT_NE(msg.find("typo_key"), std::string::npos);
  }
}

TEST(Trainer, SyncRunBookkeeping) {
  TinyData d;
  const auto c = tiny_config();
  const auto run = train::train(c, d.split.source, d.split.intermediate);
  ASSERT_EQ(run.manifest.epochs.size(), 3u);
  // 16 samples, batch 8: two iterations per epoch, one bank entry each.
  EXPECT_EQ(run.steps.size(), 6u);
  EXPECT_EQ(run.bank.size(), 2u);
  EXPECT_EQ(run.bank.total_rows(), 16);
  EXPECT_EQ(run.bank.domain_index(), d.split.source.last_index());
  int best_count = 0;
  double best = -1;
  for (const auto& e : run.manifest.epochs) {
    EXPECT_TRUE(std::isfinite(e.mutual_info));
    EXPECT_TRUE(std::isfinite(e.mean_loss.total));
    if (e.best) {
      ++best_count;
      EXPECT_GT(e.intermediate_avg, best);
      best = e.intermediate_avg;
    }
  }
  EXPECT_GE(best_count, 1);
  EXPECT_DOUBLE_EQ(run.manifest.best_intermediate_avg, best);

  // The returned model and bank are the best epoch's: replaying the
  // intermediate evaluation gives the recorded score.
  HiddenStateBank bank = run.bank;
  const auto recs = predict::predict_sequence(run.model, bank, d.split.intermediate, c.seed);
  double acc = 0;
  for (const auto& r : recs) acc += r.accuracy;
  EXPECT_DOUBLE_EQ(acc / static_cast<double>(recs.size()), run.manifest.best_intermediate_avg);
}

TEST(Trainer, IdenticalSeedsGiveIdenticalLogs) {
  TinyData d;
  auto c = tiny_config();
  c.epochs = 2;
  const auto a = train::train(c, d.split.source, d.split.intermediate);
  const auto b = train::train(c, d.split.source, d.split.intermediate);
  train::write_step_log(temp_path("a.csv"), a.steps);
  train::write_step_log(temp_path("b.csv"), b.steps);
  EXPECT_EQ(slurp(temp_path("a.csv")), slurp(temp_path("b.csv")));
  EXPECT_EQ(a.manifest.to_json(false), b.manifest.to_json(false));
  c.seed = 6;
  const auto other = train::train(c, d.split.source, d.split.intermediate);
  train::write_step_log(temp_path("c.csv"), other.steps);
  EXPECT_NE(slurp(temp_path("a.csv")), slurp(temp_path("c.csv")));
}

TEST(Trainer, LogsHaveHeaderAndOneRowPerRecord) {
  TinyData d;
  auto c = tiny_config();
  c.epochs = 2;
  const auto run = train::train(c, d.split.source, d.split.intermediate);
  train::write_epoch_log(temp_path("epochs.csv"), run.manifest.epochs);
  std::istringstream is(slurp(temp_path("epochs.csv")));
  std::string header, line;
  std::getline(is, header);
  EXPECT_EQ(header.rfind("epoch,recon,", 0), 0u);
  EXPECT_NE(header.find("mutual_info"), std::string::npos);
  int n = 0;
  while (std::getline(is, line)) ++n;
  EXPECT_EQ(n, 2);
}

TEST(Trainer, SyncCheckpointRoundTrip) {
  TinyData d;
  auto c = tiny_config();
  c.epochs = 1;
  const auto path = temp_path("ckpt.json");
  train::TrainOptions opt;
  opt.checkpoint_path = path;
  const auto run = train::train(c, d.split.source, d.split.intermediate, opt);
  EXPECT_EQ(train::checkpoint_kind(path), "sync");
  const auto loaded = train::load_sync_checkpoint(path);
  EXPECT_EQ(loaded.model.snapshot(), run.model.snapshot());
  EXPECT_EQ(loaded.bank, run.bank);
  EXPECT_EQ(loaded.config.to_json(), c.to_json());
  EXPECT_THROW(train::load_erm_checkpoint(path), ParseError);

  // A config edited by hand no longer matches its hash.
  auto j = nlohmann::json::parse(slurp(path));
  j["config"]["alpha1"] = 3.0;
  std::ofstream(temp_path("tampered.json")) << j.dump();
  EXPECT_THROW(train::load_sync_checkpoint(temp_path("tampered.json")), ParseError);
  std::ofstream(temp_path("garbage.json")) << "{not json";
  EXPECT_THROW(train::load_sync_checkpoint(temp_path("garbage.json")), ParseError);
}

TEST(Trainer, ErmBaselineTrainsAndRoundTrips) {
  TinyData d;
  auto c = tiny_config();
  c.learning_rate = 1e-2;
  const auto run = train::train_erm_baseline(c, d.split.source, d.split.intermediate);
  EXPECT_EQ(run.manifest.method, "erm");
  ASSERT_EQ(run.manifest.epochs.size(), 3u);
  EXPECT_TRUE(std::isnan(run.manifest.epochs[0].mutual_info));
  // Same sample budget as SYNC: T * ceil(16 / 8) iterations per epoch.
  EXPECT_EQ(run.steps.size(), 3u * 4u * 2u);
  const auto path = temp_path("erm.json");
  train::save_checkpoint(path, run.model, c);
  EXPECT_EQ(train::checkpoint_kind(path), "erm");
  const auto loaded = train::load_erm_checkpoint(path);
  EXPECT_EQ(loaded.model.snapshot(), run.model.snapshot());
  EXPECT_THROW(train::load_sync_checkpoint(path), ParseError);
}

TEST(Trainer, ErmModelShapes) {
  const train::ErmModel m(2, 3, 8, nn::Activation::kRelu, 1);
  EXPECT_EQ(m.logits(ad::Tensor::zeros(5, 2)).cols(), 3);
  EXPECT_EQ(m.feature_dim(), 2);
  EXPECT_EQ(m.num_classes(), 3);
}

TEST(Trainer, MutualInfoEstimateIsFiniteAndDeterministic) {
  TinyData d;
  model::ModelDims dims;
  dims.latent_dim = 4;
  dims.hidden_width = 8;
  const model::SyncModel m(dims, 0);
  const double a = train::estimate_static_dynamic_mi(m, d.split.source, 32);
  EXPECT_TRUE(std::isfinite(a));
  EXPECT_EQ(a, train::estimate_static_dynamic_mi(m, d.split.source, 32));
}

TEST(Trainer, RejectsMisalignedInputs) {
  TinyData d;
  const auto c = tiny_config();
  EXPECT_THROW(train::train(c, d.split.source, d.split.target), ValidationError);
  auto bad = c;
  bad.batch_size = 64;
  EXPECT_THROW(train::train(bad, d.split.source, d.split.intermediate), ValidationError);
}

TEST(Trainer, SourceHashIsStable) {
  EXPECT_EQ(train::source_hash().size(), 16u);
  EXPECT_EQ(train::source_hash(), train::source_hash());
}

}  // namespace
