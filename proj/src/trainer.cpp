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
#include "sync_edg/text.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

#ifndef SYNC_EDG_SOURCE_HASH
#define SYNC_EDG_SOURCE_HASH "unknown"
#endif

namespace sync_edg::train {

namespace {

using ad::Matrix;
using ad::Tensor;
using nlohmann::json;

constexpr char kCheckpointFormat[] = "sync-edg-checkpoint";
constexpr int kCheckpointVersion = 1;

// Independent streams derived from the run seed.
enum class Stream : std::uint32_t { kModel = 1, kNoise = 2, kBatches = 3, kErm = 4 };

std::uint64_t stream_seed(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

double mean_accuracy(const std::vector<predict::PredictionRecord>& records) {
  double acc = 0.0;
  for (const auto& r : records) acc += r.accuracy;
  return records.empty() ? 0.0 : acc / static_cast<double>(records.size());
}

void check_pair(const data::DomainSequence& source, const data::DomainSequence& intermediate) {
  source.validate();
  if (source.size() < 2) {
    throw ValidationError("training needs at least 2 source domains (got " +
                          std::to_string(source.size()) + ")");
  }
  if (intermediate.empty()) throw ValidationError("intermediate block is empty");
  intermediate.validate();
  if (source.feature_dim != intermediate.feature_dim ||
      source.num_classes != intermediate.num_classes) {
    throw ValidationError("source and intermediate blocks disagree on feature_dim/num_classes");
  }
  if (intermediate.first_index() != source.last_index() + 1) {
    throw ValidationError("intermediate block must directly follow the source block");
  }
}

objectives::LossBreakdown average(const std::vector<StepRecord>& steps, std::size_t from) {
  objectives::LossBreakdown m;
  const auto n = static_cast<double>(steps.size() - from);
  for (std::size_t i = from; i < steps.size(); ++i) {
    const auto& l = steps[i].loss;
    m.recon += l.recon / n;
    m.kl_static += l.kl_static / n;
    m.kl_dynamic += l.kl_dynamic / n;
    m.kl_drift += l.kl_drift / n;
    m.nll_class += l.nll_class / n;
    m.mi_penalty += l.mi_penalty / n;
    m.static_contrastive += l.static_contrastive / n;
    m.dynamic_contrastive += l.dynamic_contrastive / n;
    m.total += l.total / n;
    m.alpha1 = l.alpha1;
    m.alpha2 = l.alpha2;
  }
  return m;
}

json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j, const std::string& what) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ParseError("checkpoint: tensor '" + what + "' has inconsistent size");
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  }
  return m;
}

json dims_to_json(const model::ModelDims& d) {
  return {{"feature_dim", d.feature_dim},   {"num_classes", d.num_classes},
          {"latent_dim", d.latent_dim},     {"drift_states", d.drift_states},
          {"hidden_width", d.hidden_width}, {"mask_ratio", d.mask_ratio},
          {"tau_gumbel", d.tau_gumbel},     {"activation", nn::to_string(d.activation)}};
}

model::ModelDims dims_from_json(const json& j) {
  model::ModelDims d;
  d.feature_dim = j.at("feature_dim").get<int>();
  d.num_classes = j.at("num_classes").get<int>();
  d.latent_dim = j.at("latent_dim").get<int>();
  d.drift_states = j.at("drift_states").get<int>();
  d.hidden_width = j.at("hidden_width").get<int>();
  d.mask_ratio = j.at("mask_ratio").get<double>();
  d.tau_gumbel = j.at("tau_gumbel").get<double>();
  d.activation = nn::parse_activation(j.at("activation").get<std::string>());
  return d;
}

json params_to_json(const nn::ParameterList& params) {
  json out = json::array();
  for (const auto& p : params) {
    json t = matrix_to_json(p.tensor.value());
    t["name"] = p.name;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Matrix> params_from_json(const json& j, const nn::ParameterList& expected) {
  if (!j.is_array() || j.size() != expected.size()) {
    throw ParseError("checkpoint: expected " + std::to_string(expected.size()) + " tensors");
  }
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto name = j[i].at("name").get<std::string>();
    if (name != expected[i].name) {
      throw ParseError("checkpoint: tensor " + std::to_string(i) + " is '" + name +
                       "', expected '" + expected[i].name + "'");
    }
    Matrix m = matrix_from_json(j[i], name);
    if (m.rows() != expected[i].tensor.rows() || m.cols() != expected[i].tensor.cols()) {
      throw ParseError("checkpoint: tensor '" + name + "' has the wrong shape");
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

json header(const char* kind, const TrainConfig& config) {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"kind", kind},
          {"config", config.to_json()},
          {"config_hash", hex64(config.hash())},
          {"source_hash", source_hash()}};
}

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << j.dump() << '\n';
  if (!os) throw std::runtime_error("write to '" + path.string() + "' failed");
}

json read_checkpoint(const std::filesystem::path& path, const char* kind) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open checkpoint '" + path.string() + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat) {
    throw ParseError(path.string() + ": not a sync-edg checkpoint");
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw ParseError(path.string() + ": unsupported checkpoint version");
  }
  if (kind != nullptr && j.value("kind", "") != kind) {
    throw ParseError(path.string() + ": checkpoint kind is '" + j.value("kind", "") +
                     "', expected '" + kind + "'");
  }
  return j;
}

TrainConfig config_from_checkpoint(const json& j, const std::filesystem::path& path) {
  TrainConfig config = TrainConfig::from_json(j.at("config"), TrainConfig{});
  if (hex64(config.hash()) != j.at("config_hash").get<std::string>()) {
    throw ParseError(path.string() + ": config hash mismatch");
  }
  return config;
}

void write_csv_row(std::ostream& os, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
  os << '\n';
}

}  // namespace

TrainConfig TrainConfig::defaults_for(const std::string& dataset) {
  TrainConfig c;
  c.dataset = dataset;
  if (dataset.rfind("sine", 0) == 0) {
    c.epochs = 50;
    c.learning_rate = 1e-5;
    c.alpha2 = 0.001;
    c.latent_dim = 32;
  }
  return c;
}

void TrainConfig::validate() const {
  std::vector<std::string> bad;
  if (batch_size <= 0) bad.push_back("batch_size must be positive");
  if (epochs <= 0) bad.push_back("epochs must be positive");
  if (!(learning_rate > 0.0)) bad.push_back("learning_rate must be positive");
  if (!(alpha1 >= 0.0)) bad.push_back("alpha1 must be non-negative");
  if (!(alpha2 >= 0.0)) bad.push_back("alpha2 must be non-negative");
  if (!(mask_ratio > 0.0 && mask_ratio <= 1.0)) bad.push_back("mask_ratio must lie in (0, 1]");
  if (latent_dim <= 0) bad.push_back("latent_dim must be positive");
  if (drift_states < 0) bad.push_back("drift_states must be >= 0");
  if (hidden_width <= 0) bad.push_back("hidden_width must be positive");
  if (!(tau_gumbel > 0.0)) bad.push_back("tau_gumbel must be positive");
  if (!(tau_contrastive > 0.0)) bad.push_back("tau_contrastive must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) bad.push_back("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) bad.push_back("beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) bad.push_back("epsilon must be positive");
  if (mi_samples <= 0) bad.push_back("mi_samples must be positive");
  if (device != "cpu") bad.push_back("device must be 'cpu'");
  if (!bad.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& b : bad) msg += " " + b + ";";
    throw ValidationError(msg);
  }
}

model::ModelDims TrainConfig::model_dims(int feature_dim, int num_classes) const {
  model::ModelDims d;
  d.feature_dim = feature_dim;
  d.num_classes = num_classes;
  d.latent_dim = latent_dim;
  d.drift_states = drift_states > 0 ? drift_states : num_classes;
  d.hidden_width = hidden_width;
  d.mask_ratio = mask_ratio;
  d.tau_gumbel = tau_gumbel;
  d.activation = activation;
  return d;
}

nn::AdamOptions TrainConfig::adam() const {
  return {learning_rate, beta1, beta2, epsilon, clip_norm};
}

json TrainConfig::to_json() const {
  return {{"dataset", dataset},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"learning_rate", learning_rate},
          {"alpha1", alpha1},
          {"alpha2", alpha2},
          {"mask_ratio", mask_ratio},
          {"latent_dim", latent_dim},
          {"drift_states", drift_states},
          {"hidden_width", hidden_width},
          {"activation", nn::to_string(activation)},
          {"tau_gumbel", tau_gumbel},
          {"tau_contrastive", tau_contrastive},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epsilon", epsilon},
          {"clip_norm", clip_norm},
          {"with_replacement", with_replacement},
          {"mi_samples", mi_samples},
          {"seed", seed},
          {"device", device}};
}

TrainConfig TrainConfig::from_json(const json& j, const TrainConfig& base) {
  if (!j.is_object()) throw ValidationError("training config must be a JSON object");
  TrainConfig c = base;
  using Setter = std::function<void(const json&)>;
  const std::map<std::string, Setter> setters{
      {"dataset", [&](const json& v) { c.dataset = v.get<std::string>(); }},
      {"batch_size", [&](const json& v) { c.batch_size = v.get<int>(); }},
      {"epochs", [&](const json& v) { c.epochs = v.get<int>(); }},
      {"learning_rate", [&](const json& v) { c.learning_rate = v.get<double>(); }},
      {"alpha1", [&](const json& v) { c.alpha1 = v.get<double>(); }},
      {"alpha2", [&](const json& v) { c.alpha2 = v.get<double>(); }},
      {"mask_ratio", [&](const json& v) { c.mask_ratio = v.get<double>(); }},
      {"latent_dim", [&](const json& v) { c.latent_dim = v.get<int>(); }},
      {"drift_states", [&](const json& v) { c.drift_states = v.get<int>(); }},
      {"hidden_width", [&](const json& v) { c.hidden_width = v.get<int>(); }},
      {"activation",
       [&](const json& v) { c.activation = nn::parse_activation(v.get<std::string>()); }},
      {"tau_gumbel", [&](const json& v) { c.tau_gumbel = v.get<double>(); }},
      {"tau_contrastive", [&](const json& v) { c.tau_contrastive = v.get<double>(); }},
      {"beta1", [&](const json& v) { c.beta1 = v.get<double>(); }},
      {"beta2", [&](const json& v) { c.beta2 = v.get<double>(); }},
      {"epsilon", [&](const json& v) { c.epsilon = v.get<double>(); }},
      {"clip_norm", [&](const json& v) { c.clip_norm = v.get<double>(); }},
      {"with_replacement", [&](const json& v) { c.with_replacement = v.get<bool>(); }},
      {"mi_samples", [&](const json& v) { c.mi_samples = v.get<int>(); }},
      {"seed", [&](const json& v) { c.seed = v.get<std::uint64_t>(); }},
      {"device", [&](const json& v) { c.device = v.get<std::string>(); }},
  };
  std::vector<std::string> bad;
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) {
      bad.push_back("unknown key '" + key + "'");
      continue;
    }
    try {
      it->second(value);
    } catch (const std::exception& e) {
      bad.push_back("key '" + key + "': " + e.what());
    }
  }
  if (!bad.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& b : bad) msg += " " + b + ";";
    throw ValidationError(msg);
  }
  return c;
}

std::uint64_t TrainConfig::hash() const { return model::fnv1a64(to_json().dump()); }

ErmModel::ErmModel(int feature_dim, int num_classes, int hidden_width, nn::Activation act,
                   std::uint64_t seed)
    : act_(act) {
  std::mt19937_64 rng(seed);
  extractor_ = nn::Mlp({feature_dim, hidden_width, hidden_width, hidden_width}, act, rng);
  head_ = nn::Linear(hidden_width, num_classes, rng);
}

Tensor ErmModel::logits(const Tensor& x) const {
  if (x.cols() != feature_dim()) throw ValidationError("ErmModel: feature_dim mismatch");
  return head_(nn::activate(extractor_(x), act_));
}

nn::ParameterList ErmModel::parameters() const {
  nn::ParameterList out;
  extractor_.collect("extractor", out);
  head_.collect("head", out);
  return out;
}

std::vector<Matrix> ErmModel::snapshot() const {
  std::vector<Matrix> out;
  for (const auto& p : parameters()) out.push_back(p.tensor.value());
  return out;
}

void ErmModel::restore(const std::vector<Matrix>& values) {
  auto params = parameters();
  if (values.size() != params.size()) throw ValidationError("ErmModel::restore: size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor.mutable_value() = values[i];
}

json RunManifest::to_json(bool with_timing) const {
  json epochs_json = json::array();
  for (const auto& e : epochs) {
    json loss;
    const auto names = objectives::LossBreakdown::field_names();
    const auto vals = e.mean_loss.values();
    for (std::size_t i = 0; i < names.size(); ++i) loss[names[i]] = vals[i];
    json rec{{"epoch", e.epoch},
             {"mean_loss", std::move(loss)},
             {"intermediate_avg", e.intermediate_avg},
             {"best", e.best},
             {"bank_size", e.bank_size}};
    if (std::isfinite(e.mutual_info)) rec["mutual_info"] = e.mutual_info;
    epochs_json.push_back(std::move(rec));
  }
  json j{{"method", method},
         {"config", config},
         {"seed", seed},
         {"source_hash", source_hash},
         {"epochs", std::move(epochs_json)},
         {"best_epoch", best_epoch},
         {"best_intermediate_avg", best_intermediate_avg},
         {"checkpoint_paths", checkpoint_paths}};
  if (with_timing) j["wall_clock_seconds"] = wall_clock_seconds;
  return j;
}

double estimate_static_dynamic_mi(const model::SyncModel& model,
                                  const data::DomainSequence& source, int mi_samples) {
  if (source.empty()) throw ValidationError("estimate_static_dynamic_mi: empty sequence");
  const auto T = static_cast<int>(source.size());
  const auto per = std::min<std::size_t>(
      static_cast<std::size_t>((mi_samples + T - 1) / T), source.min_domain_size());
  model::RecurrentState state = model.initial_dynamic_state(static_cast<Eigen::Index>(per));
  state.domain_index = source.first_index() - 1;
  double total = 0.0;
  for (const auto& d : source.domains) {
    const Tensor x = Tensor::constant(d.features().topRows(static_cast<Eigen::Index>(per)));
    const auto q_st = model.encode_static(x);
    auto [q_dy, next] = model.encode_dynamic(x, state, d.t);
    state = std::move(next);
    total += objectives::loss_mutual_info(q_st, q_dy, q_st.mu, q_dy.mu, static_cast<double>(per))
                 .item();
  }
  return total / T;
}

SyncRun train(const TrainConfig& config, const data::DomainSequence& source,
              const data::DomainSequence& intermediate, const TrainOptions& options) {
  config.validate();
  check_pair(source, intermediate);
  const auto started = std::chrono::steady_clock::now();

  const auto dims = config.model_dims(source.feature_dim, source.num_classes);
  SyncRun run{model::SyncModel(dims, stream_seed(config.seed, Stream::kModel)), {}, {}, {}};
  nn::Adam adam(run.model.parameters(), config.adam());
  data::SequenceBatches batches(source, config.batch_size,
                                stream_seed(config.seed, Stream::kBatches),
                                config.with_replacement);
  std::mt19937_64 noise_rng(stream_seed(config.seed, Stream::kNoise));

  objectives::ForwardOptions fwd;
  fwd.tau_contrastive = config.tau_contrastive;
  fwd.alpha1 = config.alpha1;
  fwd.alpha2 = config.alpha2;

  std::vector<double> sizes;
  for (const auto& d : source.domains) sizes.push_back(static_cast<double>(d.size()));

  RunManifest& manifest = run.manifest;
  manifest.method = "sync";
  manifest.config = config.to_json();
  manifest.seed = config.seed;
  manifest.source_hash = source_hash();
  if (options.checkpoint_path) manifest.checkpoint_paths.push_back(options.checkpoint_path->string());

  std::vector<Matrix> best_params;
  HiddenStateBank best_bank;
  double best = -std::numeric_limits<double>::infinity();
  HiddenStateBank bank;
  data::AlignedBatch batch;
  int step = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    bank.clear();
    batches.start_epoch(epoch);
    const std::size_t first_step = run.steps.size();
    while (batches.next(batch)) {
      auto out = objectives::forward_sequence(run.model, batch.x, batch.y, source.first_index(),
                                              sizes, fwd, noise_rng);
      adam.zero_grad();
      out.loss.total.backward();
      const double norm = adam.step();
      bank.add(out.final_dynamic_state);
      run.steps.push_back({++step, epoch, out.loss.breakdown, norm});
    }

    HiddenStateBank probe = bank;
    const double avg =
        mean_accuracy(predict::predict_sequence(run.model, probe, intermediate, config.seed));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = average(run.steps, first_step);
    rec.intermediate_avg = avg;
    rec.mutual_info = estimate_static_dynamic_mi(run.model, source, config.mi_samples);
    rec.bank_size = static_cast<int>(bank.size());
    if (avg > best) {
      best = avg;
      rec.best = true;
      best_params = run.model.snapshot();
      best_bank = bank;
      manifest.best_epoch = epoch;
      manifest.best_intermediate_avg = avg;
      if (options.checkpoint_path) save_checkpoint(*options.checkpoint_path, run.model, bank, config);
    }
    manifest.epochs.push_back(rec);
    if (options.verbose) {
      spdlog::info("sync epoch {}/{} loss {:.4f} intermediate avg {:.4f} mi {:.4f}{}", epoch,
                   config.epochs, rec.mean_loss.total, avg, rec.mutual_info,
                   rec.best ? " (best)" : "");
    }
  }

  run.model.restore(best_params);
  run.bank = std::move(best_bank);
  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

ErmRun train_erm_baseline(const TrainConfig& config, const data::DomainSequence& source,
                          const data::DomainSequence& intermediate, const TrainOptions& options) {
  config.validate();
  check_pair(source, intermediate);
  const auto started = std::chrono::steady_clock::now();

  ErmRun run{ErmModel(source.feature_dim, source.num_classes, config.hidden_width,
                      config.activation, stream_seed(config.seed, Stream::kModel)),
             {},
             {}};
  nn::Adam adam(run.model.parameters(), config.adam());

  std::vector<const data::Sample*> pool;
  for (const auto& d : source.domains) {
    for (const auto& s : d.samples) pool.push_back(&s);
  }
  const auto B = static_cast<std::size_t>(config.batch_size);
  if (!config.with_replacement && pool.size() < B) {
    throw ValidationError("pooled source has fewer samples than batch_size");
  }
  // Same number of sample visits per epoch as SYNC: T aligned batches per
  // iteration.
  const std::size_t per_domain = (source.min_domain_size() + B - 1) / B;
  const std::size_t iterations = per_domain * source.size();

  RunManifest& manifest = run.manifest;
  manifest.method = "erm";
  manifest.config = config.to_json();
  manifest.seed = config.seed;
  manifest.source_hash = source_hash();
  if (options.checkpoint_path) manifest.checkpoint_paths.push_back(options.checkpoint_path->string());

  std::vector<Matrix> best_params;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(pool.size());
  const auto dim = static_cast<Eigen::Index>(source.feature_dim);
  int step = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                      static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(Stream::kErm)};
    std::mt19937_64 rng(seq);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const std::size_t first_step = run.steps.size();

    for (std::size_t it = 0; it < iterations; ++it) {
      Matrix x(static_cast<Eigen::Index>(B), dim);
      std::vector<int> y(B);
      for (std::size_t r = 0; r < B; ++r) {
        const std::size_t idx =
            config.with_replacement ? pick(rng) : order[(it * B + r) % order.size()];
        const data::Sample& s = *pool[idx];
        for (Eigen::Index j = 0; j < dim; ++j) {
          x(static_cast<Eigen::Index>(r), j) = s.features[static_cast<std::size_t>(j)];
        }
        y[r] = s.label;
      }
      const Tensor loss = ad::cross_entropy(run.model.logits(Tensor::constant(x)), y);
      if (!std::isfinite(loss.item())) throw NonFiniteLossError("nll_class", loss.item());
      adam.zero_grad();
      loss.backward();
      const double norm = adam.step();
      objectives::LossBreakdown b;
      b.nll_class = loss.item();
      b.total = b.nll_class;
      run.steps.push_back({++step, epoch, b, norm});
    }

    const double avg = mean_accuracy(predict::predict_erm(run.model, intermediate));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = average(run.steps, first_step);
    rec.intermediate_avg = avg;
    rec.mutual_info = std::numeric_limits<double>::quiet_NaN();
    if (avg > best) {
      best = avg;
      rec.best = true;
      best_params = run.model.snapshot();
      manifest.best_epoch = epoch;
      manifest.best_intermediate_avg = avg;
      if (options.checkpoint_path) save_checkpoint(*options.checkpoint_path, run.model, config);
    }
    manifest.epochs.push_back(rec);
    if (options.verbose) {
      spdlog::info("erm epoch {}/{} loss {:.4f} intermediate avg {:.4f}{}", epoch, config.epochs,
                   rec.mean_loss.total, avg, rec.best ? " (best)" : "");
    }
  }

  run.model.restore(best_params);
  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

void save_checkpoint(const std::filesystem::path& path, const model::SyncModel& model,
                     const HiddenStateBank& bank, const TrainConfig& config) {
  json j = header("sync", config);
  j["dims"] = dims_to_json(model.dims());
  j["tensors"] = params_to_json(model.parameters());
  json entries = json::array();
  for (const auto& e : bank.entries()) {
    entries.push_back({{"domain_index", e.domain_index},
                       {"h", matrix_to_json(e.h)},
                       {"c", matrix_to_json(e.c)}});
  }
  j["bank"] = std::move(entries);
  write_json(path, j);
}

void save_checkpoint(const std::filesystem::path& path, const ErmModel& model,
                     const TrainConfig& config) {
  json j = header("erm", config);
  j["dims"] = {{"feature_dim", model.feature_dim()},
               {"num_classes", model.num_classes()},
               {"hidden_width", config.hidden_width},
               {"activation", nn::to_string(config.activation)}};
  j["tensors"] = params_to_json(model.parameters());
  write_json(path, j);
}

std::string checkpoint_kind(const std::filesystem::path& path) {
  return read_checkpoint(path, nullptr).at("kind").get<std::string>();
}

LoadedSync load_sync_checkpoint(const std::filesystem::path& path) {
  const json j = read_checkpoint(path, "sync");
  try {
    TrainConfig config = config_from_checkpoint(j, path);
    model::SyncModel m(dims_from_json(j.at("dims")), 0);
    m.restore(params_from_json(j.at("tensors"), m.parameters()));
    HiddenStateBank bank;
    for (const auto& e : j.at("bank")) {
      bank.add(BankEntry{matrix_from_json(e.at("h"), "bank.h"), matrix_from_json(e.at("c"), "bank.c"),
                         e.at("domain_index").get<int>()});
    }
    return {std::move(m), std::move(bank), std::move(config)};
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

LoadedErm load_erm_checkpoint(const std::filesystem::path& path) {
  const json j = read_checkpoint(path, "erm");
  try {
    TrainConfig config = config_from_checkpoint(j, path);
    const json& d = j.at("dims");
    ErmModel m(d.at("feature_dim").get<int>(), d.at("num_classes").get<int>(),
               d.at("hidden_width").get<int>(),
               nn::parse_activation(d.at("activation").get<std::string>()), 0);
    m.restore(params_from_json(j.at("tensors"), m.parameters()));
    return {std::move(m), std::move(config)};
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_step_log(const std::filesystem::path& path, const std::vector<StepRecord>& steps) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  std::vector<std::string> head{"step", "epoch"};
  for (const auto& n : objectives::LossBreakdown::field_names()) head.push_back(n);
  head.push_back("grad_norm");
  write_csv_row(os, head);
  for (const auto& s : steps) {
    std::vector<std::string> row{std::to_string(s.step), std::to_string(s.epoch)};
    for (double v : s.loss.values()) row.push_back(format_double(v));
    row.push_back(format_double(s.grad_norm));
    write_csv_row(os, row);
  }
}

void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochRecord>& epochs) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  std::vector<std::string> head{"epoch"};
  for (const auto& n : objectives::LossBreakdown::field_names()) head.push_back(n);
  for (const char* n : {"intermediate_avg", "mutual_info", "best", "bank_size"}) head.push_back(n);
  write_csv_row(os, head);
  for (const auto& e : epochs) {
    std::vector<std::string> row{std::to_string(e.epoch)};
    for (double v : e.mean_loss.values()) row.push_back(format_double(v));
    row.push_back(format_double(e.intermediate_avg));
    row.push_back(std::isfinite(e.mutual_info) ? format_double(e.mutual_info) : "");
    row.push_back(e.best ? "1" : "0");
    row.push_back(std::to_string(e.bank_size));
    write_csv_row(os, row);
  }
}

std::string source_hash() { return SYNC_EDG_SOURCE_HASH; }

}  // namespace sync_edg::train
