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


// sync-edg: generate drifting-domain data, train SYNC or the ERM baseline,
// evaluate on held-out domains, plot grids and MI curves, and compare runs.

#include "sync_edg/domain_stream.hpp"
#include "sync_edg/errors.hpp"
#include "sync_edg/evaluation.hpp"
#include "sync_edg/predictor.hpp"
#include "sync_edg/run_config.hpp"
#include "sync_edg/text.hpp"
#include "sync_edg/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sync_edg;

namespace {

constexpr char kDataFile[] = "data.txt";

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write '" + path.string() + "'");
  os << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open '" + path.string() + "'");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

data::DomainSequence generate(const std::string& dataset, const std::string& variant,
                              int domains, int per_domain, std::uint64_t seed) {
  data::DomainSequence seq;
  if (dataset == "circle") {
    seq = data::generate_circle(domains, per_domain, seed);
  } else if (dataset == "sine") {
    seq = data::generate_sine(domains, per_domain, seed);
  } else {
    throw ValidationError("dataset must be 'circle' or 'sine' to generate (got '" + dataset + "')");
  }
  if (variant != "none") seq = data::apply_drift_variant(seq, data::parse_drift_kind(variant), seed);
  return seq;
}

// ---- gen-data --------------------------------------------------------------

struct GenArgs {
  std::string dataset = "circle";
  std::string variant = "none";
  int domains = 0;
  int per_domain = 100;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_gen_data(const GenArgs& a) {
  const int n = a.domains > 0 ? a.domains : (a.dataset == "sine" ? 24 : 30);
  const auto seq = generate(a.dataset, a.variant, n, a.per_domain, a.seed);
  const std::string stem = a.variant == "none" ? a.dataset : a.dataset + "-" + a.variant;
  const fs::path out = cli::resolve_out_dir(a.out, stem + ".txt");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  data::save_sequence(seq, out);
  std::cout << "wrote " << out.string() << " (" << seq.size() << " domains, "
            << seq.domains.front().size() << " samples each)\n";
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  json flags = json::object();
};

void cmd_train(const TrainArgs& a) {
  const json file = a.config.empty() ? json() : cli::load_config_file(a.config);
  json flags = a.flags;
  // A dataset file names its own dataset unless the user overrides it.
  std::optional<data::DomainSequence> loaded;
  const std::string data_path = flags.contains("data")  ? flags["data"].get<std::string>()
                                : file.is_object() && file.contains("data") && file["data"].is_string()
                                    ? file["data"].get<std::string>()
                                    : std::string();
  if (!data_path.empty()) {
    loaded = data::load_sequence(data_path);
    if (!flags.contains("dataset") && !(file.is_object() && file.contains("dataset"))) {
      flags["dataset"] = loaded->name;
    }
  }
  cli::RunConfig rc = cli::resolve_run_config(file, flags);

  data::DomainSequence seq;
  if (loaded) {
    seq = std::move(*loaded);
  } else {
    const std::string base = rc.train.dataset.rfind("sine", 0) == 0 ? "sine" : "circle";
    seq = generate(base, rc.variant, rc.resolved_domains(), rc.per_domain, rc.data_seed);
  }
  const auto split = data::split_domains(seq);

  const fs::path dir = cli::resolve_out_dir(rc.out_dir, "runs/" + rc.method + "-" + rc.train.dataset +
                                                            "-s" + std::to_string(rc.train.seed));
  fs::create_directories(dir);
  data::save_sequence(seq, dir / kDataFile);

  train::TrainOptions opts;
  opts.checkpoint_path = dir / "checkpoint.json";
  opts.verbose = spdlog::get_level() <= spdlog::level::info;
  train::RunManifest manifest;
  std::vector<train::StepRecord> steps;
  if (rc.method == "sync") {
    auto run = train::train(rc.train, split.source, split.intermediate, opts);
    manifest = std::move(run.manifest);
    steps = std::move(run.steps);
  } else {
    auto run = train::train_erm_baseline(rc.train, split.source, split.intermediate, opts);
    manifest = std::move(run.manifest);
    steps = std::move(run.steps);
  }
  json m = manifest.to_json();
  m["run"] = rc.to_json();
  m["data_file"] = kDataFile;
  write_json(dir / "manifest.json", m);
  train::write_step_log(dir / "loss_log.csv", steps);
  train::write_epoch_log(dir / "epoch_log.csv", manifest.epochs);
  std::cout << "trained " << rc.method << " on " << rc.train.dataset << ": best epoch "
            << manifest.best_epoch << ", intermediate avg "
            << format_double(manifest.best_intermediate_avg) << "; outputs in " << dir.string()
            << "\n";
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "target";
  std::uint64_t seed = 0;
  std::string out;
  std::vector<int> grid_domains;
  int grid_resolution = 100;
};

json records_json(const std::vector<predict::PredictionRecord>& records) {
  json arr = json::array();
  for (const auto& r : records) {
    arr.push_back({{"t", r.t}, {"accuracy", r.accuracy}, {"predicted", r.predicted},
                   {"labels", r.labels}});
  }
  return arr;
}

void cmd_eval(const EvalArgs& a) {
  const fs::path ckpt = a.checkpoint;
  const fs::path data_path = a.data.empty() ? ckpt.parent_path() / kDataFile : fs::path(a.data);
  const auto seq = data::load_sequence(data_path);
  const auto split = data::split_domains(seq);
  if (a.split != "target" && a.split != "intermediate") {
    throw ValidationError("--split must be 'target' or 'intermediate'");
  }
  const auto& chosen = a.split == "target" ? split.target : split.intermediate;

  const std::string kind = train::checkpoint_kind(ckpt);
  std::vector<predict::PredictionRecord> records;
  std::optional<train::LoadedSync> sync;
  std::string dataset;
  if (kind == "sync") {
    sync.emplace(train::load_sync_checkpoint(ckpt));
    dataset = sync->config.dataset;
    if (a.split == "target") {
      records = predict::predict_targets(sync->model, sync->bank, split.intermediate, split.target,
                                         a.seed);
    } else {
      HiddenStateBank bank = sync->bank;
      records = predict::predict_sequence(sync->model, bank, split.intermediate, a.seed);
    }
  } else {
    const auto erm = train::load_erm_checkpoint(ckpt);
    dataset = erm.config.dataset;
    records = predict::predict_erm(erm.model, chosen);
  }

  const auto report = eval::compute_metrics(records, dataset, kind, a.seed);
  const fs::path dir = cli::resolve_out_dir(a.out, (ckpt.parent_path() / "eval").string());
  fs::create_directories(dir);
  json out = report.to_json();
  out["split"] = a.split;
  out["checkpoint"] = ckpt.string();
  out["records"] = records_json(records);
  write_json(dir / ("predictions_" + a.split + ".json"), out);

  std::ostringstream csv;
  csv << "method,dataset,seed,split,domain,accuracy\n";
  for (std::size_t i = 0; i < report.domains.size(); ++i) {
    csv << kind << ',' << dataset << ',' << a.seed << ',' << a.split << ',' << report.domains[i]
        << ',' << format_double(report.accuracies[i]) << '\n';
  }
  write_text(dir / ("domains_" + a.split + ".csv"), csv.str());
  write_text(dir / ("summary_" + a.split + ".csv"),
             "method,dataset,seed,split,wst,avg\n" + kind + "," + dataset + "," +
                 std::to_string(a.seed) + "," + a.split + "," + format_double(report.wst) + "," +
                 format_double(report.avg) + "\n");

  for (int t : a.grid_domains) {
    if (!sync) throw ValidationError("decision grids need a SYNC checkpoint");
    const auto grid = eval::decision_boundary_grid(sync->model, sync->bank, eval::Bounds{},
                                                   a.grid_resolution, t, a.seed);
    eval::write_grid(dir / ("grid_t" + std::to_string(t) + ".txt"), grid);
  }
  std::cout << kind << " " << dataset << " " << a.split << ": wst " << format_double(report.wst)
            << " avg " << format_double(report.avg) << "; outputs in " << dir.string() << "\n";
}

// ---- plot ------------------------------------------------------------------

const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};

std::string grid_svg(const eval::Grid& g) {
  const int px = std::max(1, 400 / g.resolution);
  const int size = px * g.resolution;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
     << "\" shape-rendering=\"crispEdges\">\n";
  for (int r = 0; r < g.resolution; ++r) {
    // Row 0 is y_min; SVG y grows downwards.
    const int y = (g.resolution - 1 - r) * px;
    for (int c = 0; c < g.resolution; ++c) {
      const int label = g.labels(r, c);
      os << "<rect x=\"" << c * px << "\" y=\"" << y << "\" width=\"" << px << "\" height=\"" << px
         << "\" fill=\"" << kPalette[static_cast<std::size_t>(label) % 6] << "\"/>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::string curve_svg(const std::vector<eval::CurvePoint>& pts, const std::string& title) {
  const double w = 480, h = 320, m = 40;
  double lo = 0, hi = 1e-12;
  for (const auto& p : pts) {
    lo = std::min(lo, p.mutual_info);
    hi = std::max(hi, p.mutual_info);
  }
  const double span_x = std::max<std::size_t>(1, pts.size() - 1);
  auto sx = [&](std::size_t i) { return m + (w - 2 * m) * static_cast<double>(i) / span_x; };
  auto sy = [&](double v) { return h - m - (h - 2 * m) * (v - lo) / (hi - lo); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << m << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n"
     << "<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m << "\" y2=\"" << h - m
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << h - m
     << "\" stroke=\"black\"/>\n"
     << "<text x=\"4\" y=\"" << m << "\" font-size=\"10\">" << format_double(hi) << "</text>\n"
     << "<text x=\"4\" y=\"" << h - m << "\" font-size=\"10\">" << format_double(lo) << "</text>\n"
     << "<polyline fill=\"none\" stroke=\"#4c72b0\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) os << sx(i) << "," << sy(pts[i].mutual_info) << " ";
  os << "\"/>\n";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    os << "<circle cx=\"" << sx(i) << "\" cy=\"" << sy(pts[i].mutual_info) << "\" r=\"3\" fill=\""
       << (pts[i].non_increasing ? "#55a868" : "#c44e52") << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void cmd_plot(const std::vector<std::string>& inputs, const std::string& out) {
  for (const auto& in : inputs) {
    const fs::path path = in;
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open '" + in + "'");
    std::string first;
    std::getline(is, first);
    is.close();
    std::string svg;
    if (first.rfind("#", 0) == 0) {
      svg = grid_svg(eval::read_grid(path));
    } else if (first.find("mutual_info") != std::string::npos) {
      svg = curve_svg(eval::disentanglement_curve(path), "static/dynamic MI per epoch");
    } else {
      throw ValidationError("'" + in + "' is neither a grid file nor an epoch log");
    }
    const fs::path dir = out.empty() ? path.parent_path() : cli::resolve_out_dir(out, ".");
    const fs::path dest = dir / (path.stem().string() + ".svg");
    write_text(dest, svg);
    std::cout << "wrote " << dest.string() << "\n";
  }
}

// ---- compare ---------------------------------------------------------------

struct Row {
  std::vector<double> wst, avg;
};

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void cmd_compare(const std::vector<std::string>& sync_files,
                 const std::vector<std::string>& erm_files, const std::string& out) {
  if (sync_files.empty() || erm_files.empty()) {
    throw ValidationError("compare needs at least one --sync and one --erm prediction file");
  }
  std::map<std::string, Row> rows;
  std::string dataset;
  auto add = [&](const std::string& method, const std::vector<std::string>& files) {
    for (const auto& f : files) {
      const json j = read_json(f);
      if (!j.contains("wst") || !j.contains("avg")) {
        throw ParseError("'" + f + "' has no wst/avg fields");
      }
      const std::string ds = j.value("dataset", "");
      if (!dataset.empty() && ds != dataset) {
        throw ValidationError("mixed datasets: '" + dataset + "' and '" + ds + "'");
      }
      dataset = ds;
      rows[method].wst.push_back(j["wst"].get<double>());
      rows[method].avg.push_back(j["avg"].get<double>());
    }
  };
  add("SYNC", sync_files);
  add("ERM", erm_files);

  std::ostringstream table, csv;
  table << "dataset: " << dataset << "\n";
  char line[128];
  std::snprintf(line, sizeof line, "%-8s %8s %8s %6s\n", "method", "Wst", "Avg", "runs");
  table << line;
  csv << "method,dataset,wst,avg,runs\n";
  for (const std::string method : {"SYNC", "ERM"}) {
    const Row& r = rows[method];
    std::snprintf(line, sizeof line, "%-8s %8.1f %8.1f %6zu\n", method.c_str(),
                  100 * mean(r.wst), 100 * mean(r.avg), r.avg.size());
    table << line;
    csv << method << ',' << dataset << ',' << format_double(mean(r.wst)) << ','
        << format_double(mean(r.avg)) << ',' << r.avg.size() << '\n';
  }
  std::cout << table.str();
  if (!out.empty()) write_text(cli::resolve_out_dir(out, "compare.csv"), csv.str());
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sync-edg: static-dynamic causal representation learning for evolving domains"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "warnings only");

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "generate a synthetic domain sequence");
  g->add_option("--dataset", gen.dataset, "circle | sine")->check(CLI::IsMember({"circle", "sine"}));
  g->add_option("--variant", gen.variant, "none | gradual | abrupt | noise")
      ->check(CLI::IsMember({"none", "gradual", "abrupt", "noise"}));
  g->add_option("--domains", gen.domains, "number of domains (default 30 circle, 24 sine)");
  g->add_option("--per-domain", gen.per_domain, "samples per domain");
  g->add_option("--seed", gen.seed);
  g->add_option("--out", gen.out, "output file");

  TrainArgs tr;
  std::string t_data, t_out, t_method, t_dataset, t_variant;
  std::uint64_t t_seed = 0;
  int t_epochs = 0;
  double t_lr = 0;
  auto* t = app.add_subcommand("train", "train SYNC or the ERM baseline");
  t->add_option("--config", tr.config, "JSON run config");
  auto* o_data = t->add_option("--data", t_data, "dataset file (generated when absent)");
  auto* o_out = t->add_option("--out-dir", t_out, "run directory");
  auto* o_seed = t->add_option("--seed", t_seed);
  auto* o_method = t->add_option("--method", t_method, "sync | erm");
  auto* o_dataset = t->add_option("--dataset", t_dataset, "dataset defaults to apply");
  auto* o_variant = t->add_option("--variant", t_variant, "drift variant when generating");
  auto* o_epochs = t->add_option("--epochs", t_epochs);
  auto* o_lr = t->add_option("--learning-rate", t_lr);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on held-out domains");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--data", ev.data, "dataset file (default: the run's data.txt)");
  e->add_option("--split", ev.split, "target | intermediate");
  e->add_option("--seed", ev.seed, "bank sampling seed");
  e->add_option("--out", ev.out, "output directory");
  e->add_option("--grid-domain", ev.grid_domains, "write a decision grid for domain t");
  e->add_option("--grid-resolution", ev.grid_resolution)->check(CLI::Range(2, 2000));

  std::vector<std::string> plot_inputs;
  std::string plot_out;
  auto* p = app.add_subcommand("plot", "render grid files and epoch logs to SVG");
  p->add_option("inputs", plot_inputs, "grid files or epoch_log.csv")->required();
  p->add_option("--out", plot_out, "output directory (default: next to each input)");

  std::vector<std::string> cmp_sync, cmp_erm;
  std::string cmp_out;
  auto* c = app.add_subcommand("compare", "SYNC vs ERM table of Wst and Avg");
  c->add_option("--sync", cmp_sync, "SYNC prediction JSON files")->required();
  c->add_option("--erm", cmp_erm, "ERM prediction JSON files")->required();
  c->add_option("--out", cmp_out, "CSV output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }
  spdlog::set_level(verbose ? spdlog::level::debug
                            : quiet ? spdlog::level::warn
                                    : spdlog::level::info);

  try {
    if (g->parsed()) cmd_gen_data(gen);
    if (t->parsed()) {
      if (*o_data) tr.flags["data"] = t_data;
      if (*o_out) tr.flags["out_dir"] = t_out;
      if (*o_seed) tr.flags["seed"] = t_seed;
      if (*o_method) tr.flags["method"] = t_method;
      if (*o_dataset) tr.flags["dataset"] = t_dataset;
      if (*o_variant) tr.flags["variant"] = t_variant;
      if (*o_epochs) tr.flags["epochs"] = t_epochs;
      if (*o_lr) tr.flags["learning_rate"] = t_lr;
      cmd_train(tr);
    }
    if (e->parsed()) cmd_eval(ev);
    if (p->parsed()) cmd_plot(plot_inputs, plot_out);
    if (c->parsed()) cmd_compare(cmp_sync, cmp_erm, cmp_out);
  } catch (const std::exception& ex) {
    std::cerr << "sync-edg: error: " << one_line(ex.what()) << "\n";
    return 1;
  }
  return 0;
}
