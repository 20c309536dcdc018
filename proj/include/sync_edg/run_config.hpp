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

// Run configuration files for the command-line tool: a JSON object whose
// keys mirror TrainConfig plus dataset generation and output settings.
// Resolution order is command-line flag, then file, then the per-dataset
// defaults.

#include "sync_edg/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace sync_edg::cli {

// Environment variable naming the root under which relative (or absent)
// output directories are created.
inline constexpr char kOutRootEnv[] = "SYNC_EDG_OUT_ROOT";

struct RunConfig {
  train::TrainConfig train;
  std::string method = "sync";   // sync | erm
  std::string data;              // dataset file; empty means generate
  std::string variant = "none";  // none | gradual | abrupt | noise
  int domains = 0;               // 0 means the dataset default (30 / 24)
  int per_domain = 100;
  std::uint64_t data_seed = 0;
  std::string out_dir;

  int resolved_domains() const;
  // Every key with its resolved value; stored verbatim in manifests.
  nlohmann::json to_json() const;
};

// Parses a config file. Throws ParseError on malformed JSON.
nlohmann::json load_config_file(const std::filesystem::path& path);

// Merges `file` and `flags` (same key names; flags win) over the defaults
// of the chosen dataset. Every unknown key, type error and out-of-range
// value is reported in a single ValidationError.
RunConfig resolve_run_config(const nlohmann::json& file, const nlohmann::json& flags);

// `requested` if absolute; otherwise placed under $SYNC_EDG_OUT_ROOT (or the
// working directory when unset). An empty request becomes `fallback`.
std::filesystem::path resolve_out_dir(const std::string& requested, const std::string& fallback);

}  // namespace sync_edg::cli
