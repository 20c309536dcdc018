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


#include "sync_edg/run_config.hpp"

#include "sync_edg/domain_stream.hpp"
#include "sync_edg/errors.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace sync_edg::cli {

namespace {

using nlohmann::json;

const std::set<std::string> kRunKeys{"method", "data",      "variant", "domains",
                                     "per_domain", "data_seed", "out_dir"};

// "invalid training config: a; b;" -> "a; b"
std::string strip_prefix(std::string msg) {
  const auto colon = msg.find(": ");
  if (colon != std::string::npos && msg.rfind("invalid", 0) == 0) msg.erase(0, colon + 2);
  while (!msg.empty() && (msg.back() == ';' || msg.back() == ' ')) msg.pop_back();
  return msg;
}

}  // namespace

int RunConfig::resolved_domains() const {
  if (domains > 0) return domains;
  return train.dataset.rfind("sine", 0) == 0 ? 24 : 30;
}

json RunConfig::to_json() const {
  json j = train.to_json();
  j["method"] = method;
  j["data"] = data;
  j["variant"] = variant;
  j["domains"] = resolved_domains();
  j["per_domain"] = per_domain;
  j["data_seed"] = data_seed;
  j["out_dir"] = out_dir;
  return j;
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open config file '" + path.string() + "'");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError("config file '" + path.string() + "': " + e.what());
  }
}

RunConfig resolve_run_config(const json& file, const json& flags) {
  if (!file.is_null() && !file.is_object()) throw ValidationError("config must be a JSON object");
  if (!flags.is_null() && !flags.is_object()) throw ValidationError("flags must be a JSON object");
  json merged = file.is_null() ? json::object() : file;
  if (!flags.is_null()) {
    for (const auto& [k, v] : flags.items()) merged[k] = v;
  }

  std::vector<std::string> bad;
  std::string dataset = "circle";
  if (merged.contains("dataset")) {
    if (merged["dataset"].is_string()) {
      dataset = merged["dataset"].get<std::string>();
    } else {
      bad.push_back("key 'dataset': expected a string");
    }
  }

  RunConfig rc;
  json train_keys = json::object();
  for (const auto& [k, v] : merged.items()) {
    if (kRunKeys.count(k) == 0) {
      train_keys[k] = v;
      continue;
    }
    try {
      if (k == "method") rc.method = v.get<std::string>();
      if (k == "data") rc.data = v.get<std::string>();
      if (k == "variant") rc.variant = v.get<std::string>();
      if (k == "domains") rc.domains = v.get<int>();
      if (k == "per_domain") rc.per_domain = v.get<int>();
      if (k == "data_seed") rc.data_seed = v.get<std::uint64_t>();
      if (k == "out_dir") rc.out_dir = v.get<std::string>();
    } catch (const json::exception& e) {
      bad.push_back("key '" + k + "': " + e.what());
    }
  }
  // Key by key, so a type error does not hide range errors elsewhere.
  rc.train = train::TrainConfig::defaults_for(dataset);
  for (const auto& [k, v] : train_keys.items()) {
    try {
      rc.train = train::TrainConfig::from_json(json{{k, v}}, rc.train);
    } catch (const ValidationError& e) {
      bad.push_back(strip_prefix(e.what()));
    }
  }
  try {
    rc.train.validate();
  } catch (const ValidationError& e) {
    bad.push_back(strip_prefix(e.what()));
  }
  if (rc.method != "sync" && rc.method != "erm") bad.push_back("method must be 'sync' or 'erm'");
  if (rc.variant != "none") {
    try {
      data::parse_drift_kind(rc.variant);
    } catch (const ValidationError& e) {
      bad.push_back(e.what());
    }
  }
  if (rc.domains < 0 || rc.domains == 1) bad.push_back("domains must be 0 (default) or >= 2");
  if (rc.per_domain < 2) bad.push_back("per_domain must be >= 2");
  if (!bad.empty()) {
    std::string msg = "invalid run config:";
    for (std::size_t i = 0; i < bad.size(); ++i) msg += (i == 0 ? " " : "; ") + bad[i];
    throw ValidationError(msg);
  }
  return rc;
}

std::filesystem::path resolve_out_dir(const std::string& requested, const std::string& fallback) {
  std::filesystem::path p = requested.empty() ? std::filesystem::path(fallback) : std::filesystem::path(requested);
  if (p.is_absolute()) return p;
  const char* root = std::getenv(kOutRootEnv);
  return (root != nullptr && *root != '\0') ? std::filesystem::path(root) / p : p;
}

}  // namespace sync_edg::cli
