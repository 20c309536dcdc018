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
#include "sync_edg/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace sync_edg::data {

namespace {

constexpr int kMaxRedraws = 1000;
constexpr char kMagic[] = "sync-edg-sequence";
constexpr int kFormatVersion = 1;

std::mt19937_64 domain_rng(std::uint64_t seed, int t, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

void check_generator_args(int n_domains, int samples_per_domain) {
  if (n_domains < 2) {
    throw ValidationError("n_domains must be >= 2 (got " + std::to_string(n_domains) + ")");
  }
  if (samples_per_domain < 2) {
    throw ValidationError("samples_per_domain must be >= 2 (got " +
                          std::to_string(samples_per_domain) + ")");
  }
}

bool balanced(const std::vector<Sample>& samples, int num_classes) {
  const auto n = static_cast<double>(samples.size());
  const auto need = static_cast<std::size_t>(std::max(1.0, std::ceil(kMinClassShare * n)));
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (const auto& s : samples) ++counts[static_cast<std::size_t>(s.label)];
  return std::ranges::all_of(counts, [need](std::size_t c) { return c >= need; });
}

// Draws a domain with `draw` until both classes hold their minimum share.
template <typename DrawFn>
Domain draw_balanced_domain(int t, int n, std::uint64_t seed, DrawFn draw) {
  auto rng = domain_rng(seed, t, 0);
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    Domain d{t, {}};
    d.samples.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) d.samples.push_back(draw(rng));
    if (balanced(d.samples, 2)) return d;
  }
  throw ValidationError("could not draw a label-balanced domain " + std::to_string(t));
}

double parse_double(std::string_view tok, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ParseError(where + ": bad number '" + std::string(tok) + "'");
  }
  return v;
}

long long parse_int(std::string_view tok, const std::string& where) {
  long long v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ParseError(where + ": bad integer '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

}  // namespace

Eigen::MatrixXd Domain::features() const {
  if (samples.empty()) return {};
  const auto d = static_cast<Eigen::Index>(samples.front().features.size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(samples.size()), d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      m(static_cast<Eigen::Index>(i), j) = samples[i].features[static_cast<std::size_t>(j)];
    }
  }
  return m;
}

std::vector<int> Domain::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

std::size_t DomainSequence::min_domain_size() const {
  std::size_t m = std::numeric_limits<std::size_t>::max();
  for (const auto& d : domains) m = std::min(m, d.size());
  return domains.empty() ? 0 : m;
}

void DomainSequence::validate(bool require_start_at_one) const {
  if (feature_dim <= 0) throw ValidationError("feature_dim must be positive");
  if (num_classes <= 0) throw ValidationError("num_classes must be positive");
  if (domains.empty()) throw ValidationError("sequence has no domains");
  if (require_start_at_one && domains.front().t != 1) {
    throw ValidationError("domain timestamps must start at 1 (got " +
                          std::to_string(domains.front().t) + ")");
  }
  for (std::size_t k = 0; k < domains.size(); ++k) {
    const Domain& d = domains[k];
    if (k > 0 && d.t != domains[k - 1].t + 1) {
      throw ValidationError("domain timestamps are not consecutive: " +
                            std::to_string(domains[k - 1].t) + " then " + std::to_string(d.t));
    }
    if (d.samples.empty()) throw ValidationError("domain " + std::to_string(d.t) + " is empty");
    for (const auto& s : d.samples) {
      if (s.domain_index != d.t) {
        throw ValidationError("sample in domain " + std::to_string(d.t) +
                              " carries domain_index " + std::to_string(s.domain_index));
      }
      if (static_cast<int>(s.features.size()) != feature_dim) {
        throw ValidationError("sample in domain " + std::to_string(d.t) + " has " +
                              std::to_string(s.features.size()) + " features, expected " +
                              std::to_string(feature_dim));
      }
      if (s.label < 0 || s.label >= num_classes) {
        throw ValidationError("label " + std::to_string(s.label) + " out of range in domain " +
                              std::to_string(d.t));
      }
    }
  }
}

DomainSequence DomainSequence::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > domains.size()) throw ValidationError("slice out of range");
  DomainSequence out{name, feature_dim, num_classes, {}};
  out.domains.assign(domains.begin() + static_cast<std::ptrdiff_t>(begin),
                     domains.begin() + static_cast<std::ptrdiff_t>(begin + count));
  return out;
}

std::int64_t Rational::round_times(std::int64_t n) const {
  // floor(num*n/den + 1/2) in exact integer arithmetic
  return (2 * num * n + den) / (2 * den);
}

DriftKind parse_drift_kind(const std::string& name) {
  if (name == "gradual") return DriftKind::kGradual;
  if (name == "abrupt") return DriftKind::kAbrupt;
  if (name == "noise") return DriftKind::kNoise;
  throw ValidationError("unknown drift variant '" + name + "' (expected gradual, abrupt or noise)");
}

std::string to_string(DriftKind kind) {
  switch (kind) {
    case DriftKind::kGradual: return "gradual";
    case DriftKind::kAbrupt: return "abrupt";
    case DriftKind::kNoise: return "noise";
  }
  return "unknown";
}

double circle_angle(int t, int n_domains) {
  return std::numbers::pi * static_cast<double>(t - 1) / static_cast<double>(n_domains - 1);
}

int circle_label(double x, double y, double center_x, double center_y, double boundary_angle) {
  const double dx = std::cos(boundary_angle);
  const double dy = std::sin(boundary_angle);
  const double side = dx * (y - center_y) - dy * (x - center_x);
  return side >= 0.0 ? 1 : 0;
}

int sine_label(double x, double y, int t, int n_domains, const SineParams& p) {
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(t - 1) / n_domains;
  const double curve =
      p.amplitude * std::sin(2.0 * std::numbers::pi * (x - p.x_min) / (p.x_max - p.x_min) + phase);
  return y >= curve ? 1 : 0;
}

DomainSequence generate_circle(int n_domains, int samples_per_domain, std::uint64_t seed,
                               const CircleParams& params) {
  check_generator_args(n_domains, samples_per_domain);
  DomainSequence seq{"circle", 2, 2, {}};
  for (int t = 1; t <= n_domains; ++t) {
    const double theta = circle_angle(t, n_domains);
    const double cx = params.radius * std::cos(theta);
    const double cy = params.radius * std::sin(theta);
    std::normal_distribution<double> noise(0.0, params.noise_std);
    seq.domains.push_back(draw_balanced_domain(t, samples_per_domain, seed, [&](auto& rng) {
      const double x = cx + noise(rng);
      const double y = cy + noise(rng);
      return Sample{{x, y}, circle_label(x, y, cx, cy, theta), t};
    }));
  }
  return seq;
}

DomainSequence generate_sine(int n_domains, int samples_per_domain, std::uint64_t seed,
                             const SineParams& params) {
  check_generator_args(n_domains, samples_per_domain);
  DomainSequence seq{"sine", 2, 2, {}};
  std::uniform_real_distribution<double> ux(params.x_min, params.x_max);
  std::uniform_real_distribution<double> uy(params.y_min, params.y_max);
  for (int t = 1; t <= n_domains; ++t) {
    seq.domains.push_back(draw_balanced_domain(t, samples_per_domain, seed, [&](auto& rng) {
      const double x = ux(rng);
      const double y = uy(rng);
      return Sample{{x, y}, sine_label(x, y, t, n_domains, params), t};
    }));
  }
  return seq;
}

std::vector<double> drift_boundary_angles(int n_domains, DriftKind kind, std::uint64_t seed,
                                          const DriftParams& params) {
  if (n_domains < 2) throw ValidationError("n_domains must be >= 2");
  std::vector<double> angles;
  angles.reserve(static_cast<std::size_t>(n_domains));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int midpoint = n_domains / 2 + 1;
  for (int t = 1; t <= n_domains; ++t) {
    const double theta = circle_angle(t, n_domains);
    switch (kind) {
      case DriftKind::kGradual: {
        // Half the base rate at the start, accelerating to 1.5x at the end.
        const double s = static_cast<double>(t - 1) / (n_domains - 1);
        angles.push_back(std::numbers::pi * (0.5 * s + 0.5 * s * s));
        break;
      }
      case DriftKind::kAbrupt:
        angles.push_back(t < midpoint ? theta : theta + std::numbers::pi / 2.0);
        break;
      case DriftKind::kNoise:
        angles.push_back(theta + params.noise_std * noise(rng));
        break;
    }
  }
  return angles;
}

DomainSequence apply_drift_variant(const DomainSequence& seq, DriftKind kind, std::uint64_t seed,
                                   const DriftParams& params, const CircleParams& circle) {
  if (seq.name.rfind("circle", 0) != 0 || seq.feature_dim != 2 || seq.num_classes != 2) {
    throw ValidationError("drift variants apply to Circle sequences only (got '" + seq.name + "')");
  }
  seq.validate(true);
  const int n = static_cast<int>(seq.size());
  const auto angles = drift_boundary_angles(n, kind, seed, params);
  DomainSequence out = seq;
  out.name = "circle-" + to_string(kind);
  for (auto& d : out.domains) {
    const double theta = circle_angle(d.t, n);
    const double cx = circle.radius * std::cos(theta);
    const double cy = circle.radius * std::sin(theta);
    const double beta = angles[static_cast<std::size_t>(d.t - 1)];
    for (auto& s : d.samples) s.label = circle_label(s.features[0], s.features[1], cx, cy, beta);
  }
  return out;
}

SplitResult split_domains(const DomainSequence& seq, const SplitSpec& spec) {
  const Rational parts[] = {spec.source, spec.intermediate, spec.target};
  for (const auto& r : parts) {
    if (r.den <= 0 || r.num < 0) throw ValidationError("split fractions must be non-negative");
  }
  // a/b + c/d + e/f == 1
  const std::int64_t lhs = spec.source.num * spec.intermediate.den * spec.target.den +
                           spec.intermediate.num * spec.source.den * spec.target.den +
                           spec.target.num * spec.source.den * spec.intermediate.den;
  if (lhs != spec.source.den * spec.intermediate.den * spec.target.den) {
    throw ValidationError("split fractions must sum to 1");
  }
  const auto total = static_cast<std::int64_t>(seq.size());
  const std::int64_t n_src = spec.source.round_times(total);
  const std::int64_t n_mid = spec.intermediate.round_times(total);
  const std::int64_t n_tgt = total - n_src - n_mid;
  if (n_src <= 0 || n_mid <= 0 || n_tgt <= 0) {
    throw ValidationError("split of " + std::to_string(total) + " domains leaves an empty block (" +
                          std::to_string(n_src) + "/" + std::to_string(n_mid) + "/" +
                          std::to_string(n_tgt) + ")");
  }
  const auto s = static_cast<std::size_t>(n_src);
  const auto m = static_cast<std::size_t>(n_mid);
  return {seq.slice(0, s), seq.slice(s, m), seq.slice(s + m, static_cast<std::size_t>(n_tgt))};
}

SequenceBatches::SequenceBatches(const DomainSequence& source, int batch_size, std::uint64_t seed,
                                 bool with_replacement)
    : source_(&source),
      batch_size_(batch_size),
      seed_(seed),
      with_replacement_(with_replacement),
      batches_per_epoch_(0) {
  if (batch_size <= 0) throw ValidationError("batch_size must be positive");
  if (source.empty()) throw ValidationError("cannot batch an empty sequence");
  const std::size_t min_size = source.min_domain_size();
  if (!with_replacement && min_size < static_cast<std::size_t>(batch_size)) {
    throw ValidationError("domain with " + std::to_string(min_size) +
                          " samples is smaller than batch_size " + std::to_string(batch_size) +
                          " (enable sampling with replacement)");
  }
  batches_per_epoch_ = static_cast<int>((min_size + static_cast<std::size_t>(batch_size) - 1) /
                                        static_cast<std::size_t>(batch_size));
  start_epoch(0);
}

void SequenceBatches::start_epoch(int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  rng_.seed(seq);
  cursor_ = 0;
  perms_.clear();
  if (with_replacement_) return;
  for (const auto& d : source_->domains) {
    std::vector<std::size_t> p(d.size());
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::shuffle(p.begin(), p.end(), rng_);
    perms_.push_back(std::move(p));
  }
}

bool SequenceBatches::next(AlignedBatch& out) {
  if (cursor_ >= batches_per_epoch_) return false;
  const auto T = source_->size();
  const auto B = static_cast<std::size_t>(batch_size_);
  out.x.assign(T, Eigen::MatrixXd());
  out.y.assign(T, {});
  out.indices.assign(T, {});
  for (std::size_t t = 0; t < T; ++t) {
    const Domain& d = source_->domains[t];
    std::vector<std::size_t>& idx = out.indices[t];
    idx.resize(B);
    if (with_replacement_) {
      std::uniform_int_distribution<std::size_t> pick(0, d.size() - 1);
      for (auto& i : idx) i = pick(rng_);
    } else {
      const auto& p = perms_[t];
      const std::size_t start = static_cast<std::size_t>(cursor_) * B;
      for (std::size_t r = 0; r < B; ++r) idx[r] = p[(start + r) % p.size()];
    }
    const auto dim = static_cast<Eigen::Index>(source_->feature_dim);
    Eigen::MatrixXd& x = out.x[t];
    x.resize(static_cast<Eigen::Index>(B), dim);
    out.y[t].resize(B);
    for (std::size_t r = 0; r < B; ++r) {
      const Sample& s = d.samples[idx[r]];
      for (Eigen::Index j = 0; j < dim; ++j) {
        x(static_cast<Eigen::Index>(r), j) = s.features[static_cast<std::size_t>(j)];
      }
      out.y[t][r] = s.label;
    }
  }
  ++cursor_;
  return true;
}

void save_sequence(const DomainSequence& seq, const std::filesystem::path& path) {
  seq.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << kMagic << ' ' << kFormatVersion << '\n';
  os << "name " << seq.name << '\n';
  os << "feature_dim " << seq.feature_dim << '\n';
  os << "num_classes " << seq.num_classes << '\n';
  os << "num_domains " << seq.size() << '\n';
  os << "first_domain " << seq.first_index() << '\n';
  os << "columns t label";
  for (int j = 0; j < seq.feature_dim; ++j) os << " x" << j;
  os << '\n';
  for (const auto& d : seq.domains) {
    for (const auto& s : d.samples) {
      os << s.domain_index << ' ' << s.label;
      for (double v : s.features) os << ' ' << format_double(v);
      os << '\n';
    }
  }
  if (!os) throw std::runtime_error("write to '" + path.string() + "' failed");
}

DomainSequence load_sequence(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open '" + path.string() + "'");

  std::string line;
  int line_no = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(is, line)) {
      throw ParseError(path.string() + ": unexpected end of file while reading " + what);
    }
    ++line_no;
    return split_ws(line);
  };
  auto where = [&] { return path.string() + ":" + std::to_string(line_no); };
  auto header_value = [&](const char* key) {
    auto tok = next_line(key);
    if (tok.size() != 2 || tok[0] != key) {
      throw ParseError(where() + ": expected '" + std::string(key) + " <value>'");
    }
    return std::string(tok[1]);
  };

  auto magic = next_line("header");
  if (magic.size() != 2 || magic[0] != kMagic) {
    throw ParseError(where() + ": not a sync-edg sequence file");
  }
  if (parse_int(magic[1], where()) != kFormatVersion) {
    throw ParseError(where() + ": unsupported format version " + std::string(magic[1]));
  }

  DomainSequence seq;
  seq.name = header_value("name");
  seq.feature_dim = static_cast<int>(parse_int(header_value("feature_dim"), where()));
  seq.num_classes = static_cast<int>(parse_int(header_value("num_classes"), where()));
  const long long num_domains = parse_int(header_value("num_domains"), where());
  const long long first = parse_int(header_value("first_domain"), where());
  if (seq.feature_dim <= 0 || seq.num_classes <= 0 || num_domains <= 0) {
    throw ParseError(where() + ": header values must be positive");
  }
  auto cols = next_line("columns");
  if (cols.empty() || cols[0] != "columns" ||
      cols.size() != static_cast<std::size_t>(seq.feature_dim) + 3) {
    throw ParseError(where() + ": column line does not match feature_dim");
  }

  long long record = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    ++record;
    const std::string at = "record " + std::to_string(record) + " (" + where() + ")";
    if (tok.size() != static_cast<std::size_t>(seq.feature_dim) + 2) {
      throw ParseError(at + ": expected " + std::to_string(seq.feature_dim + 2) + " fields, got " +
                       std::to_string(tok.size()));
    }
    const auto t = static_cast<int>(parse_int(tok[0], at));
    const auto label = static_cast<int>(parse_int(tok[1], at));
    if (label < 0 || label >= seq.num_classes) {
      throw ParseError(at + ": label " + std::to_string(label) + " out of range");
    }
    if (seq.domains.empty()) {
      if (t != first) throw ParseError(at + ": first record has t=" + std::to_string(t));
      seq.domains.push_back({t, {}});
    } else if (t == seq.domains.back().t + 1) {
      seq.domains.push_back({t, {}});
    } else if (t != seq.domains.back().t) {
      throw ParseError(at + ": non-consecutive timestamp " + std::to_string(t) + " after " +
                       std::to_string(seq.domains.back().t));
    }
    Sample s{{}, label, t};
    s.features.reserve(static_cast<std::size_t>(seq.feature_dim));
    for (int j = 0; j < seq.feature_dim; ++j) {
      s.features.push_back(parse_double(tok[static_cast<std::size_t>(j) + 2], at));
    }
    seq.domains.back().samples.push_back(std::move(s));
  }
  if (static_cast<long long>(seq.size()) != num_domains) {
    throw ParseError(path.string() + ": header declares " + std::to_string(num_domains) +
                     " domains, found " + std::to_string(seq.size()));
  }
  try {
    seq.validate();
  } catch (const ValidationError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return seq;
}

}  // namespace sync_edg::data
