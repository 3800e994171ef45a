// vbmtl/dataio.hpp

// Copyright 2026 The vbmtl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

/*
 * Dataset plumbing: VBF1 frame files, CSV manifests, synthetic datasets and
 * padded batches.
 *
 * VBF1 layout (all little-endian):
 *   bytes 0-3   ASCII "VBF1"
 *   bytes 4-7   uint32 T (frames)
 *   bytes 8-11  uint32 D (embedding dim)
 *   then T*D float32, row-major.
 */

#pragma once

#include "vbmtl/common.hpp"
#include "vbmtl/task_schema.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace vbmtl {

using FrameMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// T x D frame embeddings of one clip.
struct FeatureSequence {
  FrameMatrix frames;

  Eigen::Index length() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
  bool AllFinite() const { return frames.allFinite(); }
};

enum class Split { kTrain, kVal, kTest };

inline std::string ToString(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

inline std::optional<Split> ParseSplit(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  return std::nullopt;
}

struct LabeledSample {
  std::string id;
  Split split = Split::kTrain;
  std::string feature_file;  // resolved path; may be empty for in-memory data
  FeatureSequence features;
  int country = -1;  // rater/origin country, also used by Culture masking
  TargetMap targets;
};

// ---------------------------------------------------------------------------
// VBF1

namespace internal {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

inline void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t GetU32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

}  // namespace internal

inline constexpr std::array<char, 4> kVbfMagic = {'V', 'B', 'F', '1'};
inline constexpr std::size_t kVbfHeaderBytes = 12;

inline std::string EncodeFeatures(const FeatureSequence& seq) {
  if (seq.length() <= 0 || seq.dim() <= 0)
    throw FormatError("VBF1: empty feature matrix");
  if (!seq.AllFinite())
    throw DataError("VBF1: refusing to write non-finite feature values");
  std::string out(kVbfMagic.begin(), kVbfMagic.end());
  internal::PutU32(out, static_cast<std::uint32_t>(seq.length()));
  internal::PutU32(out, static_cast<std::uint32_t>(seq.dim()));
  out.reserve(kVbfHeaderBytes + 4 * seq.frames.size());
  for (Eigen::Index i = 0; i < seq.frames.size(); ++i) {
    internal::PutU32(out, std::bit_cast<std::uint32_t>(seq.frames.data()[i]));
  }
  return out;
}

inline FeatureSequence DecodeFeatures(std::string_view bytes,
                                      std::string_view what = "VBF1") {
  if (bytes.size() < kVbfHeaderBytes)
    throw FormatError(StrCat(what, ": file shorter than the 12-byte header"));
  if (std::memcmp(bytes.data(), kVbfMagic.data(), 4) != 0)
    throw FormatError(StrCat(what, ": bad magic (expected \"VBF1\")"));
  auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t t = internal::GetU32(p + 4);
  const std::uint32_t d = internal::GetU32(p + 8);
  if (t == 0 || d == 0)
    throw FormatError(StrCat(what, ": T and D must be positive (T=", t,
                             ", D=", d, ")"));
  const std::uint64_t payload = 4ull * t * d;
  if (bytes.size() != kVbfHeaderBytes + payload)
    throw FormatError(StrCat(what, ": truncated or oversized payload (",
                             bytes.size() - kVbfHeaderBytes, " bytes, need ",
                             payload, ")"));
  FeatureSequence seq;
  seq.frames.resize(t, d);
  for (std::uint64_t i = 0; i < std::uint64_t(t) * d; ++i) {
    seq.frames.data()[i] =
        std::bit_cast<float>(internal::GetU32(p + kVbfHeaderBytes + 4 * i));
  }
  return seq;
}

inline void WriteFeatures(const FeatureSequence& seq,
                          const std::filesystem::path& path) {
  const std::string bytes = EncodeFeatures(seq);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(StrCat("cannot open '", path.string(), "' for writing"));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(StrCat("write failed for '", path.string(), "'"));
}

inline FeatureSequence ReadFeatures(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(StrCat("cannot open '", path.string(), "'"));
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  return DecodeFeatures(bytes, path.string());
}

// ---------------------------------------------------------------------------
// Manifest CSV

namespace internal {

inline std::vector<std::string> SplitCsvLine(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string Trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::optional<double> ParseDouble(std::string_view s) {
  const std::string t = Trim(s);
  if (t.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) return std::nullopt;
  return v;
}

inline std::optional<long long> ParseInt(std::string_view s) {
  const std::string t = Trim(s);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    return std::nullopt;
  return v;
}

}  // namespace internal

struct ManifestOptions {
  bool load_features = true;
};

/// Parses a manifest. Relative feature paths resolve against the
/// manifest's directory. Errors carry the 1-based CSV line number.
inline std::vector<LabeledSample> ReadManifest(
    const std::filesystem::path& path, ManifestOptions opts = {}) {
  std::ifstream is(path);
  if (!is) throw Error(StrCat("cannot open manifest '", path.string(), "'"));
  std::string line;
  if (!std::getline(is, line))
    throw DataError(StrCat(path.string(), ": empty manifest (no header)"));
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
    line.erase(0, 3);
  std::map<std::string, std::size_t> col;
  {
    const auto header = internal::SplitCsvLine(line);
    for (std::size_t i = 0; i < header.size(); ++i)
      col[internal::Trim(header[i])] = i;
  }
  std::vector<std::string> required = {"id",   "split",   "feature_file",
                                       "country", "type", "valence",
                                       "arousal"};
  for (int k = 0; k < kNumEmotions; ++k) required.push_back(StrCat("high_", k));
  for (const auto& name : required) {
    if (!col.contains(name))
      throw DataError(StrCat(path.string(), ": missing required column '",
                             name, "'"));
  }
  int culture_cols = 0;
  for (int k = 0; k < kNumEmotions * kNumCountries; ++k)
    culture_cols += col.contains(StrCat("culture_", k)) ? 1 : 0;
  if (culture_cols != 0 && culture_cols != kNumEmotions * kNumCountries)
    throw DataError(StrCat(path.string(),
                           ": culture columns must be all present or absent"));
  const bool has_culture = culture_cols != 0;
  const auto base_dir = path.parent_path();

  std::vector<LabeledSample> samples;
  std::map<std::string, std::size_t> seen_ids;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (internal::Trim(line).empty()) continue;
    const auto cells = internal::SplitCsvLine(line);
    auto where = [&](std::string_view column) {
      return StrCat(path.string(), ":", line_no, ": column '", column, "'");
    };
    auto cell = [&](const std::string& name) -> std::string {
      const std::size_t i = col.at(name);
      if (i >= cells.size())
        throw DataError(StrCat(path.string(), ":", line_no,
                               ": row has too few cells"));
      return internal::Trim(cells[i]);
    };
    auto number = [&](const std::string& name) {
      auto v = internal::ParseDouble(cell(name));
      if (!v) throw DataError(StrCat(where(name), ": malformed number '",
                                     cell(name), "'"));
      return *v;
    };
    auto integer = [&](const std::string& name) {
      auto v = internal::ParseInt(cell(name));
      if (!v) throw DataError(StrCat(where(name), ": malformed integer '",
                                     cell(name), "'"));
      return *v;
    };

    LabeledSample s;
    s.id = cell("id");
    if (s.id.empty()) throw DataError(StrCat(where("id"), ": empty id"));
    if (auto [it, inserted] = seen_ids.emplace(s.id, line_no); !inserted)
      throw DataError(StrCat(path.string(), ":", line_no, ": duplicate id '",
                             s.id, "' (first seen on line ", it->second, ")"));
    auto split = ParseSplit(cell("split"));
    if (!split)
      throw DataError(StrCat(where("split"), ": unknown split token '",
                             cell("split"), "'"));
    s.split = *split;
    std::filesystem::path ff = cell("feature_file");
    s.feature_file = (ff.is_absolute() ? ff : base_dir / ff).string();

    const long long country = integer("country");
    const long long type = integer("type");
    if (country < 0 || country >= kNumCountries)
      throw DataError(StrCat(where("country"), ": value ", country,
                             " outside 0..3"));
    if (type < 0 || type >= kNumTypes)
      throw DataError(StrCat(where("type"), ": value ", type, " outside 0..7"));
    s.country = static_cast<int>(country);
    s.targets[std::string(kCountry)].label = static_cast<int>(country);
    s.targets[std::string(kType)].label = static_cast<int>(type);
    s.targets[std::string(kTwo)].values = {number("valence"),
                                           number("arousal")};
    auto& high = s.targets[std::string(kHigh)].values;
    for (int k = 0; k < kNumEmotions; ++k) high.push_back(number(StrCat("high_", k)));
    if (has_culture) {
      auto& culture = s.targets[std::string(kCulture)];
      culture.observed = CultureMaskForCountry(s.country);
      culture.values.assign(kNumEmotions * kNumCountries, 0.0);
      for (int k = 0; k < kNumEmotions * kNumCountries; ++k) {
        const std::string name = StrCat("culture_", k);
        if (culture.observed[k]) {
          culture.values[k] = number(name);
        } else if (!cell(name).empty()) {
          auto v = internal::ParseDouble(cell(name));
          if (!v) throw DataError(StrCat(where(name), ": malformed number '",
                                         cell(name), "'"));
          culture.values[k] = *v;
        }
      }
    }
    if (opts.load_features) s.features = ReadFeatures(s.feature_file);
    samples.push_back(std::move(s));
  }
  return samples;
}

inline std::string FormatReal(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

/// Writes a manifest with feature paths relative to the manifest directory
/// when possible.
inline void WriteManifest(const std::vector<LabeledSample>& samples,
                          const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(StrCat("cannot open '", path.string(), "' for writing"));
  os << "id,split,feature_file,country,type,valence,arousal";
  for (int k = 0; k < kNumEmotions; ++k) os << ",high_" << k;
  const bool culture = !samples.empty() &&
                       samples.front().targets.contains(std::string(kCulture));
  if (culture)
    for (int k = 0; k < kNumEmotions * kNumCountries; ++k) os << ",culture_" << k;
  os << '\n';
  const auto base = path.parent_path();
  for (const auto& s : samples) {
    std::string ff = s.feature_file;
    if (!ff.empty()) {
      std::error_code ec;
      auto rel = std::filesystem::relative(ff, base.empty() ? "." : base, ec);
      if (!ec && !rel.empty()) ff = rel.generic_string();
    }
    const auto& two = s.targets.at(std::string(kTwo)).values;
    os << s.id << ',' << ToString(s.split) << ',' << ff << ',' << s.country
       << ',' << s.targets.at(std::string(kType)).label << ','
       << FormatReal(two[0]) << ',' << FormatReal(two[1]);
    for (double v : s.targets.at(std::string(kHigh)).values)
      os << ',' << FormatReal(v);
    if (culture)
      for (double v : s.targets.at(std::string(kCulture)).values)
        os << ',' << FormatReal(v);
    os << '\n';
  }
  if (!os) throw Error(StrCat("write failed for '", path.string(), "'"));
}

inline std::map<Split, std::size_t> SplitHistogram(
    const std::vector<LabeledSample>& samples) {
  std::map<Split, std::size_t> h;
  for (const auto& s : samples) ++h[s.split];
  return h;
}

inline std::vector<LabeledSample> FilterSplit(
    const std::vector<LabeledSample>& samples, Split split) {
  std::vector<LabeledSample> out;
  for (const auto& s : samples)
    if (s.split == split) out.push_back(s);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthSpec {
  int n_samples = 200;
  int dim = 32;
  int t_min = 4;
  int t_max = 12;
  std::uint64_t seed = 0;
  double noise_level = 0.0;
  double train_ratio = 0.8;

  bool operator==(const SynthSpec&) const = default;

  void Validate() const {
    if (n_samples < 1) throw ConfigError("synth: n_samples must be >= 1");
    if (dim < 1) throw ConfigError("synth: dim must be >= 1");
    if (t_min < 1 || t_min > t_max)
      throw ConfigError("synth: need 1 <= t_min <= t_max");
    if (!(noise_level >= 0.0)) throw ConfigError("synth: noise_level < 0");
    if (!(train_ratio > 0.0 && train_ratio <= 1.0))
      throw ConfigError("synth: train_ratio must be in (0, 1]");
  }
};

inline constexpr int kSynthLatentDim = 16;

namespace internal {

inline Matrix RandomRows(Rng& rng, int rows, int cols, double row_norm) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.Normal();
    m.row(r) *= row_norm / m.row(r).norm();
  }
  return m;
}

inline double Logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace internal

/// Deterministic toy corpus. Each sample draws z ~ N(0, I_16); every frame
/// is W_f z plus per-entry Gaussian noise scaled by noise_level. Regression
/// targets are logistic maps of linear functions of z and class targets are
/// argmaxes of linear functions of z, so all labels are recoverable from
/// mean-pooled features when the noise is zero.
inline std::vector<LabeledSample> GenerateSynthetic(const SynthSpec& spec) {
  spec.Validate();
  constexpr int kZ = kSynthLatentDim;
  Rng maps(MixSeed(spec.seed, 1));
  // Feature projection scaled so each feature has unit variance.
  const Matrix feat_proj = internal::RandomRows(maps, spec.dim, kZ, 1.0);
  constexpr double kRegNorm = 0.8;
  const Matrix high_map = internal::RandomRows(maps, kNumEmotions, kZ, kRegNorm);
  Matrix culture_map(kNumEmotions * kNumCountries, kZ);
  for (int c = 0; c < kNumCountries; ++c) {
    for (int e = 0; e < kNumEmotions; ++e) {
      RowVector row = high_map.row(e);
      for (int j = 0; j < kZ; ++j) row(j) += 0.5 * kRegNorm / 4.0 * maps.Normal();
      culture_map.row(c * kNumEmotions + e) = row * (kRegNorm / row.norm());
    }
  }
  const Matrix two_map = internal::RandomRows(maps, 2, kZ, kRegNorm);
  const Matrix type_map = internal::RandomRows(maps, kNumTypes, kZ, 1.0);
  const Matrix country_map = internal::RandomRows(maps, kNumCountries, kZ, 1.0);

  Rng draw(MixSeed(spec.seed, 2));
  std::vector<LabeledSample> samples(spec.n_samples);
  for (int i = 0; i < spec.n_samples; ++i) {
    Vector z(kZ);
    for (int j = 0; j < kZ; ++j) z(j) = draw.Normal();
    const int len =
        spec.t_min + static_cast<int>(draw.Below(spec.t_max - spec.t_min + 1));
    const Vector base = feat_proj * z;
    LabeledSample& s = samples[i];
    std::ostringstream id;
    id << "synth_" << std::setw(5) << std::setfill('0') << i;
    s.id = id.str();
    s.features.frames.resize(len, spec.dim);
    for (int t = 0; t < len; ++t)
      for (int d = 0; d < spec.dim; ++d)
        s.features.frames(t, d) = static_cast<float>(
            base(d) + spec.noise_level * draw.Normal());

    auto squash = [](const Vector& v) {
      std::vector<double> out(v.size());
      for (Eigen::Index k = 0; k < v.size(); ++k) out[k] = internal::Logistic(v(k));
      return out;
    };
    auto argmax = [](const Vector& v) {
      Eigen::Index best = 0;
      v.maxCoeff(&best);
      return static_cast<int>(best);
    };
    s.country = argmax(country_map * z);
    s.targets[std::string(kHigh)].values = squash(high_map * z);
    auto& culture = s.targets[std::string(kCulture)];
    culture.values = squash(culture_map * z);
    culture.observed = CultureMaskForCountry(s.country);
    s.targets[std::string(kTwo)].values = squash(two_map * z);
    s.targets[std::string(kType)].label = argmax(type_map * z);
    s.targets[std::string(kCountry)].label = s.country;
  }

  // Split stratified by country: floor(ratio * n) training samples in total,
  // per-country quotas by largest remainder (ties to the lower country).
  std::vector<std::vector<int>> by_country(kNumCountries);
  for (int i = 0; i < spec.n_samples; ++i) by_country[samples[i].country].push_back(i);
  const auto n_train = static_cast<std::size_t>(
      std::floor(spec.train_ratio * spec.n_samples + 1e-9));
  std::vector<std::size_t> quota(kNumCountries);
  std::vector<std::pair<double, int>> remainders;
  std::size_t assigned = 0;
  for (int c = 0; c < kNumCountries; ++c) {
    const double exact = spec.train_ratio * by_country[c].size();
    quota[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += quota[c];
    remainders.emplace_back(-(exact - quota[c]), c);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t k = 0; assigned < n_train && k < remainders.size(); ++k) {
    const int c = remainders[k].second;
    if (quota[c] < by_country[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }
  for (int c = 0; c < kNumCountries; ++c) {
    for (std::size_t k = 0; k < by_country[c].size(); ++k)
      samples[by_country[c][k]].split = k < quota[c] ? Split::kTrain : Split::kVal;
  }
  return samples;
}

/// Writes features to <dir>/features/<id>.vbf and the manifest to
/// <dir>/manifest.csv; updates feature_file on the samples.
inline std::filesystem::path WriteDataset(std::vector<LabeledSample>& samples,
                                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "features");
  for (auto& s : samples) {
    const auto p = dir / "features" / (s.id + ".vbf");
    WriteFeatures(s.features, p);
    s.feature_file = p.string();
  }
  const auto manifest = dir / "manifest.csv";
  WriteManifest(samples, manifest);
  return manifest;
}

// ---------------------------------------------------------------------------
// Batches

/// Padded mini-batch. Frames are stacked: row b * max_len + t holds frame t
/// of sample b; padded rows are exactly zero and mask(b, t) = 0 there.
struct Batch {
  Matrix features;
  Matrix mask;  // B x max_len, entries 0/1
  Eigen::Index max_len = 0;
  Eigen::Index dim = 0;
  std::vector<std::string> ids;
  std::vector<int> countries;
  Vector sample_weights;  // all ones unless a weighting mode fills it
  std::map<std::string, Matrix> reg_targets;  // B x dim
  std::map<std::string, Matrix> reg_masks;    // B x dim, 1 = observed
  std::map<std::string, std::vector<int>> labels;

  Eigen::Index size() const { return mask.rows(); }
};

inline Batch CollateBatch(const std::vector<const LabeledSample*>& items,
                          const TaskSet& tasks, Eigen::Index pad_to = 0) {
  if (items.empty()) throw DataError("CollateBatch: empty batch");
  const Eigen::Index dim = items.front()->features.dim();
  Eigen::Index max_len = pad_to;
  for (const auto* s : items) {
    if (s->features.dim() != dim)
      throw DimensionError(StrCat("sample '", s->id, "' has D=",
                                  s->features.dim(), ", expected ", dim));
    if (s->features.length() < 1)
      throw DataError(StrCat("sample '", s->id, "' has no frames"));
    max_len = std::max(max_len, s->features.length());
  }
  const auto batch = static_cast<Eigen::Index>(items.size());
  Batch b;
  b.max_len = max_len;
  b.dim = dim;
  b.features = Matrix::Zero(batch * max_len, dim);
  b.mask = Matrix::Zero(batch, max_len);
  b.sample_weights = Vector::Ones(batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const auto& s = *items[i];
    const Eigen::Index len = s.features.length();
    b.features.middleRows(i * max_len, len) = s.features.frames.cast<double>();
    b.mask.row(i).head(len).setOnes();
    b.ids.push_back(s.id);
    b.countries.push_back(s.country);
  }
  for (const auto& t : tasks.tasks) {
    if (t.is_regression()) {
      Matrix y(batch, t.dim), m(batch, t.dim);
      for (Eigen::Index i = 0; i < batch; ++i) {
        auto it = items[i]->targets.find(t.name);
        if (it == items[i]->targets.end() ||
            static_cast<int>(it->second.values.size()) != t.dim)
          throw DataError(StrCat("sample '", items[i]->id,
                                 "' lacks a valid target for ", t.name));
        for (int k = 0; k < t.dim; ++k) {
          y(i, k) = it->second.values[k];
          m(i, k) = it->second.IsObserved(k) ? 1.0 : 0.0;
        }
      }
      b.reg_targets[t.name] = std::move(y);
      b.reg_masks[t.name] = std::move(m);
    } else {
      std::vector<int> l(batch);
      for (Eigen::Index i = 0; i < batch; ++i) {
        auto it = items[i]->targets.find(t.name);
        if (it == items[i]->targets.end())
          throw DataError(StrCat("sample '", items[i]->id,
                                 "' lacks a target for ", t.name));
        l[i] = it->second.label;
      }
      b.labels[t.name] = std::move(l);
    }
  }
  return b;
}

/// Splits samples into batches of at most batch_size, padded per batch to
/// the batch's longest sequence. With a seed the order is a deterministic
/// shuffle; without one the input order is kept.
inline std::vector<Batch> MakeBatches(
    const std::vector<LabeledSample>& samples, const TaskSet& tasks,
    int batch_size, std::optional<std::uint64_t> shuffle_seed = std::nullopt) {
  if (samples.empty()) throw DataError("MakeBatches: no samples");
  if (batch_size < 1) throw ConfigError("MakeBatches: batch_size must be >= 1");
  const Eigen::Index dim = samples.front().features.dim();
  for (const auto& s : samples) {
    if (s.features.dim() != dim)
      throw DimensionError(StrCat("MakeBatches: sample '", s.id, "' has D=",
                                  s.features.dim(), ", expected ", dim));
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.Below(i)]);
  }
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::vector<const LabeledSample*> items;
    for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k)
      items.push_back(&samples[order[k]]);
    out.push_back(CollateBatch(items, tasks));
  }
  return out;
}

}  // namespace vbmtl
