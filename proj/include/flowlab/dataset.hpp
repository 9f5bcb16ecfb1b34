#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "flowlab/common.hpp"
#include "flowlab/io.hpp"
#include "flowlab/rng.hpp"
#include "flowlab/tensor.hpp"

namespace flowlab {

inline constexpr int kFeatureCount = 115;
inline constexpr int kClassCount = 10;

// Fixed id<->name table; binary label is 0 iff Normal, else 1.
inline constexpr std::array<const char*, kClassCount> kClassNames = {
    "Normal",     "mirai_udp",   "mirai_syn",   "mirai_ack",   "mirai_scan",
    "mirai_udplain", "gafgyt_udp", "gafgyt_combo", "gafgyt_junk", "gafgyt_scan"};

inline int class_id_from_name(std::string_view name) {
  for (int i = 0; i < kClassCount; ++i)
    if (name == kClassNames[i]) return i;
  fail("UnknownLabel", "\"", std::string(name), "\" is not one of the ", kClassCount,
       " traffic classes");
}

inline const char* class_name(int id) {
  if (id < 0 || id >= kClassCount) fail("UnknownLabel", "class id ", id, " out of range");
  return kClassNames[static_cast<size_t>(id)];
}

inline int binary_label(int class_id) { return class_id == 0 ? 0 : 1; }

struct Manifest {
  struct Entry {
    std::string path;
    int label = 0;
  };
  std::vector<Entry> entries;
};

// JSON list [{"path": "...", "label": "..."}]; relative paths are resolved
// against the manifest's own directory.
inline Manifest load_manifest(const std::string& manifest_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    fail("BadManifest", manifest_path, ": ", e.what());
  }
  if (!j.is_array()) fail("BadManifest", manifest_path, ": top-level value must be a list");

  std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  Manifest m;
  for (size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (!e.is_object() || !e.contains("path") || !e.contains("label"))
      fail("BadManifest", manifest_path, ": entry ", i, " needs \"path\" and \"label\"");
    Manifest::Entry entry;
    std::filesystem::path p = e["path"].get<std::string>();
    entry.path = p.is_absolute() ? p.string() : (base / p).string();
    entry.label = class_id_from_name(e["label"].get<std::string>());
    if (!std::filesystem::exists(entry.path))
      fail("MissingFile", manifest_path, ": entry ", i, " points to missing file ", entry.path);
    m.entries.push_back(std::move(entry));
  }
  return m;
}

struct DataMatrix {
  Tensor features;              // N x 115
  std::vector<uint8_t> labels;  // N

  int64_t n() const { return static_cast<int64_t>(labels.size()); }
  const float* row(int64_t i) const { return features.data.data() + i * kFeatureCount; }

  std::array<int64_t, kClassCount> class_counts() const {
    std::array<int64_t, kClassCount> c{};
    for (uint8_t l : labels) c[l]++;
    return c;
  }
};

namespace detail {

// One CSV of 115 numeric columns; a first row containing any non-numeric
// token is treated as a header and skipped. Values are required finite and
// -0.0 is normalized to 0.0 so later value-equality dedup can hash raw bits.
inline std::vector<float> parse_csv(const std::string& path) {
  std::string text = io::read_text_file(path);
  std::vector<float> out;
  out.reserve(1024 * static_cast<size_t>(kFeatureCount));

  const char* p = text.data();
  const char* end = p + text.size();
  int64_t line_no = 0;
  bool first_data_line = true;
  std::array<float, kFeatureCount> row;

  while (p < end) {
    ++line_no;
    const char* line_end = static_cast<const char*>(std::memchr(p, '\n', static_cast<size_t>(end - p)));
    if (!line_end) line_end = end;
    const char* q = p;
    const char* qe = line_end;
    if (qe > q && qe[-1] == '\r') --qe;
    p = line_end < end ? line_end + 1 : end;
    if (q == qe) continue;  // blank line

    int col = 0;
    bool bad_token = false;
    while (q <= qe) {
      const char* tok_end = static_cast<const char*>(std::memchr(q, ',', static_cast<size_t>(qe - q)));
      if (!tok_end) tok_end = qe;
      float v = 0.0f;
      auto [ptr, ec] = std::from_chars(q, tok_end, v);
      if (ec != std::errc() || ptr != tok_end || !std::isfinite(v)) {
        bad_token = true;
        if (!first_data_line)
          fail("BadCell", path, ":", line_no, ": column ", col + 1, " is not a finite number (\"",
               std::string(q, tok_end), "\")");
      } else if (col < kFeatureCount) {
        row[static_cast<size_t>(col)] = v == 0.0f ? 0.0f : v;  // normalize -0.0
      }
      ++col;
      if (tok_end == qe) break;
      q = tok_end + 1;
    }

    if (first_data_line && bad_token) {
      // header row
      first_data_line = false;
      continue;
    }
    if (col != kFeatureCount)
      fail("BadColumnCount", path, ":", line_no, ": ", col, " columns, expected ", kFeatureCount);
    first_data_line = false;
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

inline uint64_t hash_row(const float* row, uint8_t label) {
  uint64_t h = 0x243f6a8885a308d3ull ^ label;
  for (int i = 0; i < kFeatureCount; ++i) {
    uint32_t bits;
    std::memcpy(&bits, row + i, 4);
    h = mix64(h ^ bits);
  }
  return h;
}

}  // namespace detail

// Parses every manifest entry (in parallel), concatenates rows in manifest
// order, and drops exact duplicates (same 115 features and same label),
// keeping the first occurrence.
inline DataMatrix ingest(const Manifest& manifest) {
  std::vector<std::vector<float>> buffers(manifest.entries.size());
  std::vector<std::exception_ptr> errors(manifest.entries.size());
  {
    std::atomic<size_t> next{0};
    auto worker = [&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= manifest.entries.size()) return;
        try {
          buffers[i] = detail::parse_csv(manifest.entries[i].path);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    size_t n_threads = std::min<size_t>(hw, manifest.entries.size());
    std::vector<std::thread> threads;
    for (size_t t = 0; t + 1 < n_threads; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  int64_t total_rows = 0;
  for (const auto& b : buffers) total_rows += static_cast<int64_t>(b.size()) / kFeatureCount;

  DataMatrix out;
  out.features.shape = {total_rows, kFeatureCount};
  out.features.data.reserve(static_cast<size_t>(total_rows) * kFeatureCount);
  out.labels.reserve(static_cast<size_t>(total_rows));

  std::unordered_multimap<uint64_t, int64_t> seen;
  seen.reserve(static_cast<size_t>(total_rows));
  for (size_t e = 0; e < buffers.size(); ++e) {
    uint8_t label = static_cast<uint8_t>(manifest.entries[e].label);
    int64_t rows = static_cast<int64_t>(buffers[e].size()) / kFeatureCount;
    for (int64_t r = 0; r < rows; ++r) {
      const float* row = buffers[e].data() + r * kFeatureCount;
      uint64_t h = detail::hash_row(row, label);
      bool dup = false;
      auto range = seen.equal_range(h);
      for (auto it = range.first; it != range.second; ++it) {
        const float* prev = out.features.data.data() + it->second * kFeatureCount;
        if (out.labels[static_cast<size_t>(it->second)] == label &&
            std::memcmp(prev, row, kFeatureCount * sizeof(float)) == 0) {
          dup = true;
          break;
        }
      }
      if (dup) continue;
      seen.emplace(h, out.n());
      out.features.data.insert(out.features.data.end(), row, row + kFeatureCount);
      out.labels.push_back(label);
    }
    buffers[e].clear();
    buffers[e].shrink_to_fit();
  }
  out.features.shape[0] = out.n();
  return out;
}

struct DatasetSplit {
  std::vector<int64_t> train_idx;
  std::vector<int64_t> test_idx;
  uint64_t seed = 0;
};

// Seeded uniform permutation; first floor(0.8 N) rows train, rest test.
inline DatasetSplit split_n(int64_t n, uint64_t seed) {
  if (n < 10) fail("TooFewRows", "need at least 10 rows to split, got ", n);
  std::vector<int64_t> perm(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(perm);
  int64_t n_train = n * 8 / 10;
  DatasetSplit s;
  s.seed = seed;
  s.train_idx.assign(perm.begin(), perm.begin() + n_train);
  s.test_idx.assign(perm.begin() + n_train, perm.end());
  return s;
}

inline DatasetSplit split(const DataMatrix& data, uint64_t seed) {
  return split_n(data.n(), seed);
}

// Per-column z-score statistics, fitted on training rows only. Population
// (1/N) standard deviation, floored at 1e-8 so constant columns map to 0.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std;

  static constexpr double kFloor = 1e-8;

  void transform_row(const float* in, float* out) const {
    for (int j = 0; j < kFeatureCount; ++j)
      out[j] = static_cast<float>((static_cast<double>(in[j]) - mean[static_cast<size_t>(j)]) /
                                  std[static_cast<size_t>(j)]);
  }
};

inline Standardizer fit_standardizer(const DataMatrix& data, const DatasetSplit& s) {
  Standardizer z;
  z.mean.assign(kFeatureCount, 0.0);
  z.std.assign(kFeatureCount, 0.0);
  const double inv_n = 1.0 / static_cast<double>(s.train_idx.size());
  for (int64_t idx : s.train_idx) {
    const float* row = data.row(idx);
    for (int j = 0; j < kFeatureCount; ++j) z.mean[static_cast<size_t>(j)] += row[j];
  }
  for (auto& m : z.mean) m *= inv_n;
  for (int64_t idx : s.train_idx) {
    const float* row = data.row(idx);
    for (int j = 0; j < kFeatureCount; ++j) {
      double d = row[j] - z.mean[static_cast<size_t>(j)];
      z.std[static_cast<size_t>(j)] += d * d;
    }
  }
  for (auto& v : z.std) v = std::max(std::sqrt(v * inv_n), Standardizer::kFloor);
  return z;
}

inline void apply_standardizer(const Standardizer& z, Tensor& rows) {
  int64_t n = rows.rows();
  for (int64_t i = 0; i < n; ++i) {
    float* row = rows.data.data() + i * kFeatureCount;
    z.transform_row(row, row);
  }
}

// NBIO1 dataset cache: magic, u64 N, u32 feature count, N*115 f32 row-major,
// N u8 labels; all little-endian.
inline void save_cache(const std::string& path, const DataMatrix& data) {
  auto os = io::open_write(path);
  io::put_magic(os, "NBIO1");
  io::put_u64(os, static_cast<uint64_t>(data.n()));
  io::put_u32(os, kFeatureCount);
  io::put_f32_array(os, data.features.data.data(), data.features.data.size());
  os.write(reinterpret_cast<const char*>(data.labels.data()),
           static_cast<std::streamsize>(data.labels.size()));
  if (!os) fail("FileWrite", "short write to ", path);
}

inline DataMatrix load_cache(const std::string& path) {
  auto is = io::open_read(path);
  io::expect_magic(is, "NBIO1", path);
  uint64_t n = io::get_u64(is);
  uint32_t fc = io::get_u32(is);
  if (fc != kFeatureCount)
    fail("BadCache", path, ": feature count ", fc, ", expected ", kFeatureCount);
  DataMatrix data;
  data.features = Tensor::zeros({static_cast<int64_t>(n), kFeatureCount});
  io::get_f32_array(is, data.features.data.data(), data.features.data.size());
  data.labels.resize(n);
  is.read(reinterpret_cast<char*>(data.labels.data()), static_cast<std::streamsize>(n));
  if (!is) fail("FileRead", path, ": truncated cache");
  return data;
}

// At most `cap` rows of each class, chosen by a per-class seeded draw;
// selected rows keep their original relative order.
inline DataMatrix subsample_stratified(const DataMatrix& data, int64_t cap, uint64_t seed) {
  if (cap < 1) fail("BadSubsample", "per-class cap must be >= 1, got ", cap);
  std::array<std::vector<int64_t>, kClassCount> by_class;
  for (int64_t i = 0; i < data.n(); ++i)
    by_class[data.labels[static_cast<size_t>(i)]].push_back(i);

  std::vector<int64_t> keep;
  for (int c = 0; c < kClassCount; ++c) {
    auto& idx = by_class[static_cast<size_t>(c)];
    if (static_cast<int64_t>(idx.size()) > cap) {
      Rng rng(derive_seed(seed, static_cast<uint64_t>(c)));
      rng.shuffle(idx);
      idx.resize(static_cast<size_t>(cap));
      std::sort(idx.begin(), idx.end());
    }
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  std::sort(keep.begin(), keep.end());

  DataMatrix out;
  out.features = Tensor::zeros({static_cast<int64_t>(keep.size()), kFeatureCount});
  out.labels.reserve(keep.size());
  for (size_t i = 0; i < keep.size(); ++i) {
    std::copy_n(data.row(keep[i]), kFeatureCount,
                out.features.data.begin() + static_cast<int64_t>(i) * kFeatureCount);
    out.labels.push_back(data.labels[static_cast<size_t>(keep[i])]);
  }
  return out;
}

// Seeded Gaussian blobs in the 115-dim feature space, `per_class` rows for
// each of `classes` labels. Used by the synth subcommand and the test suites.
inline DataMatrix make_blobs(int64_t per_class, int classes, uint64_t seed) {
  if (classes < 2 || classes > kClassCount)
    fail("BadSubsample", "blob class count must be in [2,", kClassCount, "], got ", classes);
  Rng rng(seed);
  std::vector<float> centers(static_cast<size_t>(classes) * kFeatureCount);
  for (auto& v : centers) v = rng.normal_f();

  DataMatrix out;
  out.features = Tensor::zeros({per_class * classes, kFeatureCount});
  out.labels.reserve(static_cast<size_t>(per_class * classes));
  int64_t r = 0;
  for (int c = 0; c < classes; ++c) {
    const float* center = centers.data() + static_cast<size_t>(c) * kFeatureCount;
    for (int64_t i = 0; i < per_class; ++i, ++r) {
      float* row = out.features.data.data() + r * kFeatureCount;
      for (int j = 0; j < kFeatureCount; ++j) row[j] = center[j] + rng.normal_f();
      out.labels.push_back(static_cast<uint8_t>(c));
    }
  }
  return out;
}

}  // namespace flowlab
