#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sgwpcqa/error.hpp"
#include "sgwpcqa/metrics.hpp"
#include "sgwpcqa/ply.hpp"
#include "sgwpcqa/stats.hpp"
#include "sgwpcqa/svr.hpp"

namespace sgwpcqa {

struct ManifestRecord {
  std::string id;
  std::filesystem::path reference;
  std::filesystem::path distorted;
  double mos = 0.0;
  std::optional<std::string> split;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;

  bool has_split() const {
    return std::any_of(records.begin(), records.end(), [](const ManifestRecord& r) { return r.split.has_value(); });
  }
};

namespace eval_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Comma-separated fields; a field may be double-quoted with "" as an escape.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double parse_double(const std::string& s, std::string_view what) {
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw Error(ErrorCode::InvalidArgument, "cannot parse " + std::string(what) + " '" + s + "'");
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace eval_detail

/// Parses `id,reference,distorted,mos[,split]`. Relative paths resolve
/// against `base_dir`. Blank lines are skipped.
inline DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir = {}) {
  using eval_detail::split_csv_line;
  DatasetManifest m;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header_seen = false;
  bool has_split_column = false;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (eval_detail::trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (!header_seen) {
      for (auto& f : fields) f = eval_detail::lower(f);
      const bool base = fields.size() >= 4 && fields[0] == "id" && fields[1] == "reference" &&
                        fields[2] == "distorted" && fields[3] == "mos";
      if (!base || fields.size() > 5 || (fields.size() == 5 && fields[4] != "split"))
        throw Error(ErrorCode::SchemaMismatch, "manifest header must be id,reference,distorted,mos[,split]");
      has_split_column = fields.size() == 5;
      header_seen = true;
      continue;
    }
    const std::size_t expected = has_split_column ? 5 : 4;
    if (fields.size() != expected)
      throw Error(ErrorCode::InvalidArgument, "manifest line " + std::to_string(line_no) + ": expected " +
                                                  std::to_string(expected) + " fields");
    ManifestRecord r;
    r.id = fields[0];
    if (r.id.empty() || fields[1].empty() || fields[2].empty())
      throw Error(ErrorCode::InvalidArgument, "manifest line " + std::to_string(line_no) + ": empty id or path");
    if (!ids.insert(r.id).second) throw Error(ErrorCode::InvalidArgument, "duplicate manifest id '" + r.id + "'");
    r.reference = std::filesystem::path(fields[1]);
    r.distorted = std::filesystem::path(fields[2]);
    if (r.reference.is_relative()) r.reference = base_dir / r.reference;
    if (r.distorted.is_relative()) r.distorted = base_dir / r.distorted;
    r.mos = eval_detail::parse_double(fields[3], "mos");
    if (!std::isfinite(r.mos)) throw Error(ErrorCode::NonFinite, "non-finite mos for '" + r.id + "'");
    if (has_split_column && !fields[4].empty()) r.split = eval_detail::lower(fields[4]);
    m.records.push_back(std::move(r));
  }
  if (!header_seen) throw Error(ErrorCode::SchemaMismatch, "manifest is missing its header");
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file_bytes(path), path.parent_path());
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// On-disk feature cache keyed by the content of both clouds and the
/// canonical metric configuration. Entries are written to a temporary file
/// and renamed into place, so readers never see partial files.
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  /// Directory from SGWPCQA_CACHE_DIR, if set and non-empty.
  static std::optional<std::filesystem::path> directory_from_env() {
    const char* v = std::getenv("SGWPCQA_CACHE_DIR");
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::filesystem::path(v);
  }

  static std::string key(std::string_view reference_bytes, std::string_view distorted_bytes, const MetricConfig& cfg) {
    std::uint64_t h = fnv1a64(reference_bytes);
    h = fnv1a64("|", h);
    h = fnv1a64(distorted_bytes, h);
    h = fnv1a64("|", h);
    h = fnv1a64(cfg.canonical(), h);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  std::optional<FeatureVector> get(const std::string& key, const MetricConfig& cfg) const {
    std::ifstream in(path_for(key));
    if (!in) return std::nullopt;
    try {
      const auto j = nlohmann::json::parse(in);
      if (j.at("config").get<std::string>() != cfg.canonical()) return std::nullopt;
      FeatureVector fv;
      fv.geometry_bands = j.at("geometry_bands").get<std::vector<std::size_t>>();
      fv.s_geom = j.at("s_geom").get<std::vector<double>>();
      fv.color_bands = j.at("color_bands").get<std::vector<std::size_t>>();
      fv.s_color = j.at("s_color").get<std::vector<double>>();
      if (j.contains("s_p2p")) fv.s_p2p = j.at("s_p2p").get<double>();
      if (j.contains("s_gtv")) fv.s_gtv = j.at("s_gtv").get<double>();
      return fv;
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;  // treat unreadable entries as misses
    }
  }

  void put(const std::string& key, const MetricConfig& cfg, const FeatureVector& fv) const {
    nlohmann::ordered_json j;
    j["config"] = cfg.canonical();
    j["geometry_bands"] = fv.geometry_bands;
    j["s_geom"] = fv.s_geom;
    j["color_bands"] = fv.color_bands;
    j["s_color"] = fv.s_color;
    if (fv.s_p2p) j["s_p2p"] = *fv.s_p2p;
    if (fv.s_gtv) j["s_gtv"] = *fv.s_gtv;
    std::ostringstream tag;
    tag << std::this_thread::get_id();
    const auto tmp = dir_ / (key + ".tmp." + tag.str());
    {
      std::ofstream out(tmp);
      if (!out) throw Error(ErrorCode::IoError, "cannot write cache entry '" + tmp.string() + "'");
      out << j.dump() << '\n';
    }
    std::filesystem::rename(tmp, path_for(key));
  }

  const std::filesystem::path& directory() const noexcept { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const { return dir_ / (key + ".json"); }
  std::filesystem::path dir_;
};

struct RecordFailure {
  std::string id;
  std::string message;
};

struct BatchResult {
  std::vector<std::optional<FeatureVector>> features;  // manifest order
  std::vector<RecordFailure> failures;                 // manifest order
  std::size_t cache_hits = 0;
  double seconds = 0.0;
};

/// Features of every record, computed by a pool of `workers` threads (0 =
/// logical cores). Failed records are reported and left empty.
inline BatchResult extract_batch(const DatasetManifest& manifest, const MetricConfig& cfg,
                                 const FeatureCache* cache = nullptr, unsigned workers = 0) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = manifest.records.size();
  BatchResult out;
  out.features.resize(n);
  std::vector<std::optional<std::string>> errors(n);
  std::vector<char> hit(n, 0);
  const unsigned pool = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(workers), std::max<std::size_t>(n, 1)));
  MetricConfig inner = cfg;
  if (pool > 1) inner.threads = 1;

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const auto& r = manifest.records[i];
      try {
        const std::string ref_bytes = read_file_bytes(r.reference);
        const std::string dist_bytes = read_file_bytes(r.distorted);
        std::string key;
        if (cache) {
          key = FeatureCache::key(ref_bytes, dist_bytes, cfg);
          if (auto fv = cache->get(key, cfg)) {
            out.features[i] = std::move(*fv);
            hit[i] = 1;
            continue;
          }
        }
        PointCloud ref, dist;
        try {
          ref = parse_ply(ref_bytes);
        } catch (const Error& e) {
          throw Error(e.code(), r.reference.string() + ": " + e.what());
        }
        try {
          dist = parse_ply(dist_bytes);
        } catch (const Error& e) {
          throw Error(e.code(), r.distorted.string() + ": " + e.what());
        }
        auto fv = extract_features(ref, dist, inner);
        if (cache) cache->put(key, cfg, fv);
        out.features[i] = std::move(fv);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  if (pool <= 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < pool; ++w) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) out.failures.push_back({manifest.records[i].id, *errors[i]});
    out.cache_hits += hit[i];
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Rows of a feature CSV: `id,<feature names...>,mos`.
struct FeatureTable {
  std::vector<std::string> names;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  std::vector<double> mos;

  std::size_t size() const noexcept { return ids.size(); }
};

/// Builds a table from batch output; failed records are omitted. All
/// successful records must share one feature layout.
inline FeatureTable make_feature_table(const DatasetManifest& manifest, const BatchResult& batch,
                                       const MetricConfig& cfg) {
  FeatureTable t;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& fv = batch.features[i];
    if (!fv) continue;
    const auto names = fv->names();
    if (t.ids.empty()) {
      t.names = names;
    } else if (names != t.names) {
      throw Error(ErrorCode::DimensionMismatch, "record '" + manifest.records[i].id + "' has a different feature layout");
    }
    t.ids.push_back(manifest.records[i].id);
    t.rows.push_back(fv->flatten());
    t.mos.push_back(manifest.records[i].mos);
  }
  if (t.ids.empty()) {
    // Layout implied by the configuration, assuming colored clouds.
    FeatureVector proto;
    proto.geometry_bands = cfg.geometry_bands;
    proto.s_geom.assign(cfg.geometry_bands.size(), 1.0);
    proto.color_bands = cfg.color_bands;
    proto.s_color.assign(cfg.color_bands.size(), 1.0);
    if (cfg.plus_variant) proto.s_p2p = proto.s_gtv = 1.0;
    t.names = proto.names();
  }
  return t;
}

inline void write_feature_csv(std::ostream& out, const FeatureTable& t) {
  out << "id";
  for (const auto& n : t.names) out << ',' << n;
  out << ",mos\n";
  for (std::size_t r = 0; r < t.size(); ++r) {
    out << t.ids[r];
    for (double v : t.rows[r]) out << ',' << eval_detail::format_double(v);
    out << ',' << eval_detail::format_double(t.mos[r]) << '\n';
  }
}

inline void write_feature_csv(const std::filesystem::path& path, const FeatureTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  write_feature_csv(out, t);
  if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

/// Reads a feature CSV. The mos column may be absent (prediction input).
inline FeatureTable parse_feature_csv(std::string_view text) {
  FeatureTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = false, with_mos = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (eval_detail::trim(line).empty()) continue;
    auto fields = eval_detail::split_csv_line(line);
    if (!header) {
      if (fields.empty() || fields.front() != "id" || fields.size() < 2)
        throw Error(ErrorCode::SchemaMismatch, "feature CSV header must start with 'id'");
      with_mos = fields.back() == "mos";
      t.names.assign(fields.begin() + 1, fields.end() - (with_mos ? 1 : 0));
      if (t.names.empty()) throw Error(ErrorCode::SchemaMismatch, "feature CSV has no feature columns");
      header = true;
      continue;
    }
    if (fields.size() != t.names.size() + 1 + (with_mos ? 1 : 0))
      throw Error(ErrorCode::DimensionMismatch, "feature CSV line " + std::to_string(line_no) + " has " +
                                                    std::to_string(fields.size()) + " fields");
    t.ids.push_back(fields[0]);
    std::vector<double> row;
    for (std::size_t c = 0; c < t.names.size(); ++c) row.push_back(eval_detail::parse_double(fields[c + 1], "feature"));
    t.rows.push_back(std::move(row));
    if (with_mos) t.mos.push_back(eval_detail::parse_double(fields.back(), "mos"));
  }
  if (!header) throw Error(ErrorCode::SchemaMismatch, "feature CSV is missing its header");
  return t;
}

inline FeatureTable load_feature_csv(const std::filesystem::path& path) { return parse_feature_csv(read_file_bytes(path)); }

struct EvalOptions {
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  bool logistic = false;     // fit a 4-parameter logistic before PLCC
  bool grid_search = false;  // inner 3-fold hyperparameter selection per fold
};

struct FoldResult {
  double plcc = 0.0;
  double srocc = 0.0;
  std::size_t n = 0;
  std::size_t train_n = 0;
};

struct EvalReport {
  std::string protocol;  // "kfold" or "split"
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  bool logistic = false;
  std::vector<FoldResult> per_fold;
  double mean_plcc = 0.0;
  double mean_srocc = 0.0;
  std::size_t records = 0;
  std::vector<RecordFailure> failures;
  double feature_seconds = 0.0;
  double train_seconds = 0.0;

  /// Timing fields vary run to run; they are only serialized on request so
  /// reports stay bitwise reproducible.
  nlohmann::ordered_json to_json(bool include_timing = false) const {
    nlohmann::ordered_json j;
    j["protocol"] = protocol;
    j["folds"] = folds;
    j["seed"] = seed;
    j["logistic"] = logistic;
    j["records"] = records;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& f : per_fold) arr.push_back({{"plcc", f.plcc}, {"srocc", f.srocc}, {"n", f.n}, {"train_n", f.train_n}});
    j["per_fold"] = arr;
    j["aggregate"] = {{"plcc", mean_plcc}, {"srocc", mean_srocc}};
    auto fails = nlohmann::ordered_json::array();
    for (const auto& f : failures) fails.push_back({{"id", f.id}, {"error", f.message}});
    j["failures"] = fails;
    if (include_timing) j["timing"] = {{"features", feature_seconds}, {"training", train_seconds}};
    return j;
  }

  std::string table() const {
    std::ostringstream os;
    char buf[128];
    os << "fold      n    PLCC     SROCC\n";
    for (std::size_t f = 0; f < per_fold.size(); ++f) {
      std::snprintf(buf, sizeof buf, "%-6zu %4zu  %7.4f  %7.4f\n", f + 1, per_fold[f].n, per_fold[f].plcc,
                    per_fold[f].srocc);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "mean         %7.4f  %7.4f\n", mean_plcc, mean_srocc);
    os << buf;
    return os.str();
  }
};

namespace eval_detail {

inline FoldResult run_fold(const std::vector<std::vector<double>>& x, std::span<const double> y,
                           const std::vector<std::size_t>& train_idx, const std::vector<std::size_t>& test_idx,
                           const SVRHyperparams& hp, const EvalOptions& opt, std::uint64_t fold_seed) {
  if (test_idx.size() <= 1) throw Error(ErrorCode::InsufficientData, "a test fold needs more than one record");
  std::vector<std::vector<double>> xtr;
  std::vector<double> ytr;
  for (auto i : train_idx) {
    xtr.push_back(x[i]);
    ytr.push_back(y[i]);
  }
  const SVRHyperparams chosen = opt.grid_search ? select_hyperparameters(xtr, ytr, hp, fold_seed) : hp;
  const SVRModel model = train(xtr, ytr, chosen);
  std::vector<double> pred, truth;
  for (auto i : test_idx) {
    pred.push_back(predict(model, x[i]));
    truth.push_back(y[i]);
  }
  FoldResult r;
  r.n = test_idx.size();
  r.train_n = train_idx.size();
  r.plcc = opt.logistic ? plcc_logistic(pred, truth) : plcc(pred, truth);
  r.srocc = srocc(pred, truth);
  return r;
}

}  // namespace eval_detail

/// Cross-validated evaluation on precomputed features. If `split` tags are
/// given (one per row, "train"/"test"), the fixed split is used instead of
/// folding.
inline EvalReport evaluate_features(const std::vector<std::vector<double>>& x, std::span<const double> y,
                                    const SVRHyperparams& hp, const EvalOptions& opt,
                                    const std::vector<std::optional<std::string>>& split = {}) {
  if (x.size() != y.size()) throw Error(ErrorCode::DimensionMismatch, "feature and target counts differ");
  EvalReport rep;
  rep.seed = opt.seed;
  rep.logistic = opt.logistic;
  rep.records = x.size();
  const auto start = std::chrono::steady_clock::now();
  const bool use_split = std::any_of(split.begin(), split.end(), [](const auto& s) { return s.has_value(); });
  if (use_split) {
    if (split.size() != x.size()) throw Error(ErrorCode::DimensionMismatch, "split tag count differs from rows");
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (split[i] == "train") tr.push_back(i);
      else if (split[i] == "test") te.push_back(i);
      else throw Error(ErrorCode::InvalidArgument, "split tag must be 'train' or 'test'");
    }
    rep.protocol = "split";
    rep.folds = 1;
    rep.per_fold.push_back(eval_detail::run_fold(x, y, tr, te, hp, opt, opt.seed));
  } else {
    if (opt.folds < 2) throw Error(ErrorCode::InvalidArgument, "need at least two folds");
    if (x.size() < opt.folds) throw Error(ErrorCode::InsufficientData, "fewer records than folds");
    const auto folds = make_folds(x.size(), opt.folds, opt.seed);
    rep.protocol = "kfold";
    rep.folds = opt.folds;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::vector<std::size_t> tr;
      for (std::size_t g = 0; g < folds.size(); ++g)
        if (g != f) tr.insert(tr.end(), folds[g].begin(), folds[g].end());
      std::sort(tr.begin(), tr.end());
      rep.per_fold.push_back(eval_detail::run_fold(x, y, tr, folds[f], hp, opt, opt.seed + f + 1));
    }
  }
  for (const auto& f : rep.per_fold) {
    rep.mean_plcc += f.plcc;
    rep.mean_srocc += f.srocc;
  }
  rep.mean_plcc /= static_cast<double>(rep.per_fold.size());
  rep.mean_srocc /= static_cast<double>(rep.per_fold.size());
  rep.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

/// Extracts features for the manifest (through the cache when given), drops
/// failed records, then evaluates.
inline EvalReport kfold_evaluate(const DatasetManifest& manifest, const MetricConfig& cfg, const SVRHyperparams& hp,
                                 const EvalOptions& opt, const FeatureCache* cache = nullptr, unsigned workers = 0) {
  if (opt.folds < 2) throw Error(ErrorCode::InvalidArgument, "need at least two folds");
  const BatchResult batch = extract_batch(manifest, cfg, cache, workers);
  const FeatureTable table = make_feature_table(manifest, batch, cfg);
  std::vector<std::optional<std::string>> split;
  for (std::size_t i = 0; i < manifest.records.size(); ++i)
    if (batch.features[i]) split.push_back(manifest.records[i].split);
  EvalReport rep = evaluate_features(table.rows, table.mos, hp, opt, split);
  rep.failures = batch.failures;
  rep.records = manifest.records.size();
  rep.feature_seconds = batch.seconds;
  return rep;
}

}  // namespace sgwpcqa
