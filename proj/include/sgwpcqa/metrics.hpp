#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgwpcqa/correspondence.hpp"
#include "sgwpcqa/error.hpp"
#include "sgwpcqa/filter_bank.hpp"
#include "sgwpcqa/graph.hpp"
#include "sgwpcqa/pointcloud.hpp"
#include "sgwpcqa/sgwt.hpp"

namespace sgwpcqa {

/// Feature-extraction settings. Band indices are 1-based, band 1 being the
/// low-pass band. Defaults: K = 8, M = 6, all geometry bands and color
/// bands 1-3.
struct MetricConfig {
  std::size_t k = 8;
  std::size_t m_bands = 6;
  std::vector<std::size_t> geometry_bands{1, 2, 3, 4, 5, 6};
  std::vector<std::size_t> color_bands{1, 2, 3};
  bool plus_variant = false;
  std::size_t chebyshev_order = kDefaultChebyshevOrder;
  bool exact_sgwt = false;  // dense eigendecomposition instead of Chebyshev (small clouds only)
  unsigned threads = 0;     // 0 = hardware concurrency; does not affect results

  void validate() const {
    if (k < 1) throw Error(ErrorCode::InvalidK, "k must be at least 1");
    if (m_bands < 2) throw Error(ErrorCode::InvalidBandCount, "m_bands must be at least 2");
    if (chebyshev_order < 1) throw Error(ErrorCode::InvalidArgument, "chebyshev order must be at least 1");
    for (const auto* set : {&geometry_bands, &color_bands}) {
      for (std::size_t t = 0; t < set->size(); ++t) {
        const std::size_t b = (*set)[t];
        if (b < 1 || b > m_bands)
          throw Error(ErrorCode::InvalidArgument, "band index " + std::to_string(b) + " outside 1.." + std::to_string(m_bands));
        if (t > 0 && (*set)[t - 1] >= b) throw Error(ErrorCode::InvalidArgument, "band sets must be strictly ascending");
      }
    }
  }

  /// Canonical text of every result-affecting field (cache keys, model echo).
  std::string canonical() const {
    auto join = [](const std::vector<std::size_t>& v) {
      std::string s;
      for (std::size_t t = 0; t < v.size(); ++t) s += (t ? "," : "") + std::to_string(v[t]);
      return s;
    };
    return "k=" + std::to_string(k) + ";m=" + std::to_string(m_bands) + ";geom=" + join(geometry_bands) +
           ";color=" + join(color_bands) + ";plus=" + (plus_variant ? "1" : "0") +
           ";order=" + std::to_string(chebyshev_order) + ";exact=" + (exact_sgwt ? "1" : "0");
  }
};

struct FeatureVector {
  std::vector<std::size_t> geometry_bands;
  std::vector<double> s_geom;
  std::vector<std::size_t> color_bands;
  std::vector<double> s_color;
  std::optional<double> s_p2p;
  std::optional<double> s_gtv;

  /// [S^G ascending band, S^C ascending band, S_p2p?, S_gtv?]
  std::vector<double> flatten() const {
    std::vector<double> out(s_geom);
    out.insert(out.end(), s_color.begin(), s_color.end());
    if (s_p2p) out.push_back(*s_p2p);
    if (s_gtv) out.push_back(*s_gtv);
    return out;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (auto b : geometry_bands) out.push_back("sG" + std::to_string(b));
    for (auto b : color_bands) out.push_back("sC" + std::to_string(b));
    if (s_p2p) out.push_back("s_p2p");
    if (s_gtv) out.push_back("s_gtv");
    return out;
  }

  std::size_t size() const { return s_geom.size() + s_color.size() + (s_p2p ? 1 : 0) + (s_gtv ? 1 : 0); }
};

inline double score_from_error(double error) { return 1.0 / (1.0 + error); }

/// Per-band mean squared difference (1/N) sum_i (a(m,i) - b(m,i))^2.
inline std::vector<double> subband_mse(const SGWCoefficients& a, const SGWCoefficients& b) {
  if (a.bands != b.bands || a.nodes != b.nodes) throw Error(ErrorCode::ShapeMismatch, "coefficient shapes differ");
  if (a.nodes == 0) throw Error(ErrorCode::ShapeMismatch, "coefficients have no nodes");
  std::vector<double> out(a.bands);
  for (std::size_t m = 0; m < a.bands; ++m) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.nodes; ++i) {
      const double d = a(m, i) - b(m, i);
      s += d * d;
    }
    out[m] = s / static_cast<double>(a.nodes);
  }
  return out;
}

/// Per-band mean square of a single (difference) coefficient set.
inline std::vector<double> subband_energy(const SGWCoefficients& d) {
  std::vector<double> out(d.bands);
  for (std::size_t m = 0; m < d.bands; ++m) {
    double s = 0.0;
    for (double v : d.band(m)) s += v * v;
    out[m] = s / static_cast<double>(d.nodes);
  }
  return out;
}

/// Geometry scores S^G_m = 1 / (1 + G_m), G_m averaging the x/y/z per-band
/// mean squared coefficient differences.
inline std::vector<double> geometry_subband_scores(std::span<const SGWCoefficients, 3> reference,
                                                   std::span<const SGWCoefficients, 3> distorted) {
  const std::size_t m = reference[0].bands;
  for (int c = 0; c < 3; ++c) {
    if (reference[c].bands != m || distorted[c].bands != m || reference[c].nodes != reference[0].nodes ||
        distorted[c].nodes != reference[0].nodes)
      throw Error(ErrorCode::ShapeMismatch, "geometry coefficient sets must share dimensions");
  }
  std::vector<double> g(m, 0.0);
  for (int c = 0; c < 3; ++c) {
    const auto e = subband_mse(reference[c], distorted[c]);
    for (std::size_t b = 0; b < m; ++b) g[b] += e[b];
  }
  std::vector<double> s(m);
  for (std::size_t b = 0; b < m; ++b) s[b] = score_from_error(g[b] / 3.0);
  return s;
}

inline std::vector<double> color_subband_scores(const SGWCoefficients& reference, const SGWCoefficients& distorted) {
  const auto c = subband_mse(reference, distorted);
  std::vector<double> s(c.size());
  for (std::size_t b = 0; b < c.size(); ++b) s[b] = score_from_error(c[b]);
  return s;
}

/// S_p2p = 1 / (1 + MSE) over reference-to-distorted nearest-neighbor
/// squared distances.
inline double p2p_score(const AssociatedCloud& assoc) {
  if (assoc.squared_distances.empty()) throw Error(ErrorCode::EmptyCloud, "empty association");
  double s = 0.0;
  for (double d : assoc.squared_distances) s += d;
  return score_from_error(s / static_cast<double>(assoc.squared_distances.size()));
}

inline constexpr double kGtvEpsilon = 1e-12;

/// S_gtv = 1 / (1 + mean_s |GTV(ref_s) - GTV(dist_s)| / (GTV(ref_s) + eps)).
inline double gtv_score(const LaplacianOperator& L, std::span<const std::span<const double>> reference,
                        std::span<const std::span<const double>> distorted) {
  if (reference.size() != distorted.size() || reference.empty())
    throw Error(ErrorCode::LengthMismatch, "reference and distorted signal sets differ in count");
  double total = 0.0;
  for (std::size_t s = 0; s < reference.size(); ++s) {
    const double r = graph_total_variation(L, reference[s]);
    const double d = graph_total_variation(L, distorted[s]);
    total += std::abs(r - d) / (r + kGtvEpsilon);
  }
  return score_from_error(total / static_cast<double>(reference.size()));
}

struct StageTimings {
  double graph = 0.0;
  double projection = 0.0;
  double sgwt = 0.0;
  double scores = 0.0;

  double total() const { return graph + projection + sgwt + scores; }
};

namespace metrics_detail {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace metrics_detail

/// Everything the pipeline builds on the way to the features; exposed for
/// debug dumps and tests.
struct PipelineState {
  std::optional<LaplacianOperator> laplacian;
  std::optional<FilterBank> bank;
  AssociatedCloud association;
};

/// Full-reference features of `distorted` against `reference`: one kNN graph
/// on the reference, nearest-neighbor projection of the distorted cloud onto
/// it, then subband comparison of the wavelet coefficients of the x, y, z
/// and lightness signals. Because the transform is linear, each comparison
/// transforms the difference signal f_ref - f_dist once. Color bands are
/// dropped when either cloud has no color.
inline FeatureVector extract_features(const PointCloud& reference_in, const PointCloud& distorted_in,
                                      const MetricConfig& cfg, StageTimings* timings = nullptr,
                                      PipelineState* state = nullptr) {
  cfg.validate();
  metrics_detail::Stopwatch clock;
  const PointCloud reference = with_lightness(reference_in);
  const PointCloud distorted = with_lightness(distorted_in);
  reference.validate();
  distorted.validate();

  GraphOptions gopt;
  gopt.threads = cfg.threads;
  LaplacianOperator L = laplacian(build_knn_graph(reference, cfg.k, gopt), cfg.threads);
  const FilterBank bank = design_filter_bank(cfg.m_bands, L.lambda_max_bound());
  const double t_graph = clock.lap();

  AssociatedCloud assoc = project(reference, distorted, cfg.threads);
  const double t_projection = clock.lap();

  const bool use_color = !cfg.color_bands.empty() && reference.lightness && assoc.lightness;
  const bool need_color_signal = use_color || (cfg.plus_variant && reference.lightness && assoc.lightness);
  const std::size_t n = reference.size();
  const std::size_t count = need_color_signal ? 4 : 3;

  std::array<std::vector<double>, 4> ref_signals;
  for (std::size_t a = 0; a < 3; ++a) ref_signals[a] = reference.coordinate(a);
  if (need_color_signal) ref_signals[3] = *reference.lightness;
  std::array<const std::vector<double>*, 4> dist_signals{&assoc.x, &assoc.y, &assoc.z,
                                                          need_color_signal ? &*assoc.lightness : nullptr};

  std::vector<double> diff(n * count);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < count; ++s) diff[i * count + s] = ref_signals[s][i] - (*dist_signals[s])[i];

  std::vector<SGWCoefficients> psi;
  if (cfg.exact_sgwt) {
    std::vector<double> column(n);
    for (std::size_t s = 0; s < count; ++s) {
      for (std::size_t i = 0; i < n; ++i) column[i] = diff[i * count + s];
      psi.push_back(sgwt_exact(L, column, bank));
    }
  } else {
    psi = sgwt_forward_block(L, diff, count, bank, cfg.chebyshev_order, cfg.threads);
  }
  const double t_sgwt = clock.lap();

  FeatureVector fv;
  std::vector<double> g(cfg.m_bands, 0.0);
  for (std::size_t a = 0; a < 3; ++a) {
    const auto e = subband_energy(psi[a]);
    for (std::size_t b = 0; b < cfg.m_bands; ++b) g[b] += e[b];
  }
  fv.geometry_bands = cfg.geometry_bands;
  for (auto b : cfg.geometry_bands) fv.s_geom.push_back(score_from_error(g[b - 1] / 3.0));
  if (use_color) {
    const auto c = subband_energy(psi[3]);
    fv.color_bands = cfg.color_bands;
    for (auto b : cfg.color_bands) fv.s_color.push_back(score_from_error(c[b - 1]));
  }
  if (cfg.plus_variant) {
    fv.s_p2p = p2p_score(assoc);
    std::vector<std::span<const double>> r, d;
    for (std::size_t s = 0; s < count; ++s) {
      r.emplace_back(ref_signals[s]);
      d.emplace_back(*dist_signals[s]);
    }
    fv.s_gtv = gtv_score(L, r, d);
  }
  const double t_scores = clock.lap();

  if (timings) *timings = {t_graph, t_projection, t_sgwt, t_scores};
  if (state) {
    state->bank = bank;
    state->association = std::move(assoc);
    state->laplacian = std::move(L);
  }
  return fv;
}

}  // namespace sgwpcqa
