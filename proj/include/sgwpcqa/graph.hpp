#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <fstream>
#include <memory>
#include <random>
#include <span>
#include <tuple>
#include <vector>

#include "sgwpcqa/error.hpp"
#include "sgwpcqa/kdtree.hpp"
#include "sgwpcqa/parallel.hpp"
#include "sgwpcqa/pointcloud.hpp"

namespace sgwpcqa {

/// Unbiased index in [0, n) from a raw 64-bit engine. Used instead of
/// std::uniform_int_distribution so sampled results do not depend on the
/// standard library implementation.
template <typename Engine>
std::uint64_t uniform_index(Engine& engine, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = engine();
  } while (r >= limit);
  return r % n;
}

/// 53-bit uniform double in [0, 1).
template <typename Engine>
double uniform_unit(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

struct PairwiseDistanceOptions {
  std::size_t exact_limit = 20000;
  std::size_t sample_pairs = 1'000'000;
  std::uint64_t seed = 0x5eed5eedULL;
};

/// Mean Euclidean distance over all unordered pairs. Above `exact_limit`
/// points the mean is estimated from uniformly sampled distinct pairs.
inline double average_pairwise_distance(const PointCloud& pc, const PairwiseDistanceOptions& opt = {}) {
  const std::size_t n = pc.size();
  if (n < 2) throw Error(ErrorCode::DegenerateCloud, "need at least two points for pairwise distances");
  const auto& p = pc.positions;
  double mean = 0.0;
  if (n <= opt.exact_limit) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      double row = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) row += std::sqrt(squared_distance(p[i], p[j]));
      total += row;
    }
    mean = total / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
  } else {
    std::mt19937_64 engine(opt.seed);
    double total = 0.0;
    for (std::size_t s = 0; s < opt.sample_pairs; ++s) {
      const auto i = uniform_index(engine, n);
      auto j = uniform_index(engine, n - 1);
      if (j >= i) ++j;
      total += std::sqrt(squared_distance(p[i], p[j]));
    }
    mean = total / static_cast<double>(opt.sample_pairs);
  }
  if (!(mean > 0.0)) throw Error(ErrorCode::DegenerateCloud, "all points coincide");
  return mean;
}

struct Edge {
  std::uint32_t i, j;
  double w;
};

/// Symmetric weighted graph in CSR form. Every undirected edge is stored in
/// both rows with bitwise-identical weights; rows are sorted by column.
class NeighborGraph {
 public:
  NeighborGraph() = default;

  /// Builds from undirected edges (i != j, each pair at most once).
  static NeighborGraph from_edges(std::size_t n, std::span<const Edge> edges, double theta = 0.0,
                                  std::size_t k = 0) {
    std::vector<Edge> sorted;
    sorted.reserve(edges.size());
    for (const auto& e : edges) {
      if (e.i == e.j || e.i >= n || e.j >= n)
        throw Error(ErrorCode::InvalidArgument, "edge endpoints out of range or self-loop");
      if (!(e.w > 0.0) || !(e.w <= 1.0)) throw Error(ErrorCode::InvalidArgument, "edge weight must lie in (0, 1]");
      sorted.push_back(e.i < e.j ? e : Edge{e.j, e.i, e.w});
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const Edge& a, const Edge& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });
    for (std::size_t t = 1; t < sorted.size(); ++t) {
      if (sorted[t].i == sorted[t - 1].i && sorted[t].j == sorted[t - 1].j)
        throw Error(ErrorCode::InvalidArgument, "duplicate edge");
    }
    NeighborGraph g;
    g.n_ = n;
    g.theta_ = theta;
    g.k_ = k;
    g.offsets_.assign(n + 1, 0);
    for (const auto& e : sorted) {
      ++g.offsets_[e.i + 1];
      ++g.offsets_[e.j + 1];
    }
    for (std::size_t i = 0; i < n; ++i) g.offsets_[i + 1] += g.offsets_[i];
    g.columns_.resize(g.offsets_[n]);
    g.weights_.resize(g.offsets_[n]);
    std::vector<std::size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
    // Pairs are sorted by (i, j); filling in that order leaves every row
    // sorted by column.
    for (const auto& e : sorted) {
      g.columns_[cursor[e.i]] = e.j;
      g.weights_[cursor[e.i]++] = e.w;
      g.columns_[cursor[e.j]] = e.i;
      g.weights_[cursor[e.j]++] = e.w;
    }
    return g;
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t edge_count() const noexcept { return columns_.size() / 2; }
  double theta() const noexcept { return theta_; }
  std::size_t k() const noexcept { return k_; }

  std::span<const std::size_t> offsets() const noexcept { return offsets_; }
  std::span<const std::uint32_t> columns() const noexcept { return columns_; }
  std::span<const double> weights() const noexcept { return weights_; }

  std::span<const std::uint32_t> neighbors(std::size_t i) const {
    return std::span(columns_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
  }
  std::span<const double> neighbor_weights(std::size_t i) const {
    return std::span(weights_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
  }

  /// Undirected edges with i < j, in row order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(edge_count());
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t t = offsets_[i]; t < offsets_[i + 1]; ++t) {
        if (columns_[t] > i) out.push_back({static_cast<std::uint32_t>(i), columns_[t], weights_[t]});
      }
    }
    return out;
  }

  /// Debug dump: one "i j w" line per undirected edge, i < j.
  void write_edges(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
    char buf[64];
    for (const auto& e : edges()) {
      auto res = std::to_chars(buf, buf + sizeof(buf), e.w);
      out << e.i << ' ' << e.j << ' ';
      out.write(buf, res.ptr - buf);
      out << '\n';
    }
  }

 private:
  std::size_t n_ = 0;
  double theta_ = 0.0;
  std::size_t k_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> columns_;
  std::vector<double> weights_;
};

struct GraphOptions {
  PairwiseDistanceOptions pairwise{};
  unsigned threads = 0;
};

/// kNN graph with Gaussian weights exp(-d^2 / theta^2), theta being the mean
/// pairwise distance. An edge exists when either endpoint lists the other
/// among its k nearest neighbors; distance ties go to the lower index.
inline NeighborGraph build_knn_graph(const PointCloud& pc, std::size_t k, const GraphOptions& opt = {}) {
  if (k < 1) throw Error(ErrorCode::InvalidK, "k must be at least 1");
  pc.validate();
  const std::size_t n = pc.size();
  if (n < 2) throw Error(ErrorCode::DegenerateCloud, "a graph needs at least two points");
  if (n > std::numeric_limits<std::uint32_t>::max() - 1)
    throw Error(ErrorCode::TooLarge, "point count exceeds 32-bit index range");
  const double theta = average_pairwise_distance(pc, opt.pairwise);
  const std::size_t kk = std::min(k, n - 1);

  const KdTree3 tree(pc.positions);
  std::vector<std::uint32_t> knn(n * kk);
  parallel_for_chunks(n, opt.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<Neighbor> best;
    for (std::size_t i = begin; i < end; ++i) {
      tree.knn_into(pc.positions[i], kk, static_cast<std::uint32_t>(i), best);
      for (std::size_t t = 0; t < kk; ++t) knn[i * kk + t] = best[t].index;
    }
  });

  std::vector<std::uint64_t> keys;
  keys.reserve(n * kk);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < kk; ++t) {
      const std::uint64_t a = std::min<std::uint64_t>(i, knn[i * kk + t]);
      const std::uint64_t b = std::max<std::uint64_t>(i, knn[i * kk + t]);
      keys.push_back((a << 32) | b);
    }
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  const double inv_theta2 = 1.0 / (theta * theta);
  std::vector<Edge> edges(keys.size());
  for (std::size_t t = 0; t < keys.size(); ++t) {
    const auto a = static_cast<std::uint32_t>(keys[t] >> 32);
    const auto b = static_cast<std::uint32_t>(keys[t] & 0xffffffffULL);
    const double d2 = squared_distance(pc.positions[a], pc.positions[b]);
    edges[t] = {a, b, std::exp(-d2 * inv_theta2)};
  }
  // exp underflows to zero only for pairs absurdly far apart relative to the
  // mean distance; keep those as the smallest positive weight instead.
  for (auto& e : edges) e.w = std::max(e.w, std::numeric_limits<double>::min());
  return NeighborGraph::from_edges(n, edges, theta, k);
}

/// Combinatorial Laplacian L = D - W applied matrix-free.
class LaplacianOperator {
 public:
  LaplacianOperator(std::shared_ptr<const NeighborGraph> graph, unsigned threads = 0)
      : graph_(std::move(graph)), threads_(threads) {
    const auto& g = *graph_;
    degrees_.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = 0.0;
      for (double w : g.neighbor_weights(i)) d += w;
      degrees_[i] = d;
    }
  }

  std::size_t size() const noexcept { return degrees_.size(); }
  const NeighborGraph& graph() const noexcept { return *graph_; }
  std::span<const double> degrees() const noexcept { return degrees_; }
  double lambda_max_bound() const noexcept { return lambda_max_bound_; }
  void set_lambda_max_bound(double v) noexcept { lambda_max_bound_ = v; }
  double max_degree() const noexcept {
    return degrees_.empty() ? 0.0 : *std::max_element(degrees_.begin(), degrees_.end());
  }

  /// y = L x.
  void apply(std::span<const double> x, std::span<double> y) const { apply_block(x, y, 1); }

  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != size()) throw Error(ErrorCode::LengthMismatch, "signal length differs from node count");
    std::vector<double> y(size());
    apply(x, y);
    return y;
  }

  /// Y = L X for `cols` signals stored row-major (node-major), X[i*cols + c].
  void apply_block(std::span<const double> x, std::span<double> y, std::size_t cols) const {
    const auto& g = *graph_;
    const auto offsets = g.offsets();
    const auto columns = g.columns();
    const auto weights = g.weights();
    parallel_for_chunks(size(), threads_, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        double* yi = y.data() + i * cols;
        const double* xi = x.data() + i * cols;
        for (std::size_t c = 0; c < cols; ++c) yi[c] = degrees_[i] * xi[c];
        for (std::size_t t = offsets[i]; t < offsets[i + 1]; ++t) {
          const double w = weights[t];
          const double* xj = x.data() + static_cast<std::size_t>(columns[t]) * cols;
          for (std::size_t c = 0; c < cols; ++c) yi[c] -= w * xj[c];
        }
      }
    });
  }

 private:
  std::shared_ptr<const NeighborGraph> graph_;
  std::vector<double> degrees_;
  double lambda_max_bound_ = 0.0;
  unsigned threads_ = 0;
};

struct PowerIterationOptions {
  std::size_t max_iterations = 500;
  double relative_tolerance = 1e-9;
  std::uint64_t seed = 0x1a4bda11ULL;
};

/// Upper bound on the largest Laplacian eigenvalue:
/// min(1.01 * power-iteration Rayleigh quotient, 2 * max degree).
inline double estimate_lambda_max(const LaplacianOperator& L, const PowerIterationOptions& opt = {}) {
  const std::size_t n = L.size();
  const double gershgorin = 2.0 * L.max_degree();
  if (n == 0 || gershgorin == 0.0) return 0.0;

  std::mt19937_64 engine(opt.seed);
  std::vector<double> v(n), lv(n);
  for (auto& x : v) x = 2.0 * uniform_unit(engine) - 1.0;
  auto normalize = [](std::vector<double>& x) {
    double s = 0.0;
    for (double e : x) s += e * e;
    const double inv = 1.0 / std::sqrt(s);
    for (double& e : x) e *= inv;
  };
  normalize(v);

  double rayleigh = 0.0;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    L.apply(v, lv);
    double r = 0.0, s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      r += v[i] * lv[i];
      s += lv[i] * lv[i];
    }
    if (s == 0.0) break;
    const bool converged = it > 0 && std::abs(r - rayleigh) <= opt.relative_tolerance * std::abs(r);
    rayleigh = r;
    if (converged) break;
    const double inv = 1.0 / std::sqrt(s);
    for (std::size_t i = 0; i < n; ++i) v[i] = lv[i] * inv;
  }
  return std::min(1.01 * rayleigh, gershgorin);
}

inline LaplacianOperator laplacian(NeighborGraph g, unsigned threads = 0) {
  LaplacianOperator L(std::make_shared<const NeighborGraph>(std::move(g)), threads);
  L.set_lambda_max_bound(estimate_lambda_max(L));
  return L;
}

/// Graph total variation f^T L f, evaluated as the edge sum
/// sum_{i<j} w_ij (f_i - f_j)^2 so the result is never negative.
inline double graph_total_variation(const LaplacianOperator& L, std::span<const double> f) {
  if (f.size() != L.size()) throw Error(ErrorCode::LengthMismatch, "signal length differs from node count");
  const auto& g = L.graph();
  double total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto cols = g.neighbors(i);
    const auto ws = g.neighbor_weights(i);
    for (std::size_t t = 0; t < cols.size(); ++t) {
      if (cols[t] <= i) continue;
      const double d = f[i] - f[cols[t]];
      total += ws[t] * d * d;
    }
  }
  return total;
}

}  // namespace sgwpcqa
