#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "test_util.hpp"

using namespace sgwpcqa;
using namespace testutil;

namespace {

PointCloud line_cloud(std::initializer_list<double> xs) {
  PointCloud pc;
  for (double x : xs) pc.positions.push_back({x, 0.0, 0.0});
  return pc;
}

LaplacianOperator two_node(double w) {
  const Edge e{0, 1, w};
  return laplacian(NeighborGraph::from_edges(2, std::span(&e, 1)));
}

std::vector<std::uint32_t> brute_knn(const PointCloud& pc, std::size_t i, std::size_t k) {
  std::vector<Neighbor> all;
  for (std::size_t j = 0; j < pc.size(); ++j)
    if (j != i) all.push_back({squared_distance(pc.positions[i], pc.positions[j]), static_cast<std::uint32_t>(j)});
  std::sort(all.begin(), all.end());
  std::vector<std::uint32_t> out;
  for (std::size_t t = 0; t < k && t < all.size(); ++t) out.push_back(all[t].index);
  return out;
}

}  // namespace

TEST(PairwiseDistance, HandValues) {
  EXPECT_DOUBLE_EQ(average_pairwise_distance(line_cloud({0, 1, 2})), 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(average_pairwise_distance(line_cloud({0, 5})), 5.0);
}

TEST(PairwiseDistance, Errors) {
  EXPECT_THROW(average_pairwise_distance(line_cloud({3})), Error);
  try {
    average_pairwise_distance(line_cloud({2, 2, 2}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateCloud);
  }
}

TEST(PairwiseDistance, SampledEstimateOnLargeCloud) {
  // Exact all-pairs mean of this cloud, computed once by an O(N^2) loop.
  const double exact = 0.66167500197990325;
  const auto pc = random_cloud(100000, 2024, false);
  const double est = average_pairwise_distance(pc);
  EXPECT_NEAR(est / exact, 1.0, 0.01);
  EXPECT_EQ(est, average_pairwise_distance(pc));
}

TEST(PairwiseDistance, ExactBelowLimitMatchesBruteForce) {
  const auto pc = random_cloud(300, 5, false);
  double s = 0.0;
  for (std::size_t i = 0; i < pc.size(); ++i)
    for (std::size_t j = i + 1; j < pc.size(); ++j) s += std::sqrt(squared_distance(pc.positions[i], pc.positions[j]));
  EXPECT_NEAR(average_pairwise_distance(pc), s / (300.0 * 299.0 / 2.0), 1e-12);
}

TEST(KnnGraph, TwoPoints) {
  PointCloud pc;
  pc.positions = {{0, 0, 0}, {1.5, 2.0, 0}};
  const auto g = build_knn_graph(pc, 1);
  EXPECT_DOUBLE_EQ(g.theta(), 2.5);
  ASSERT_EQ(g.edge_count(), 1u);
  EXPECT_NEAR(g.edges()[0].w, std::exp(-1.0), 1e-15);
  EXPECT_NEAR(g.edges()[0].w, 0.367879, 1e-6);
}

TEST(KnnGraph, CollinearTieBreak) {
  const auto g = build_knn_graph(line_cloud({0, 1, 2}), 1);
  EXPECT_DOUBLE_EQ(g.theta(), 4.0 / 3.0);
  const auto e = g.edges();
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0].i, 0u);
  EXPECT_EQ(e[0].j, 1u);
  EXPECT_EQ(e[1].i, 1u);
  EXPECT_EQ(e[1].j, 2u);
  for (const auto& x : e) EXPECT_NEAR(x.w, std::exp(-9.0 / 16.0), 1e-15);
  EXPECT_NEAR(e[0].w, 0.569783, 1e-6);
}

TEST(KnnGraph, SaturatesToCompleteGraph) {
  const auto pc = random_cloud(9, 1, false);
  for (std::size_t k : {8u, 9u, 50u}) {
    const auto g = build_knn_graph(pc, k);
    EXPECT_EQ(g.edge_count(), 9u * 8u / 2u);
  }
}

TEST(KnnGraph, Errors) {
  const auto pc = random_cloud(5, 1, false);
  try {
    build_knn_graph(pc, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidK);
  }
  try {
    build_knn_graph(line_cloud({1, 1, 1, 1}), 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateCloud);
  }
  EXPECT_THROW(build_knn_graph(line_cloud({1}), 1), Error);
}

TEST(KnnGraph, DuplicatePointsGetUnitWeight) {
  const auto g = build_knn_graph(line_cloud({0, 0, 3}), 1);
  bool found = false;
  for (const auto& e : g.edges()) {
    if (e.i == 0 && e.j == 1) {
      found = true;
      EXPECT_EQ(e.w, 1.0);
    }
  }
  EXPECT_TRUE(found);
}

TEST(KnnGraph, OrRuleAndWeightsOnRandomClouds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 20 + 9 * seed;
    const std::size_t k = 1 + seed % 8;
    const auto pc = random_cloud(n, 100 + seed, false);
    const auto g = build_knn_graph(pc, k);
    const double theta = average_pairwise_distance(pc);
    EXPECT_EQ(g.theta(), theta);

    std::set<std::pair<std::uint32_t, std::uint32_t>> expected;
    for (std::size_t i = 0; i < n; ++i)
      for (auto j : brute_knn(pc, i, k))
        expected.insert({std::min<std::uint32_t>(i, j), std::max<std::uint32_t>(i, j)});
    std::set<std::pair<std::uint32_t, std::uint32_t>> got;
    for (const auto& e : g.edges()) {
      got.insert({e.i, e.j});
      const double d2 = squared_distance(pc.positions[e.i], pc.positions[e.j]);
      EXPECT_NEAR(e.w, std::exp(-d2 / (theta * theta)), 1e-12);
      EXPECT_GT(e.w, 0.0);
      EXPECT_LE(e.w, 1.0);
    }
    EXPECT_EQ(got, expected);

    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GE(g.neighbors(i).size(), k);
      const auto cols = g.neighbors(i);
      const auto ws = g.neighbor_weights(i);
      for (std::size_t t = 0; t < cols.size(); ++t) {
        EXPECT_NE(cols[t], i);
        const auto back = g.neighbors(cols[t]);
        const auto it = std::find(back.begin(), back.end(), static_cast<std::uint32_t>(i));
        ASSERT_NE(it, back.end());
        EXPECT_EQ(g.neighbor_weights(cols[t])[static_cast<std::size_t>(it - back.begin())], ws[t]);
      }
    }
  }
}

TEST(KnnGraph, ThreadCountDoesNotChangeResult) {
  const auto pc = random_cloud(20000, 77, false);
  GraphOptions one, many;
  one.threads = 1;
  many.threads = 4;
  const auto a = build_knn_graph(pc, 8, one);
  const auto b = build_knn_graph(pc, 8, many);
  EXPECT_TRUE(std::equal(a.columns().begin(), a.columns().end(), b.columns().begin(), b.columns().end()));
  EXPECT_TRUE(std::equal(a.weights().begin(), a.weights().end(), b.weights().begin(), b.weights().end()));
}

TEST(KnnGraph, FromEdgesRejectsBadInput) {
  const Edge self{1, 1, 0.5};
  EXPECT_THROW(NeighborGraph::from_edges(3, std::span(&self, 1)), Error);
  const Edge heavy{0, 1, 1.5};
  EXPECT_THROW(NeighborGraph::from_edges(3, std::span(&heavy, 1)), Error);
  const Edge out{0, 7, 0.5};
  EXPECT_THROW(NeighborGraph::from_edges(3, std::span(&out, 1)), Error);
}

TEST(KnnGraph, DumpEdges) {
  TempDir dir;
  const auto g = build_knn_graph(line_cloud({0, 1, 2}), 1);
  g.write_edges(dir / "g.txt");
  std::ifstream in(dir / "g.txt");
  std::size_t i, j;
  double w;
  std::size_t lines = 0;
  while (in >> i >> j >> w) {
    EXPECT_LT(i, j);
    EXPECT_NEAR(w, std::exp(-9.0 / 16.0), 1e-15);
    ++lines;
  }
  EXPECT_EQ(lines, 2u);
}

TEST(Laplacian, NullSpaceAndTwoNode) {
  const auto L = laplacian(build_knn_graph(random_cloud(200, 9, false), 8));
  const std::vector<double> ones(L.size(), 1.0);
  const auto y = L.apply(ones);
  for (double v : y) EXPECT_LE(std::abs(v), 1e-12 * L.max_degree());

  const auto L2 = two_node(0.3);
  const auto y2 = L2.apply(std::vector<double>{1.0, 0.0});
  EXPECT_DOUBLE_EQ(y2[0], 0.3);
  EXPECT_DOUBLE_EQ(y2[1], -0.3);
  EXPECT_THROW(L2.apply(std::vector<double>{1.0}), Error);
}

TEST(Laplacian, DegreesAndPsd) {
  std::mt19937_64 rng(4);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto L = laplacian(build_knn_graph(random_cloud(60, seed, false), 1 + seed % 6));
    const auto& g = L.graph();
    for (std::size_t i = 0; i < L.size(); ++i) {
      double s = 0.0;
      for (double w : g.neighbor_weights(i)) s += w;
      EXPECT_EQ(L.degrees()[i], s);
    }
    for (int t = 0; t < 10; ++t) {
      const auto x = random_signal(L.size(), rng);
      const auto lx = L.apply(x);
      double q = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) q += x[i] * lx[i];
      EXPECT_GE(q, -1e-12);
    }
  }
}

TEST(Laplacian, BlockApplyMatchesColumns) {
  std::mt19937_64 rng(8);
  const auto L = laplacian(build_knn_graph(random_cloud(100, 3, false), 8));
  const std::size_t n = L.size();
  const auto a = random_signal(n, rng), b = random_signal(n, rng);
  std::vector<double> block(2 * n), out(2 * n);
  for (std::size_t i = 0; i < n; ++i) block[2 * i] = a[i], block[2 * i + 1] = b[i];
  L.apply_block(block, out, 2);
  const auto la = L.apply(a), lb = L.apply(b);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_EQ(out[2 * i], la[i]);
    EXPECT_EQ(out[2 * i + 1], lb[i]);
  }
}

TEST(LambdaMax, Bounds) {
  const auto isolated = laplacian(NeighborGraph::from_edges(1, {}));
  EXPECT_EQ(estimate_lambda_max(isolated), 0.0);

  const double w = 0.42;
  const double est = estimate_lambda_max(two_node(w));
  EXPECT_GE(est, 2 * w);
  EXPECT_LE(est, 2.02 * w + 1e-15);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto L = laplacian(build_knn_graph(random_cloud(50, 30 + seed, false), 4));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense_laplacian(L));
    const double truth = eig.eigenvalues().maxCoeff();
    const double e = estimate_lambda_max(L);
    EXPECT_GE(e, truth);
    EXPECT_LE(e, 1.05 * truth);
    EXPECT_EQ(L.lambda_max_bound(), e);
    EXPECT_EQ(estimate_lambda_max(L), e);
  }
}

TEST(TotalVariation, HandValuesAndErrors) {
  const auto L = two_node(0.7);
  EXPECT_DOUBLE_EQ(graph_total_variation(L, std::vector<double>{0.0, 1.0}), 0.7);
  EXPECT_EQ(graph_total_variation(L, std::vector<double>{3.0, 3.0}), 0.0);
  try {
    graph_total_variation(L, std::vector<double>{1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(TotalVariation, QuadraticFormAndHomogeneity) {
  std::mt19937_64 rng(12);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto L = laplacian(build_knn_graph(random_cloud(80, 50 + seed, false), 8));
    const auto f = random_signal(L.size(), rng);
    const auto lf = L.apply(f);
    double q = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) q += f[i] * lf[i];
    const double tv = graph_total_variation(L, f);
    EXPECT_NEAR(tv, q, 1e-10 * q);
    const double c = 1.0 + 3.0 * unit(rng);
    std::vector<double> cf(f);
    for (auto& v : cf) v *= c;
    EXPECT_NEAR(graph_total_variation(L, cf), c * c * tv, 1e-10 * c * c * tv);
    const std::vector<double> constant(L.size(), 2.5);
    EXPECT_EQ(graph_total_variation(L, constant), 0.0);
  }
}

TEST(KdTree, MatchesBruteForce) {
  const auto pc = random_cloud(500, 21, false);
  const KdTree3 tree(pc.positions);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    const Point3 q{unit(rng), unit(rng), unit(rng)};
    const auto got = tree.knn(q, 7);
    std::vector<Neighbor> all;
    for (std::size_t j = 0; j < pc.size(); ++j)
      all.push_back({squared_distance(q, pc.positions[j]), static_cast<std::uint32_t>(j)});
    std::sort(all.begin(), all.end());
    ASSERT_EQ(got.size(), 7u);
    for (std::size_t r = 0; r < 7; ++r) EXPECT_EQ(got[r].index, all[r].index);
    EXPECT_EQ(tree.nearest(q).index, all[0].index);
  }
}

TEST(KdTree, TiesGoToLowestIndex) {
  PointCloud pc;
  for (int i = 0; i < 40; ++i) pc.positions.push_back({static_cast<double>(i % 2 ? 1 : -1), 0, 0});
  const KdTree3 tree(pc.positions);
  const auto got = tree.knn({0, 0, 0}, 5);
  for (std::size_t r = 0; r < 5; ++r) EXPECT_EQ(got[r].index, r);
  EXPECT_EQ(tree.nearest({0, 0, 0}).index, 0u);
}
