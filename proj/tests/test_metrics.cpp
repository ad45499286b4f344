#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace sgwpcqa;
using namespace testutil;

namespace {

std::array<SGWCoefficients, 3> zeros(std::size_t m, std::size_t n) {
  return {SGWCoefficients(m, n), SGWCoefficients(m, n), SGWCoefficients(m, n)};
}

PointCloud jitter(const PointCloud& pc, double sigma, double sigma_l, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PointCloud out = with_lightness(pc);
  for (auto& p : out.positions)
    for (auto& c : p) c += sigma * gaussian(rng);
  if (out.lightness)
    for (auto& l : *out.lightness) l += sigma_l * gaussian(rng);
  return out;
}

}  // namespace

TEST(Scores, ScoreFromError) {
  EXPECT_EQ(score_from_error(0.0), 1.0);
  EXPECT_EQ(score_from_error(1.0), 0.5);
}

TEST(Scores, GeometryIdentical) {
  auto ref = zeros(6, 10);
  for (int c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < ref[c].data.size(); ++t) ref[c].data[t] = 0.1 * static_cast<double>(t) - c;
  for (double s : geometry_subband_scores(ref, ref)) EXPECT_EQ(s, 1.0);
}

TEST(Scores, GeometryHandInstance) {
  const auto ref = zeros(2, 2);
  auto dist = zeros(2, 2);
  dist[0](0, 0) = 1.0;
  dist[0](0, 1) = 1.0;
  const auto s = geometry_subband_scores(ref, dist);
  EXPECT_EQ(s[0], 0.75);
  EXPECT_EQ(s[1], 1.0);
}

TEST(Scores, GeometryUnitError) {
  const auto ref = zeros(3, 4);
  auto dist = zeros(3, 4);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 4; ++i) dist[c](1, i) = (i % 2) ? 1.0 : -1.0;
  EXPECT_EQ(geometry_subband_scores(ref, dist)[1], 0.5);
}

TEST(Scores, GeometryShapeMismatch) {
  const auto ref = zeros(2, 2);
  auto dist = zeros(2, 3);
  try {
    geometry_subband_scores(ref, dist);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Scores, ColorHandInstance) {
  for (std::size_t n : {1u, 7u, 100u}) {
    SGWCoefficients ref(3, n), dist(3, n);
    for (std::size_t i = 0; i < n; ++i) dist(2, i) = 2.0;
    const auto s = color_subband_scores(ref, dist);
    EXPECT_EQ(s[0], 1.0);
    EXPECT_EQ(s[2], 0.2);
    for (std::size_t i = 0; i < n; ++i) dist(2, i) = 4.0;
    EXPECT_LT(color_subband_scores(ref, dist)[2], 0.2);
    EXPECT_EQ(subband_mse(ref, dist)[2], 16.0);
  }
  EXPECT_THROW(color_subband_scores(SGWCoefficients(3, 2), SGWCoefficients(2, 2)), Error);
}

TEST(Scores, PointToPoint) {
  AssociatedCloud a;
  a.mapping = {0, 1, 2};
  a.squared_distances = {0, 0, 0};
  EXPECT_EQ(p2p_score(a), 1.0);
  a.squared_distances = {1, 1, 1};
  EXPECT_EQ(p2p_score(a), 0.5);
  const double before = p2p_score(a);
  a.squared_distances[1] = 4.0;
  EXPECT_LT(p2p_score(a), before);
}

TEST(Scores, TotalVariation) {
  const auto L = laplacian(build_knn_graph(random_cloud(60, 1, false), 8));
  std::mt19937_64 rng(2);
  std::vector<std::vector<double>> ref, dist;
  for (int s = 0; s < 4; ++s) {
    ref.push_back(random_signal(60, rng));
    dist.push_back(ref.back());
    for (auto& v : dist.back()) v *= std::sqrt(2.0);
  }
  std::vector<std::span<const double>> r(ref.begin(), ref.end()), d(dist.begin(), dist.end());
  EXPECT_EQ(gtv_score(L, r, r), 1.0);
  EXPECT_NEAR(gtv_score(L, r, d), 0.5, 1e-12);

  // Moving the discrepancy to another signal with the same relative error.
  std::vector<std::span<const double>> d1(r), d2(r);
  d1[0] = d[0];
  d2[2] = d[2];
  EXPECT_NEAR(gtv_score(L, r, d1), gtv_score(L, r, d2), 1e-12);

  std::vector<double> short_signal(59, 0.0);
  std::vector<std::span<const double>> bad(r);
  bad[1] = short_signal;
  EXPECT_THROW(gtv_score(L, r, bad), Error);
}

TEST(Config, ValidateAndCanonical) {
  MetricConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  MetricConfig other = cfg;
  other.threads = 7;
  EXPECT_EQ(cfg.canonical(), other.canonical());
  other.k = 9;
  EXPECT_NE(cfg.canonical(), other.canonical());
  MetricConfig bad;
  bad.geometry_bands = {0};
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.color_bands = {7};
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.k = 0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(ExtractFeatures, IdentityGivesOnes) {
  const auto pc = random_cloud(400, 3);
  MetricConfig cfg;
  const auto fv = extract_features(pc, pc, cfg);
  EXPECT_EQ(fv.size(), 9u);
  for (double v : fv.flatten()) EXPECT_EQ(v, 1.0);
  cfg.plus_variant = true;
  const auto plus = extract_features(pc, pc, cfg);
  EXPECT_EQ(plus.size(), 11u);
  for (double v : plus.flatten()) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(plus.names().back(), "s_gtv");
  EXPECT_EQ(plus.names().front(), "sG1");
}

TEST(ExtractFeatures, DropsColorWhenMissing) {
  const auto colored = random_cloud(200, 4);
  auto bare = colored;
  bare.rgb.reset();
  const auto fv = extract_features(colored, bare, MetricConfig{});
  EXPECT_EQ(fv.size(), 6u);
  EXPECT_TRUE(fv.s_color.empty());
}

TEST(ExtractFeatures, ScoresInUnitIntervalAndDeterministic) {
  const auto pc = random_cloud(500, 5);
  const auto noisy = jitter(pc, 0.02, 5.0, 6);
  MetricConfig cfg;
  cfg.plus_variant = true;
  const auto a = extract_features(pc, noisy, cfg);
  const auto b = extract_features(pc, noisy, cfg);
  EXPECT_EQ(a.flatten(), b.flatten());
  for (double v : a.flatten()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  cfg.threads = 3;
  EXPECT_EQ(extract_features(pc, noisy, cfg).flatten(), a.flatten());
}

TEST(ExtractFeatures, TranslationInvariance) {
  const auto pc = random_cloud(300, 7);
  const auto noisy = jitter(pc, 0.01, 3.0, 8);
  auto shift = [](PointCloud p) {
    for (auto& q : p.positions) q = {q[0] + 3.0, q[1] - 2.0, q[2] + 0.5};
    return p;
  };
  MetricConfig cfg;
  cfg.plus_variant = true;
  const auto a = extract_features(pc, noisy, cfg);
  const auto b = extract_features(shift(pc), shift(noisy), cfg);
  for (std::size_t m = 1; m < a.s_geom.size(); ++m) EXPECT_NEAR(a.s_geom[m], b.s_geom[m], 1e-9);
  for (std::size_t m = 0; m < a.s_color.size(); ++m) EXPECT_NEAR(a.s_color[m], b.s_color[m], 1e-9);
  EXPECT_NEAR(*a.s_p2p, *b.s_p2p, 1e-9);
  EXPECT_NEAR(*a.s_gtv, *b.s_gtv, 1e-9);
}

TEST(ExtractFeatures, ExactPathMatchesChebyshev) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto pc = random_cloud(150, 20 + seed);
    const auto noisy = jitter(pc, 0.03, 4.0, 40 + seed);
    MetricConfig cheb, exact;
    exact.exact_sgwt = true;
    const auto a = extract_features(pc, noisy, cheb).flatten();
    const auto b = extract_features(pc, noisy, exact).flatten();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-3);
  }
}

TEST(ExtractFeatures, MatchesEightSeparateTransforms) {
  const auto pc = with_lightness(random_cloud(250, 9));
  const auto noisy = jitter(pc, 0.02, 6.0, 10);
  MetricConfig cfg;
  PipelineState state;
  const auto fv = extract_features(pc, noisy, cfg, nullptr, &state);
  const auto& L = *state.laplacian;
  const auto& bank = *state.bank;
  const auto& a = state.association;
  std::array<SGWCoefficients, 3> pr, pd;
  for (std::size_t c = 0; c < 3; ++c) {
    pr[c] = sgwt_forward(L, pc.coordinate(c), bank);
    pd[c] = sgwt_forward(L, a.coordinate(c), bank);
  }
  const auto sg = geometry_subband_scores(pr, pd);
  const auto sc = color_subband_scores(sgwt_forward(L, *pc.lightness, bank), sgwt_forward(L, *a.lightness, bank));
  for (std::size_t m = 0; m < 6; ++m) EXPECT_NEAR(fv.s_geom[m], sg[m], 1e-9);
  for (std::size_t m = 0; m < 3; ++m) EXPECT_NEAR(fv.s_color[m], sc[m], 1e-9);
}

TEST(ExtractFeatures, MonotoneInNoise) {
  const auto pc = surface_cloud(40, 1);
  const double diag = bounding_box(pc).diagonal();
  std::vector<double> prev;
  for (double frac : {0.001, 0.01, 0.1}) {
    const auto fv = extract_features(pc, jitter(pc, frac * diag, 0.0, 99), MetricConfig{});
    if (!prev.empty())
      for (std::size_t m = 0; m < 6; ++m) EXPECT_LE(fv.s_geom[m], prev[m]);
    prev = fv.s_geom;
  }
}

TEST(ExtractFeatures, PropagatesErrors) {
  PointCloud one;
  one.positions = {{0, 0, 0}};
  EXPECT_THROW(extract_features(one, one, MetricConfig{}), Error);
  PointCloud empty;
  EXPECT_THROW(extract_features(random_cloud(10, 1), empty, MetricConfig{}), Error);
}
