#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "sgwpcqa/error.hpp"

namespace sgwpcqa {

/// Sample Pearson correlation.
inline double plcc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "correlation inputs differ in length");
  if (x.size() < 2) throw Error(ErrorCode::InsufficientData, "correlation needs at least two samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::ConstantInput, "correlation of a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> fractional_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = avg;
    i = j;
  }
  return ranks;
}

/// Spearman rank-order correlation (Pearson correlation of fractional ranks).
inline double srocc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "correlation inputs differ in length");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  return plcc(rx, ry);
}

/// Four-parameter logistic  b2 + (b1 - b2) / (1 + exp(-(x - b3) / |b4|)).
struct LogisticMap {
  double b1 = 1.0, b2 = 0.0, b3 = 0.0, b4 = 1.0;

  double operator()(double x) const { return b2 + (b1 - b2) / (1.0 + std::exp(-(x - b3) / std::abs(b4))); }
};

/// Least-squares fit of LogisticMap from x to y by Levenberg-Marquardt.
inline LogisticMap fit_logistic(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "logistic fit inputs differ in length");
  if (x.size() < 4) throw Error(ErrorCode::InsufficientData, "logistic fit needs at least four samples");
  const auto n = static_cast<Eigen::Index>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double sx = 0.0;
  for (double v : x) sx += (v - mx) * (v - mx);
  sx = std::sqrt(sx / static_cast<double>(x.size()));
  if (sx == 0.0) throw Error(ErrorCode::ConstantInput, "logistic fit of a constant predictor");

  Eigen::Vector4d beta(*std::max_element(y.begin(), y.end()), *std::min_element(y.begin(), y.end()), mx, sx);
  auto residuals = [&](const Eigen::Vector4d& b) {
    const LogisticMap f{b[0], b[1], b[2], b[3]};
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = f(x[static_cast<std::size_t>(i)]) - y[static_cast<std::size_t>(i)];
    return r;
  };
  Eigen::VectorXd r = residuals(beta);
  double cost = r.squaredNorm();
  double mu = 1e-3;
  for (int it = 0; it < 200; ++it) {
    Eigen::MatrixXd J(n, 4);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double xi = x[static_cast<std::size_t>(i)];
      const double s4 = std::abs(beta[3]);
      const double e = std::exp(-(xi - beta[2]) / s4);
      const double q = 1.0 / (1.0 + e);
      J(i, 0) = q;
      J(i, 1) = 1.0 - q;
      const double dq = q * q * e;  // d q / d((x - b3)/|b4|)
      J(i, 2) = (beta[0] - beta[1]) * dq * (-1.0 / s4);
      J(i, 3) = (beta[0] - beta[1]) * dq * (-(xi - beta[2]) / (s4 * s4)) * (beta[3] < 0 ? -1.0 : 1.0);
    }
    const Eigen::Matrix4d jtj = J.transpose() * J;
    const Eigen::Vector4d jtr = J.transpose() * r;
    bool improved = false;
    for (int inner = 0; inner < 20; ++inner) {
      Eigen::Matrix4d a = jtj;
      a.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::Vector4d step = a.ldlt().solve(-jtr);
      const Eigen::Vector4d candidate = beta + step;
      if (candidate[3] == 0.0) {
        mu *= 10.0;
        continue;
      }
      const Eigen::VectorXd rc = residuals(candidate);
      const double cc = rc.squaredNorm();
      if (std::isfinite(cc) && cc < cost) {
        const bool tiny = cost - cc <= 1e-15 * std::max(1.0, cost);
        beta = candidate;
        r = rc;
        cost = cc;
        mu = std::max(mu / 10.0, 1e-12);
        improved = !tiny;
        break;
      }
      mu *= 10.0;
    }
    if (!improved) break;
  }
  return {beta[0], beta[1], beta[2], beta[3]};
}

/// PLCC after mapping x through a fitted logistic.
inline double plcc_logistic(std::span<const double> x, std::span<const double> y) {
  const LogisticMap f = fit_logistic(x, y);
  std::vector<double> mapped(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) mapped[i] = f(x[i]);
  return plcc(mapped, y);
}

}  // namespace sgwpcqa
