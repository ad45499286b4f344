#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

#include "sgwpcqa/error.hpp"
#include "sgwpcqa/filter_bank.hpp"

namespace sgwpcqa {

/// Chebyshev series coefficients of kernel(lambda) on [0, lambda_max], with
/// the convention p(x) = c_0/2 + sum_{k>=1} c_k T_k(x) and
/// x = 2 lambda / lambda_max - 1. Computed by cosine quadrature at the
/// order+1 Chebyshev points.
inline std::vector<double> chebyshev_coefficients(const std::function<double(double)>& kernel, std::size_t order,
                                                  double lambda_max) {
  if (order < 1) throw Error(ErrorCode::InvalidArgument, "Chebyshev order must be at least 1");
  const std::size_t n = order + 1;
  const double half = lambda_max / 2.0;
  std::vector<double> samples(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double theta = std::numbers::pi * (static_cast<double>(j) + 0.5) / static_cast<double>(n);
    samples[j] = kernel(half * (std::cos(theta) + 1.0));
  }
  std::vector<double> c(n);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double theta = std::numbers::pi * (static_cast<double>(j) + 0.5) / static_cast<double>(n);
      s += samples[j] * std::cos(static_cast<double>(k) * theta);
    }
    c[k] = 2.0 * s / static_cast<double>(n);
  }
  return c;
}

/// Clenshaw evaluation of a series produced by chebyshev_coefficients.
inline double chebyshev_evaluate(const std::vector<double>& c, double lambda, double lambda_max) {
  const double x = 2.0 * lambda / lambda_max - 1.0;
  double b1 = 0.0, b2 = 0.0;
  for (std::size_t k = c.size(); k-- > 1;) {
    const double b0 = 2.0 * x * b1 - b2 + c[k];
    b2 = b1;
    b1 = b0;
  }
  return x * b1 - b2 + c[0] / 2.0;
}

/// Per-band Chebyshev expansions of a filter bank.
struct ChebyshevApprox {
  std::size_t order = 0;
  double lambda_max = 0.0;
  std::vector<std::vector<double>> coefficients;  // [band][k], k = 0..order

  double evaluate(std::size_t band, double lambda) const {
    return chebyshev_evaluate(coefficients.at(band), lambda, lambda_max);
  }
};

inline ChebyshevApprox approximate_filter_bank(const FilterBank& bank, std::size_t order) {
  ChebyshevApprox approx;
  approx.order = order;
  approx.lambda_max = bank.lambda_max();
  for (std::size_t m = 0; m < bank.size(); ++m) {
    approx.coefficients.push_back(
        chebyshev_coefficients([&](double lambda) { return bank(m, lambda); }, order, bank.lambda_max()));
  }
  return approx;
}

}  // namespace sgwpcqa
