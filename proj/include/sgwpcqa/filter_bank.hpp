#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sgwpcqa/error.hpp"

namespace sgwpcqa {

/// M-band tight frame on [0, lambda_max] built from Meyer-type half-cosine
/// transitions. The spectrum is first warped to t in [0, 1] by the Chebyshev
/// angle t = 1 - arccos(2 lambda / lambda_max - 1) / pi, on which the band
/// centers are uniformly spaced; adjacent bands m, m+1 share the segment
/// between their centers as
///
///   g_m = cos(pi/2 * nu(s)),  g_{m+1} = sin(pi/2 * nu(s)),
///
/// with nu the Meyer auxiliary polynomial. Hence sum_m g_m^2 = 1 everywhere,
/// only adjacent bands overlap, g_1(0) = 1 and g_m(0) = 0 for m >= 2.
class FilterBank {
 public:
  FilterBank(std::size_t m_bands, double lambda_max) : m_bands_(m_bands), lambda_max_(lambda_max) {
    if (m_bands < 2) throw Error(ErrorCode::InvalidBandCount, "need at least 2 bands, got " + std::to_string(m_bands));
    if (!(lambda_max > 0.0) || !std::isfinite(lambda_max))
      throw Error(ErrorCode::InvalidArgument, "lambda_max must be positive and finite");
  }

  std::size_t size() const noexcept { return m_bands_; }
  double lambda_max() const noexcept { return lambda_max_; }

  /// Spectral position in [0, 1]; eigenvalues outside [0, lambda_max] clamp.
  double warp(double lambda) const {
    const double x = std::clamp(2.0 * lambda / lambda_max_ - 1.0, -1.0, 1.0);
    return 1.0 - std::acos(x) / std::numbers::pi;
  }

  static double meyer_nu(double s) {
    s = std::clamp(s, 0.0, 1.0);
    const double s2 = s * s;
    return std::clamp(s2 * s2 * (35.0 - 84.0 * s + 70.0 * s2 - 20.0 * s2 * s), 0.0, 1.0);
  }

  /// All M responses at lambda; out.size() must equal size().
  void evaluate(double lambda, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    const double t = warp(lambda);
    const double h = 1.0 / static_cast<double>(m_bands_ - 1);
    const auto seg = std::min<std::size_t>(static_cast<std::size_t>(t / h), m_bands_ - 2);
    const double s = (t - static_cast<double>(seg) * h) / h;
    const double angle = std::numbers::pi / 2.0 * meyer_nu(s);
    out[seg] = std::cos(angle);
    out[seg + 1] = std::sin(angle);
  }

  std::vector<double> evaluate(double lambda) const {
    std::vector<double> out(m_bands_);
    evaluate(lambda, out);
    return out;
  }

  /// Response of band m (0-based) at lambda.
  double operator()(std::size_t m, double lambda) const {
    std::vector<double> out(m_bands_);
    evaluate(lambda, out);
    return out.at(m);
  }

  /// Eigenvalue where bands m and m+1 (0-based) respond equally.
  double crossover(std::size_t m) const {
    const double h = 1.0 / static_cast<double>(m_bands_ - 1);
    const double t = (static_cast<double>(m) + 0.5) * h;
    return lambda_max_ * (1.0 - std::cos(std::numbers::pi * t)) / 2.0;
  }

 private:
  std::size_t m_bands_;
  double lambda_max_;
};

inline FilterBank design_filter_bank(std::size_t m_bands, double lambda_max) {
  return FilterBank(m_bands, lambda_max);
}

}  // namespace sgwpcqa
