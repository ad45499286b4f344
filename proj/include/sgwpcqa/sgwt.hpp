#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "sgwpcqa/chebyshev.hpp"
#include "sgwpcqa/error.hpp"
#include "sgwpcqa/filter_bank.hpp"
#include "sgwpcqa/graph.hpp"
#include "sgwpcqa/parallel.hpp"

namespace sgwpcqa {

/// Wavelet coefficients of one signal: bands x nodes, row-major.
struct SGWCoefficients {
  std::size_t bands = 0;
  std::size_t nodes = 0;
  std::vector<double> data;

  SGWCoefficients() = default;
  SGWCoefficients(std::size_t m, std::size_t n) : bands(m), nodes(n), data(m * n, 0.0) {}

  double& operator()(std::size_t m, std::size_t i) { return data[m * nodes + i]; }
  double operator()(std::size_t m, std::size_t i) const { return data[m * nodes + i]; }
  std::span<const double> band(std::size_t m) const { return std::span(data).subspan(m * nodes, nodes); }

  double squared_norm() const {
    double s = 0.0;
    for (double v : data) s += v * v;
    return s;
  }
};

inline constexpr std::size_t kExactSgwtLimit = 2000;
inline constexpr std::size_t kDefaultChebyshevOrder = 40;

/// Reference transform through a dense eigendecomposition of L:
/// Psi(m, .) = Phi g_m(Lambda) Phi^T f. Limited to small graphs.
inline SGWCoefficients sgwt_exact(const LaplacianOperator& L, std::span<const double> f, const FilterBank& bank) {
  const std::size_t n = L.size();
  if (n > kExactSgwtLimit)
    throw Error(ErrorCode::TooLarge, "exact SGWT limited to " + std::to_string(kExactSgwtLimit) + " nodes");
  if (f.size() != n) throw Error(ErrorCode::LengthMismatch, "signal length differs from node count");

  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const auto& g = L.graph();
  for (std::size_t i = 0; i < n; ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    dense(idx, idx) = L.degrees()[i];
    const auto cols = g.neighbors(i);
    const auto ws = g.neighbor_weights(i);
    for (std::size_t t = 0; t < cols.size(); ++t) dense(idx, static_cast<Eigen::Index>(cols[t])) = -ws[t];
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense);
  const Eigen::MatrixXd& phi = eig.eigenvectors();
  const Eigen::Map<const Eigen::VectorXd> fv(f.data(), static_cast<Eigen::Index>(n));
  const Eigen::VectorXd fhat = phi.transpose() * fv;

  SGWCoefficients out(bank.size(), n);
  std::vector<double> response(bank.size());
  Eigen::MatrixXd scaled(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(bank.size()));
  for (std::size_t l = 0; l < n; ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    bank.evaluate(eig.eigenvalues()(li), response);
    for (std::size_t m = 0; m < bank.size(); ++m) scaled(li, static_cast<Eigen::Index>(m)) = response[m] * fhat(li);
  }
  const Eigen::MatrixXd psi = phi * scaled;  // n x M
  for (std::size_t m = 0; m < bank.size(); ++m)
    for (std::size_t i = 0; i < n; ++i) out(m, i) = psi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m));
  return out;
}

/// Chebyshev transform of several signals in one recurrence sweep. `signals`
/// holds `count` signals node-major (signals[i * count + s]). Uses `order`
/// Laplacian applications to the block regardless of the band count.
inline std::vector<SGWCoefficients> sgwt_forward_block(const LaplacianOperator& L, std::span<const double> signals,
                                                       std::size_t count, const FilterBank& bank,
                                                       std::size_t order = kDefaultChebyshevOrder,
                                                       unsigned threads = 0) {
  const std::size_t n = L.size();
  if (signals.size() != n * count) throw Error(ErrorCode::LengthMismatch, "signal block size differs from nodes x count");
  for (double v : signals) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "non-finite graph signal value");
  }
  const ChebyshevApprox approx = approximate_filter_bank(bank, order);
  const std::size_t bands = bank.size();
  std::vector<SGWCoefficients> out(count, SGWCoefficients(bands, n));
  if (n == 0 || count == 0) return out;

  // Shifted operator (L - a I) / a maps the spectrum [0, 2a] onto [-1, 1].
  const double a = bank.lambda_max() / 2.0;
  std::vector<double> prev(signals.begin(), signals.end());
  std::vector<double> cur(n * count), next(n * count), lt(n * count);

  auto accumulate = [&](const std::vector<double>& tk, std::size_t k) {
    parallel_for_chunks(n, threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t m = 0; m < bands; ++m) {
        const double c = k == 0 ? approx.coefficients[m][0] / 2.0 : approx.coefficients[m][k];
        for (std::size_t s = 0; s < count; ++s) {
          double* dst = out[s].data.data() + m * n;
          for (std::size_t i = begin; i < end; ++i) dst[i] += c * tk[i * count + s];
        }
      }
    });
  };

  accumulate(prev, 0);
  L.apply_block(prev, lt, count);
  for (std::size_t t = 0; t < n * count; ++t) cur[t] = (lt[t] - a * prev[t]) / a;
  accumulate(cur, 1);
  for (std::size_t k = 2; k <= order; ++k) {
    L.apply_block(cur, lt, count);
    parallel_for_chunks(n, threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t t = begin * count; t < end * count; ++t)
        next[t] = 2.0 * (lt[t] - a * cur[t]) / a - prev[t];
    });
    accumulate(next, k);
    std::swap(prev, cur);
    std::swap(cur, next);
  }
  return out;
}

inline SGWCoefficients sgwt_forward(const LaplacianOperator& L, std::span<const double> f, const FilterBank& bank,
                                    std::size_t order = kDefaultChebyshevOrder, unsigned threads = 0) {
  if (f.size() != L.size()) throw Error(ErrorCode::LengthMismatch, "signal length differs from node count");
  return std::move(sgwt_forward_block(L, f, 1, bank, order, threads).front());
}

// Coefficient dump: 16-byte little-endian header {"SGWC", uint32 M, uint64 N}
// followed by M*N float64 values, row-major.
inline constexpr char kCoefficientMagic[4] = {'S', 'G', 'W', 'C'};

inline void write_coefficients(const std::filesystem::path& path, const SGWCoefficients& psi) {
  static_assert(std::endian::native == std::endian::little, "coefficient dump assumes a little-endian host");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  const auto m = static_cast<std::uint32_t>(psi.bands);
  const auto n = static_cast<std::uint64_t>(psi.nodes);
  out.write(kCoefficientMagic, 4);
  out.write(reinterpret_cast<const char*>(&m), sizeof m);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(psi.data.data()), static_cast<std::streamsize>(psi.data.size() * sizeof(double)));
  if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

inline SGWCoefficients read_coefficients(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  char magic[4];
  std::uint32_t m = 0;
  std::uint64_t n = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&m), sizeof m);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || std::memcmp(magic, kCoefficientMagic, 4) != 0)
    throw Error(ErrorCode::CorruptFile, "bad coefficient header in '" + path.string() + "'");
  SGWCoefficients psi(m, n);
  in.read(reinterpret_cast<char*>(psi.data.data()), static_cast<std::streamsize>(psi.data.size() * sizeof(double)));
  if (!in) throw Error(ErrorCode::CorruptFile, "truncated coefficient body in '" + path.string() + "'");
  return psi;
}

}  // namespace sgwpcqa
