#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgwpcqa/error.hpp"

namespace sgwpcqa {

using Point3 = std::array<double, 3>;
using Rgb8 = std::array<std::uint8_t, 3>;

/// A point cloud as consumed by the quality pipeline: coordinates widened to
/// double, optional 8-bit color and the CIELAB lightness derived from it.
struct PointCloud {
  std::vector<Point3> positions;
  std::optional<std::vector<Rgb8>> rgb;
  std::optional<std::vector<double>> lightness;

  std::size_t size() const noexcept { return positions.size(); }
  bool has_lightness() const noexcept { return lightness.has_value(); }
  bool has_color() const noexcept { return lightness.has_value() || rgb.has_value(); }

  /// Coordinate signal along one axis (0 = x, 1 = y, 2 = z).
  std::vector<double> coordinate(std::size_t axis) const {
    std::vector<double> out(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) out[i] = positions[i][axis];
    return out;
  }

  void validate() const {
    if (positions.empty()) throw Error(ErrorCode::EmptyCloud, "point cloud has no points");
    for (std::size_t i = 0; i < positions.size(); ++i) {
      for (double c : positions[i]) {
        if (!std::isfinite(c))
          throw Error(ErrorCode::NonFinite, "non-finite coordinate at point " + std::to_string(i));
      }
    }
    if (rgb && rgb->size() != positions.size())
      throw Error(ErrorCode::LengthMismatch, "rgb row count differs from point count");
    if (lightness) {
      if (lightness->size() != positions.size())
        throw Error(ErrorCode::LengthMismatch, "lightness length differs from point count");
      for (double l : *lightness) {
        if (!std::isfinite(l)) throw Error(ErrorCode::NonFinite, "non-finite lightness value");
      }
    }
  }
};

namespace detail {

// sRGB transfer function inverse, input in [0,1].
inline double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  constexpr double delta3 = delta * delta * delta;
  return t > delta3 ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace detail

/// CIELAB L* of an sRGB color (D65 white). Only the Y row of the sRGB->XYZ
/// matrix is needed (derived from the sRGB primaries and D65 chromaticity
/// 0.3127, 0.3290); it is normalized by the white point so that
/// (255,255,255) maps to exactly 100.
inline double rgb_to_lightness(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  constexpr double kR = 0.2126390058715103, kG = 0.7151686787677559, kB = 0.07219231536073371;
  constexpr double white_y = kR + kG + kB;
  const double y = kR * detail::srgb_to_linear(r / 255.0) + kG * detail::srgb_to_linear(g / 255.0) +
                   kB * detail::srgb_to_linear(b / 255.0);
  const double l = 116.0 * detail::lab_f(y / white_y) - 16.0;
  return l < 0.0 ? 0.0 : (l > 100.0 ? 100.0 : l);
}

inline PointCloud compute_lightness(const PointCloud& pc) {
  if (!pc.rgb) throw Error(ErrorCode::MissingColor, "point cloud carries no rgb attribute");
  PointCloud out = pc;
  std::vector<double> lightness(pc.rgb->size());
  for (std::size_t i = 0; i < lightness.size(); ++i) {
    const auto& c = (*pc.rgb)[i];
    lightness[i] = rgb_to_lightness(c[0], c[1], c[2]);
  }
  out.lightness = std::move(lightness);
  return out;
}

/// Returns the cloud with lightness populated when it can be derived.
inline PointCloud with_lightness(PointCloud pc) {
  if (!pc.lightness && pc.rgb) return compute_lightness(pc);
  return pc;
}

struct BoundingBox {
  Point3 lo{};
  Point3 hi{};
  double diagonal() const {
    const double dx = hi[0] - lo[0], dy = hi[1] - lo[1], dz = hi[2] - lo[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
  }
};

inline BoundingBox bounding_box(const PointCloud& pc) {
  BoundingBox box;
  if (pc.positions.empty()) return box;
  box.lo = box.hi = pc.positions.front();
  for (const auto& p : pc.positions) {
    for (int a = 0; a < 3; ++a) {
      box.lo[a] = std::min(box.lo[a], p[a]);
      box.hi[a] = std::max(box.hi[a], p[a]);
    }
  }
  return box;
}

}  // namespace sgwpcqa
