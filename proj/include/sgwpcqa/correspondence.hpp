#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sgwpcqa/error.hpp"
#include "sgwpcqa/kdtree.hpp"
#include "sgwpcqa/parallel.hpp"
#include "sgwpcqa/pointcloud.hpp"

namespace sgwpcqa {

/// The distorted cloud re-indexed by the reference: entry i describes the
/// distorted point nearest to reference point i.
struct AssociatedCloud {
  std::vector<std::uint32_t> mapping;
  std::vector<double> x, y, z;
  std::optional<std::vector<double>> lightness;
  std::vector<double> squared_distances;

  std::size_t size() const noexcept { return mapping.size(); }
  const std::vector<double>& coordinate(std::size_t axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
};

/// Nearest-neighbor projection of `distorted` onto the reference indexing.
/// Many reference points may map to the same distorted point; ties go to the
/// lowest distorted index.
inline AssociatedCloud project(const PointCloud& reference, const PointCloud& distorted, unsigned threads = 0) {
  if (reference.size() == 0 || distorted.size() == 0)
    throw Error(ErrorCode::EmptyCloud, "projection needs two non-empty clouds");
  const std::size_t n = reference.size();
  const KdTree3 tree(distorted.positions);

  AssociatedCloud out;
  out.mapping.resize(n);
  out.squared_distances.resize(n);
  parallel_for_chunks(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Neighbor nb = tree.nearest(reference.positions[i]);
      out.mapping[i] = nb.index;
      out.squared_distances[i] = nb.dist2;
    }
  });
  out.x.resize(n);
  out.y.resize(n);
  out.z.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = distorted.positions[out.mapping[i]];
    out.x[i] = p[0];
    out.y[i] = p[1];
    out.z[i] = p[2];
  }
  if (distorted.lightness) {
    std::vector<double> l(n);
    for (std::size_t i = 0; i < n; ++i) l[i] = (*distorted.lightness)[out.mapping[i]];
    out.lightness = std::move(l);
  }
  return out;
}

}  // namespace sgwpcqa
