#pragma once

#include <cstdint>
#include <vector>

#include "peri/volume.hpp"

namespace peri::morph {

/// Distance in mm from each voxel centre to the nearest foreground voxel centre.
struct DistanceMap {
  Dims dims;
  Spacing spacing;
  std::vector<double> mm;

  double at(std::int64_t x, std::int64_t y, std::int64_t z) const { return mm[dims.index(x, y, z)]; }
};

/// Exact anisotropic Euclidean distance transform (separable lower-envelope
/// passes over squared distances). Lines of each pass run on OpenMP threads;
/// the result does not depend on the thread count. Throws EmptyMask.
DistanceMap edt(const Mask3D& mask, int threads = 0);
DistanceMap edt(const Mask3D& mask, const Spacing& spacing, int threads = 0);

namespace serial {
/// Single-threaded reference for edt(); bitwise identical output.
DistanceMap edt(const Mask3D& mask, const Spacing& spacing);
}  // namespace serial

/// Tolerance added to the radius so integer-radius lattice points are included.
inline constexpr double kRadiusEpsilon = 1e-9;

/// mask plus every voxel within r_mm (centre to centre). r_mm = 0 returns the
/// input unchanged. Throws EmptyMask, InvalidRange (r_mm < 0).
Mask3D dilate_mm(const Mask3D& mask, double r_mm);

/// Dilation from a precomputed distance map of `mask`; lets sweeps reuse one EDT.
Mask3D dilate_from_distance(const Mask3D& mask, const DistanceMap& distance, double r_mm);

/// dilate_mm(mask, r_outer) minus dilate_mm(mask, r_inner); requires 0 <= r_inner < r_outer.
Mask3D shell_mm(const Mask3D& mask, double r_inner, double r_outer);

struct Components {
  std::vector<std::int32_t> labels;  // 0 background, 1..count in first-visit index order
  std::vector<std::size_t> sizes;    // sizes[c - 1] is the voxel count of label c

  std::size_t count() const { return sizes.size(); }
};

/// Labels foreground voxels with 6- or 26-connectivity.
Components connected_components(const Mask3D& mask, int connectivity = 26);

}  // namespace peri::morph
