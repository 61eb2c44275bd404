#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "peri/volume.hpp"

namespace peri::rad {

struct FeatureSpec {
  double bin_width = 25.0;  // HU
  int glcm_distance = 1;    // voxels
  bool shape = true;
  bool firstorder = true;
  bool glcm = true;
  bool glrlm = true;

  void validate() const;
};

/// Fixed-bin-width gray levels on the mask's grid: level(x) = floor((x - min) / W) + 1
/// inside the mask, 0 outside.
struct DiscretizedROI {
  Dims dims;
  std::vector<std::int32_t> levels;
  int n_levels = 0;
  double bin_width = 0.0;
  double min_masked = 0.0;
  std::size_t n_voxels = 0;

  std::int32_t at(std::int64_t x, std::int64_t y, std::int64_t z) const { return levels[dims.index(x, y, z)]; }
};

using NamedValues = std::vector<std::pair<std::string, double>>;

/// The 13 unique 3D neighbour offsets.
const std::array<Index3, 13>& directions();

/// Canonical feature order: shape (7), firstorder (16), glcm (9), glrlm (7).
const std::vector<std::string>& feature_names();
inline constexpr std::size_t kFeatureCount = 39;

DiscretizedROI discretize(const Volume3D& volume, const Mask3D& mask, double bin_width);

NamedValues firstorder_features(const Volume3D& volume, const Mask3D& mask, const DiscretizedROI& droi);

/// Voxel-face surface area; covariance eigenvalues for elongation/flatness.
NamedValues shape_features(const Mask3D& mask, const Spacing& spacing, int threads = 0);

/// Largest centre-to-centre distance (mm) between surface voxels. Candidates
/// are pruned to row extremes, which always include the diameter pair, and
/// scanned on OpenMP threads.
double max_3d_diameter(const Mask3D& mask, const Spacing& spacing, int threads = 0);

namespace serial {
/// Exhaustive scan over all surface voxel pairs.
double max_3d_diameter(const Mask3D& mask, const Spacing& spacing);
}  // namespace serial

/// Symmetric co-occurrence at `distance` voxels, averaged over directions that
/// have pairs. Throws NoValidPairs when no direction does.
NamedValues glcm_features(const DiscretizedROI& droi, int distance = 1);

/// Run-length features averaged over the 13 directions. Throws EmptyMask.
NamedValues glrlm_features(const DiscretizedROI& droi);

struct FeatureVector {
  std::vector<std::string> names;
  std::vector<double> values;
  bool glcm_fallback = false;  // GLCM had no valid pairs and was zero-filled

  std::size_t size() const { return values.size(); }
  /// Throws InvalidArgument for unknown names.
  double value(std::string_view name) const;
  bool operator==(const FeatureVector&) const = default;
};

/// All 39 features of `volume` restricted to `mask`; families disabled in
/// `spec` are zero-filled so the layout never changes.
FeatureVector extract(const Volume3D& volume, const Mask3D& mask, const FeatureSpec& spec = {}, int threads = 0);

}  // namespace peri::rad
