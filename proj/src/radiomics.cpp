#include "peri/radiomics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <omp.h>

#include "peri/error.hpp"
#include "peri/stats.hpp"

namespace peri::rad {

void FeatureSpec::validate() const {
  if (!(bin_width > 0.0)) fail(ErrorKind::InvalidArgument, "bin_width must be > 0");
  if (glcm_distance < 1) fail(ErrorKind::InvalidArgument, "glcm_distance must be >= 1");
}

const std::array<Index3, 13>& directions() {
  static const std::array<Index3, 13> dirs = {{{1, 0, 0},
                                               {0, 1, 0},
                                               {0, 0, 1},
                                               {1, 1, 0},
                                               {1, -1, 0},
                                               {1, 0, 1},
                                               {1, 0, -1},
                                               {0, 1, 1},
                                               {0, 1, -1},
                                               {1, 1, 1},
                                               {1, 1, -1},
                                               {1, -1, 1},
                                               {1, -1, -1}}};
  return dirs;
}

namespace {

const std::vector<std::string> kShape = {"volume_mm3", "surface_area_mm2", "surface_volume_ratio", "sphericity",
                                         "max_3d_diameter", "elongation", "flatness"};
const std::vector<std::string> kFirstOrder = {"mean",
                                              "median",
                                              "minimum",
                                              "maximum",
                                              "range",
                                              "variance",
                                              "skewness",
                                              "kurtosis",
                                              "energy",
                                              "root_mean_squared",
                                              "mean_absolute_deviation",
                                              "entropy",
                                              "uniformity",
                                              "percentile10",
                                              "percentile90",
                                              "interquartile_range"};
const std::vector<std::string> kGlcm = {"contrast",    "dissimilarity",
                                        "joint_energy", "joint_entropy",
                                        "homogeneity", "inverse_difference_moment",
                                        "correlation", "cluster_shade",
                                        "cluster_prominence"};
const std::vector<std::string> kGlrlm = {"short_run_emphasis",         "long_run_emphasis",
                                         "gray_level_nonuniformity",   "run_length_nonuniformity",
                                         "run_percentage",             "low_gray_level_run_emphasis",
                                         "high_gray_level_run_emphasis"};

NamedValues zeros(const std::string& prefix, const std::vector<std::string>& names) {
  NamedValues out;
  for (const auto& n : names) out.emplace_back(prefix + n, 0.0);
  return out;
}

// Exposed faces in the 6-neighbourhood of voxel (x, y, z).
int exposed_faces(const Mask3D& m, std::int64_t x, std::int64_t y, std::int64_t z, int axis_counts[3]) {
  const Dims& d = m.dims();
  auto bg = [&](std::int64_t a, std::int64_t b, std::int64_t c) { return !d.contains(a, b, c) || !m.at(a, b, c); };
  axis_counts[0] = bg(x - 1, y, z) + bg(x + 1, y, z);
  axis_counts[1] = bg(x, y - 1, z) + bg(x, y + 1, z);
  axis_counts[2] = bg(x, y, z - 1) + bg(x, y, z + 1);
  return axis_counts[0] + axis_counts[1] + axis_counts[2];
}

struct Points {
  std::vector<double> x, y, z;
  void push(double a, double b, double c) {
    x.push_back(a);
    y.push_back(b);
    z.push_back(c);
  }
  std::size_t size() const { return x.size(); }
};

double max_pair_d2(const Points& p, std::size_t i) {
  double best = 0.0;
  for (std::size_t j = i + 1; j < p.size(); ++j) {
    const double dx = p.x[i] - p.x[j];
    const double dy = p.y[i] - p.y[j];
    const double dz = p.z[i] - p.z[j];
    best = std::max(best, dx * dx + dy * dy + dz * dz);
  }
  return best;
}

}  // namespace

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& n : kShape) out.push_back("shape." + n);
    for (const auto& n : kFirstOrder) out.push_back("firstorder." + n);
    for (const auto& n : kGlcm) out.push_back("glcm." + n);
    for (const auto& n : kGlrlm) out.push_back("glrlm." + n);
    return out;
  }();
  return names;
}

double FeatureVector::value(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[i];
  fail(ErrorKind::InvalidArgument, "unknown feature '" + std::string(name) + "'");
}

DiscretizedROI discretize(const Volume3D& volume, const Mask3D& mask, double bin_width) {
  if (!(bin_width > 0.0)) fail(ErrorKind::InvalidArgument, "bin_width must be > 0");
  if (volume.dims() != mask.dims()) fail(ErrorKind::DimensionMismatch, "mask does not match volume");
  DiscretizedROI out;
  out.dims = mask.dims();
  out.bin_width = bin_width;
  out.levels.assign(mask.size(), 0);
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      lo = std::min(lo, static_cast<double>(volume[i]));
      ++out.n_voxels;
    }
  if (out.n_voxels == 0) fail(ErrorKind::EmptyMask, "discretize on an empty mask");
  out.min_masked = lo;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const auto level = static_cast<std::int32_t>(std::floor((static_cast<double>(volume[i]) - lo) / bin_width)) + 1;
    out.levels[i] = level;
    out.n_levels = std::max(out.n_levels, static_cast<int>(level));
  }
  return out;
}

NamedValues firstorder_features(const Volume3D& volume, const Mask3D& mask, const DiscretizedROI& droi) {
  std::vector<double> v;
  std::vector<std::size_t> level_counts(static_cast<std::size_t>(droi.n_levels) + 1, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    v.push_back(volume[i]);
    ++level_counts[static_cast<std::size_t>(droi.levels[i])];
  }
  if (v.empty()) fail(ErrorKind::EmptyMask, "first-order features on an empty mask");
  const double n = static_cast<double>(v.size());
  std::sort(v.begin(), v.end());

  const double mean = stats::mean(v);
  double m2 = 0, m3 = 0, m4 = 0, energy = 0, mad = 0;
  for (double x : v) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    energy += x * x;
    mad += std::abs(d);
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  mad /= n;
  const bool degenerate = v.front() == v.back() || !(m2 > 0.0);
  const double variance = degenerate ? 0.0 : m2;
  const double skewness = degenerate ? 0.0 : m3 / std::pow(m2, 1.5);
  const double kurtosis = degenerate ? 0.0 : m4 / (m2 * m2);

  double entropy = 0.0, uniformity = 0.0;
  for (std::size_t c : level_counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    entropy -= p * std::log2(p);
    uniformity += p * p;
  }

  const double p25 = stats::percentile_sorted(v, 0.25);
  const double p75 = stats::percentile_sorted(v, 0.75);
  const std::vector<double> values = {mean,
                                      stats::percentile_sorted(v, 0.5),
                                      v.front(),
                                      v.back(),
                                      v.back() - v.front(),
                                      variance,
                                      skewness,
                                      kurtosis,
                                      energy,
                                      std::sqrt(energy / n),
                                      degenerate ? 0.0 : mad,
                                      entropy == 0.0 ? 0.0 : entropy,
                                      uniformity,
                                      stats::percentile_sorted(v, 0.10),
                                      stats::percentile_sorted(v, 0.90),
                                      p75 - p25};
  NamedValues out;
  for (std::size_t i = 0; i < kFirstOrder.size(); ++i) out.emplace_back("firstorder." + kFirstOrder[i], values[i]);
  return out;
}

namespace serial {

double max_3d_diameter(const Mask3D& mask, const Spacing& spacing) {
  const Dims& d = mask.dims();
  Points p;
  int axis[3];
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x)
        if (mask.at(x, y, z) && exposed_faces(mask, x, y, z, axis) > 0)
          p.push(static_cast<double>(x) * spacing.x, static_cast<double>(y) * spacing.y,
                 static_cast<double>(z) * spacing.z);
  double best = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) best = std::max(best, max_pair_d2(p, i));
  return std::sqrt(best);
}

}  // namespace serial

double max_3d_diameter(const Mask3D& mask, const Spacing& spacing, int threads) {
  // A voxel strictly inside a row of mask voxels lies on a segment between two
  // others, so it cannot be an endpoint of the diameter (|p - q|^2 is strictly
  // convex along the row). Row extremes are always surface voxels.
  const Dims& d = mask.dims();
  Points p;
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y) {
      std::int64_t first = -1, last = -1;
      for (std::int64_t x = 0; x < d.nx; ++x)
        if (mask.at(x, y, z)) {
          if (first < 0) first = x;
          last = x;
        }
      if (first < 0) continue;
      const double yy = static_cast<double>(y) * spacing.y;
      const double zz = static_cast<double>(z) * spacing.z;
      p.push(static_cast<double>(first) * spacing.x, yy, zz);
      if (last != first) p.push(static_cast<double>(last) * spacing.x, yy, zz);
    }
  const auto n = static_cast<std::int64_t>(p.size());
  double best = 0.0;
#pragma omp parallel for schedule(dynamic, 16) reduction(max : best) \
    num_threads(threads > 0 ? threads : omp_get_max_threads())
  for (std::int64_t i = 0; i < n; ++i) best = std::max(best, max_pair_d2(p, static_cast<std::size_t>(i)));
  return std::sqrt(best);
}

NamedValues shape_features(const Mask3D& mask, const Spacing& spacing, int threads) {
  const Dims& d = mask.dims();
  const double face_area[3] = {spacing.y * spacing.z, spacing.x * spacing.z, spacing.x * spacing.y};
  std::size_t count = 0;
  double area = 0.0;
  double sx = 0, sy = 0, sz = 0;
  int axis[3];
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x) {
        if (!mask.at(x, y, z)) continue;
        ++count;
        exposed_faces(mask, x, y, z, axis);
        area += axis[0] * face_area[0] + axis[1] * face_area[1] + axis[2] * face_area[2];
        sx += static_cast<double>(x) * spacing.x;
        sy += static_cast<double>(y) * spacing.y;
        sz += static_cast<double>(z) * spacing.z;
      }
  if (count == 0) fail(ErrorKind::EmptyMask, "shape features on an empty mask");
  const double n = static_cast<double>(count);
  const double volume = n * spacing.x * spacing.y * spacing.z;
  const double sphericity = std::cbrt(std::numbers::pi) * std::pow(6.0 * volume, 2.0 / 3.0) / area;

  const double cx = sx / n, cy = sy / n, cz = sz / n;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x) {
        if (!mask.at(x, y, z)) continue;
        const Eigen::Vector3d r(static_cast<double>(x) * spacing.x - cx, static_cast<double>(y) * spacing.y - cy,
                                static_cast<double>(z) * spacing.z - cz);
        cov += r * r.transpose();
      }
  cov /= n;
  double elongation = 1.0, flatness = 1.0;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov, Eigen::EigenvaluesOnly);
  const Eigen::Vector3d ev = eig.eigenvalues();  // ascending
  const double l1 = std::max(ev[2], 0.0);
  const double l2 = std::max(ev[1], 0.0);
  const double l3 = std::max(ev[0], 0.0);
  if (l1 > 0.0) {
    elongation = std::sqrt(l2 / l1);
    flatness = std::sqrt(l3 / l1);
  }

  const std::vector<double> values = {volume, area, area / volume, sphericity, max_3d_diameter(mask, spacing, threads),
                                      elongation, flatness};
  NamedValues out;
  for (std::size_t i = 0; i < kShape.size(); ++i) out.emplace_back("shape." + kShape[i], values[i]);
  return out;
}

NamedValues glcm_features(const DiscretizedROI& droi, int distance) {
  if (distance < 1) fail(ErrorKind::InvalidArgument, "glcm distance must be >= 1");
  const Dims& d = droi.dims;
  const auto ng = static_cast<std::size_t>(droi.n_levels);
  std::vector<double> sums(kGlcm.size(), 0.0);
  int used = 0;
  std::vector<double> p(ng * ng);
  for (const Index3& dir : directions()) {
    std::fill(p.begin(), p.end(), 0.0);
    const std::int64_t ox = dir.x * distance, oy = dir.y * distance, oz = dir.z * distance;
    double total = 0.0;
    for (std::int64_t z = 0; z < d.nz; ++z)
      for (std::int64_t y = 0; y < d.ny; ++y)
        for (std::int64_t x = 0; x < d.nx; ++x) {
          const std::int32_t a = droi.at(x, y, z);
          if (a == 0 || !d.contains(x + ox, y + oy, z + oz)) continue;
          const std::int32_t b = droi.at(x + ox, y + oy, z + oz);
          if (b == 0) continue;
          p[(a - 1) * ng + (b - 1)] += 1.0;
          p[(b - 1) * ng + (a - 1)] += 1.0;
          total += 2.0;
        }
    if (total == 0.0) continue;
    ++used;
    for (double& v : p) v /= total;

    double mu = 0.0;
    for (std::size_t i = 0; i < ng; ++i)
      for (std::size_t j = 0; j < ng; ++j) mu += p[i * ng + j] * static_cast<double>(i + 1);
    double var = 0.0;
    for (std::size_t i = 0; i < ng; ++i)
      for (std::size_t j = 0; j < ng; ++j) {
        const double di = static_cast<double>(i + 1) - mu;
        var += p[i * ng + j] * di * di;
      }
    double f[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
    for (std::size_t i = 0; i < ng; ++i)
      for (std::size_t j = 0; j < ng; ++j) {
        const double pij = p[i * ng + j];
        if (pij == 0.0) continue;
        const double fi = static_cast<double>(i + 1), fj = static_cast<double>(j + 1);
        const double diff = fi - fj;
        const double s = fi + fj - 2.0 * mu;
        f[0] += pij * diff * diff;
        f[1] += pij * std::abs(diff);
        f[2] += pij * pij;
        f[3] -= pij * std::log2(pij);
        f[4] += pij / (1.0 + std::abs(diff));
        f[5] += pij / (1.0 + diff * diff);
        f[6] += pij * (fi - mu) * (fj - mu);
        f[7] += pij * s * s * s;
        f[8] += pij * s * s * s * s;
      }
    // zero marginal variance: correlation is defined as 0
    f[6] = var > 1e-12 ? f[6] / var : 0.0;
    for (std::size_t k = 0; k < kGlcm.size(); ++k) sums[k] += f[k];
  }
  if (used == 0) fail(ErrorKind::NoValidPairs, "no in-mask voxel pairs in any direction");
  NamedValues out;
  for (std::size_t k = 0; k < kGlcm.size(); ++k) out.emplace_back("glcm." + kGlcm[k], sums[k] / used);
  return out;
}

NamedValues glrlm_features(const DiscretizedROI& droi) {
  if (droi.n_voxels == 0) fail(ErrorKind::EmptyMask, "run-length features on an empty mask");
  const Dims& d = droi.dims;
  const auto ng = static_cast<std::size_t>(droi.n_levels);
  const auto max_len = static_cast<std::size_t>(std::max({d.nx, d.ny, d.nz}));
  std::vector<double> sums(kGlrlm.size(), 0.0);
  std::vector<double> r(ng * (max_len + 1));
  for (const Index3& dir : directions()) {
    std::fill(r.begin(), r.end(), 0.0);
    double runs = 0.0;
    for (std::int64_t z = 0; z < d.nz; ++z)
      for (std::int64_t y = 0; y < d.ny; ++y)
        for (std::int64_t x = 0; x < d.nx; ++x) {
          const std::int32_t g = droi.at(x, y, z);
          if (g == 0) continue;
          const std::int64_t px = x - dir.x, py = y - dir.y, pz = z - dir.z;
          if (d.contains(px, py, pz) && droi.at(px, py, pz) == g) continue;  // not a run start
          std::size_t len = 1;
          std::int64_t qx = x + dir.x, qy = y + dir.y, qz = z + dir.z;
          while (d.contains(qx, qy, qz) && droi.at(qx, qy, qz) == g) {
            ++len;
            qx += dir.x;
            qy += dir.y;
            qz += dir.z;
          }
          r[static_cast<std::size_t>(g - 1) * (max_len + 1) + len] += 1.0;
          runs += 1.0;
        }
    double sre = 0, lre = 0, gln = 0, rln = 0, lglre = 0, hglre = 0;
    for (std::size_t g = 0; g < ng; ++g) {
      double row = 0.0;
      const double gg = static_cast<double>(g + 1);
      for (std::size_t l = 1; l <= max_len; ++l) {
        const double c = r[g * (max_len + 1) + l];
        if (c == 0.0) continue;
        const double ll = static_cast<double>(l);
        sre += c / (ll * ll);
        lre += c * ll * ll;
        lglre += c / (gg * gg);
        hglre += c * gg * gg;
        row += c;
      }
      gln += row * row;
    }
    for (std::size_t l = 1; l <= max_len; ++l) {
      double col = 0.0;
      for (std::size_t g = 0; g < ng; ++g) col += r[g * (max_len + 1) + l];
      rln += col * col;
    }
    const double f[7] = {sre / runs,  lre / runs,   gln / runs, rln / runs, runs / static_cast<double>(droi.n_voxels),
                         lglre / runs, hglre / runs};
    for (std::size_t k = 0; k < kGlrlm.size(); ++k) sums[k] += f[k];
  }
  NamedValues out;
  const double nd = static_cast<double>(directions().size());
  for (std::size_t k = 0; k < kGlrlm.size(); ++k) out.emplace_back("glrlm." + kGlrlm[k], sums[k] / nd);
  return out;
}

FeatureVector extract(const Volume3D& volume, const Mask3D& mask, const FeatureSpec& spec, int threads) {
  spec.validate();
  if (volume.dims() != mask.dims()) fail(ErrorKind::DimensionMismatch, "mask does not match volume");
  // Work on the mask's tight box: every feature is translation invariant, and
  // identical cropped inputs make shifted cases bitwise identical.
  const BoundingBox box = mask.bounds();
  const Region region{box.min, box.extent()};
  const Volume3D v = extract_region(volume, region);
  const Mask3D m = extract_region(mask, region);
  const DiscretizedROI droi = discretize(v, m, spec.bin_width);

  FeatureVector fv;
  auto append = [&](const NamedValues& nv) {
    for (const auto& [name, value] : nv) {
      fv.names.push_back(name);
      fv.values.push_back(value);
    }
  };
  append(spec.shape ? shape_features(m, volume.spacing(), threads) : zeros("shape.", kShape));
  append(spec.firstorder ? firstorder_features(v, m, droi) : zeros("firstorder.", kFirstOrder));
  if (spec.glcm) {
    try {
      append(glcm_features(droi, spec.glcm_distance));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoValidPairs) throw;
      fv.glcm_fallback = true;
      append(zeros("glcm.", kGlcm));
    }
  } else {
    append(zeros("glcm.", kGlcm));
  }
  append(spec.glrlm ? glrlm_features(droi) : zeros("glrlm.", kGlrlm));

  for (std::size_t i = 0; i < fv.values.size(); ++i)
    if (!std::isfinite(fv.values[i])) fail(ErrorKind::NumericalFailure, "feature " + fv.names[i] + " is not finite");
  return fv;
}

}  // namespace peri::rad
