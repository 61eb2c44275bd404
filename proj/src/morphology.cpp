#include "peri/morphology.hpp"

#include <array>
#include <cmath>
#include <limits>

#include <omp.h>

#include "peri/error.hpp"

namespace peri::morph {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct LineScratch {
  std::vector<double> f;
  std::vector<double> d;
  std::vector<std::int64_t> v;
  std::vector<double> z;

  explicit LineScratch(std::int64_t n)
      : f(static_cast<std::size_t>(n)),
        d(static_cast<std::size_t>(n)),
        v(static_cast<std::size_t>(n)),
        z(static_cast<std::size_t>(n) + 1) {}
};

// d[q] = min_p w2 * (q - p)^2 + f[p], skipping p with f[p] = inf.
void lower_envelope(LineScratch& s, std::int64_t n, double w2) {
  std::int64_t k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    const double fq = s.f[q];
    if (fq == kInf) continue;
    if (k < 0) {
      k = 0;
      s.v[0] = q;
      s.z[0] = -kInf;
      s.z[1] = kInf;
      continue;
    }
    auto intersect = [&](std::int64_t p) {
      return ((fq + w2 * static_cast<double>(q * q)) - (s.f[p] + w2 * static_cast<double>(p * p))) /
             (2.0 * w2 * static_cast<double>(q - p));
    };
    // z[0] is -inf, so the loop stops at k = 0 at the latest
    double sep = intersect(s.v[k]);
    while (sep <= s.z[k]) {
      --k;
      sep = intersect(s.v[k]);
    }
    ++k;
    s.v[k] = q;
    s.z[k] = sep;
    s.z[k + 1] = kInf;
  }
  if (k < 0) {
    for (std::int64_t q = 0; q < n; ++q) s.d[q] = kInf;
    return;
  }
  std::int64_t j = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (s.z[j + 1] < static_cast<double>(q)) ++j;
    const std::int64_t p = s.v[j];
    const double dq = static_cast<double>(q - p);
    s.d[q] = w2 * dq * dq + s.f[p];
  }
}

// One pass along `axis`: each line is gathered, transformed and scattered back.
void transform_line(std::vector<double>& sq, const Dims& dims, int axis, double w2, std::int64_t line,
                    LineScratch& s) {
  const std::int64_t n[3] = {dims.nx, dims.ny, dims.nz};
  const std::int64_t len = n[axis];
  std::int64_t base = 0;
  std::int64_t stride = 1;
  if (axis == 0) {
    base = line * dims.nx;
    stride = 1;
  } else if (axis == 1) {
    const std::int64_t x = line % dims.nx;
    const std::int64_t z = line / dims.nx;
    base = x + dims.nx * dims.ny * z;
    stride = dims.nx;
  } else {
    base = line;
    stride = dims.nx * dims.ny;
  }
  for (std::int64_t i = 0; i < len; ++i) s.f[i] = sq[static_cast<std::size_t>(base + i * stride)];
  lower_envelope(s, len, w2);
  for (std::int64_t i = 0; i < len; ++i) sq[static_cast<std::size_t>(base + i * stride)] = s.d[i];
}

std::int64_t line_count(const Dims& dims, int axis) {
  const std::int64_t n[3] = {dims.nx, dims.ny, dims.nz};
  return static_cast<std::int64_t>(dims.count()) / n[axis];
}

std::vector<double> seed_squared(const Mask3D& mask) {
  if (mask.empty()) fail(ErrorKind::EmptyMask, "distance transform of an empty mask");
  std::vector<double> sq(mask.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = mask[i] ? 0.0 : kInf;
  return sq;
}

DistanceMap finish(const Mask3D& mask, const Spacing& spacing, std::vector<double> sq) {
  for (double& v : sq) v = std::sqrt(v);
  return {mask.dims(), spacing, std::move(sq)};
}

}  // namespace

DistanceMap edt(const Mask3D& mask, const Spacing& spacing, int threads) {
  std::vector<double> sq = seed_squared(mask);
  const Dims& dims = mask.dims();
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
  const std::int64_t n_max = std::max({dims.nx, dims.ny, dims.nz});
  for (int axis = 0; axis < 3; ++axis) {
    const double w2 = spacing[axis] * spacing[axis];
    const std::int64_t lines = line_count(dims, axis);
#pragma omp parallel num_threads(nthreads)
    {
      LineScratch s(n_max);
#pragma omp for schedule(static)
      for (std::int64_t line = 0; line < lines; ++line) transform_line(sq, dims, axis, w2, line, s);
    }
  }
  return finish(mask, spacing, std::move(sq));
}

DistanceMap edt(const Mask3D& mask, int threads) { return edt(mask, mask.spacing(), threads); }

namespace serial {

DistanceMap edt(const Mask3D& mask, const Spacing& spacing) {
  std::vector<double> sq = seed_squared(mask);
  const Dims& dims = mask.dims();
  LineScratch s(std::max({dims.nx, dims.ny, dims.nz}));
  for (int axis = 0; axis < 3; ++axis) {
    const double w2 = spacing[axis] * spacing[axis];
    const std::int64_t lines = line_count(dims, axis);
    for (std::int64_t line = 0; line < lines; ++line) transform_line(sq, dims, axis, w2, line, s);
  }
  return finish(mask, spacing, std::move(sq));
}

}  // namespace serial

Mask3D dilate_from_distance(const Mask3D& mask, const DistanceMap& distance, double r_mm) {
  if (!(r_mm >= 0.0)) fail(ErrorKind::InvalidRange, "dilation radius must be >= 0");
  if (distance.dims != mask.dims()) fail(ErrorKind::DimensionMismatch, "distance map does not match mask");
  std::vector<std::uint8_t> bits(mask.size());
  const double limit = r_mm + kRadiusEpsilon;
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (mask[i] || distance.mm[i] <= limit) ? 1 : 0;
  return Mask3D(mask.dims(), mask.spacing(), std::move(bits));
}

Mask3D dilate_mm(const Mask3D& mask, double r_mm) {
  if (!(r_mm >= 0.0)) fail(ErrorKind::InvalidRange, "dilation radius must be >= 0");
  if (mask.empty()) fail(ErrorKind::EmptyMask, "dilation of an empty mask");
  if (r_mm == 0.0) return mask;
  return dilate_from_distance(mask, edt(mask), r_mm);
}

Mask3D shell_mm(const Mask3D& mask, double r_inner, double r_outer) {
  if (!(r_inner >= 0.0 && r_inner < r_outer)) fail(ErrorKind::InvalidRange, "shell requires 0 <= r_inner < r_outer");
  if (mask.empty()) fail(ErrorKind::EmptyMask, "shell of an empty mask");
  const DistanceMap dm = edt(mask);
  const Mask3D inner = r_inner == 0.0 ? mask : dilate_from_distance(mask, dm, r_inner);
  const Mask3D outer = dilate_from_distance(mask, dm, r_outer);
  std::vector<std::uint8_t> bits(mask.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (outer[i] && !inner[i]) ? 1 : 0;
  return Mask3D(mask.dims(), mask.spacing(), std::move(bits));
}

Components connected_components(const Mask3D& mask, int connectivity) {
  if (connectivity != 6 && connectivity != 26)
    fail(ErrorKind::InvalidArgument, "connectivity must be 6 or 26, got " + std::to_string(connectivity));
  std::vector<std::array<std::int64_t, 3>> offsets;
  for (std::int64_t dz = -1; dz <= 1; ++dz)
    for (std::int64_t dy = -1; dy <= 1; ++dy)
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        const std::int64_t manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manhattan == 0) continue;
        if (connectivity == 6 && manhattan != 1) continue;
        offsets.push_back({dx, dy, dz});
      }

  const Dims& d = mask.dims();
  Components out;
  out.labels.assign(mask.size(), 0);
  std::vector<std::size_t> queue;
  for (std::size_t seed = 0; seed < mask.size(); ++seed) {
    if (!mask[seed] || out.labels[seed] != 0) continue;
    const auto label = static_cast<std::int32_t>(out.sizes.size() + 1);
    std::size_t size = 0;
    queue.clear();
    queue.push_back(seed);
    out.labels[seed] = label;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t i = queue[head];
      ++size;
      const auto x = static_cast<std::int64_t>(i) % d.nx;
      const auto y = (static_cast<std::int64_t>(i) / d.nx) % d.ny;
      const auto z = static_cast<std::int64_t>(i) / (d.nx * d.ny);
      for (const auto& o : offsets) {
        const std::int64_t nx = x + o[0], ny = y + o[1], nz = z + o[2];
        if (!d.contains(nx, ny, nz)) continue;
        const std::size_t j = d.index(nx, ny, nz);
        if (!mask[j] || out.labels[j] != 0) continue;
        out.labels[j] = label;
        queue.push_back(j);
      }
    }
    out.sizes.push_back(size);
  }
  return out;
}

}  // namespace peri::morph
