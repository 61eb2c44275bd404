#include "peri/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "peri/error.hpp"

namespace peri {

void BoundingBox::validate(const Dims& dims) const {
  const std::int64_t n[3] = {dims.nx, dims.ny, dims.nz};
  for (int a = 0; a < 3; ++a) {
    if (min[a] < 0 || min[a] >= max[a] || max[a] > n[a]) {
      std::ostringstream os;
      os << "bounding box (" << min.x << "," << min.y << "," << min.z << ")-(" << max.x << "," << max.y << ","
         << max.z << ") invalid for dims " << dims.nx << "x" << dims.ny << "x" << dims.nz;
      fail(ErrorKind::InvalidRange, os.str());
    }
  }
}

namespace {

void check_geometry(const Dims& dims, const Spacing& spacing, std::size_t n) {
  if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) fail(ErrorKind::InvalidArgument, "dims must be positive");
  if (!(spacing.x > 0.0 && spacing.y > 0.0 && spacing.z > 0.0))
    fail(ErrorKind::InvalidArgument, "spacing must be positive");
  if (n != dims.count()) fail(ErrorKind::DimensionMismatch, "data length does not match dims");
}

}  // namespace

Volume3D::Volume3D(Dims dims, Spacing spacing, std::vector<float> data, Origin origin, NiftiDatatype source_type)
    : dims_(dims), spacing_(spacing), origin_(origin), source_type_(source_type), data_(std::move(data)) {
  check_geometry(dims_, spacing_, data_.size());
  for (float v : data_) {
    if (!std::isfinite(v)) fail(ErrorKind::NumericalFailure, "volume contains non-finite values");
  }
}

Mask3D::Mask3D(Dims dims, Spacing spacing) : dims_(dims), spacing_(spacing), bits_(dims.count(), 0) {
  check_geometry(dims_, spacing_, bits_.size());
}

Mask3D::Mask3D(Dims dims, Spacing spacing, std::vector<std::uint8_t> bits)
    : dims_(dims), spacing_(spacing), bits_(std::move(bits)) {
  check_geometry(dims_, spacing_, bits_.size());
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t Mask3D::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BoundingBox Mask3D::bounds() const {
  BoundingBox box{{dims_.nx, dims_.ny, dims_.nz}, {-1, -1, -1}};
  bool any = false;
  for (std::int64_t z = 0; z < dims_.nz; ++z)
    for (std::int64_t y = 0; y < dims_.ny; ++y)
      for (std::int64_t x = 0; x < dims_.nx; ++x) {
        if (!at(x, y, z)) continue;
        any = true;
        box.min = {std::min(box.min.x, x), std::min(box.min.y, y), std::min(box.min.z, z)};
        box.max = {std::max(box.max.x, x), std::max(box.max.y, y), std::max(box.max.z, z)};
      }
  if (!any) fail(ErrorKind::EmptyMask, "mask has no set voxels");
  box.max = {box.max.x + 1, box.max.y + 1, box.max.z + 1};
  return box;
}

Region expand_region(const Dims& parent, const Spacing& spacing, const BoundingBox& bbox, double margin_mm,
                     bool* clamped) {
  bbox.validate(parent);
  if (margin_mm < 0.0) fail(ErrorKind::InvalidRange, "crop margin must be >= 0");
  const std::int64_t n[3] = {parent.nx, parent.ny, parent.nz};
  Region r;
  std::int64_t hi[3];
  bool hit = false;
  for (int a = 0; a < 3; ++a) {
    // the epsilon keeps exact multiples (2 mm at 1 mm spacing) from rounding up
    const auto pad = static_cast<std::int64_t>(std::ceil(margin_mm / spacing[a] - 1e-9));
    const std::int64_t lo = bbox.min[a] - pad;
    const std::int64_t up = bbox.max[a] + pad;
    hit = hit || lo < 0 || up > n[a];
    r.offset[a] = std::max<std::int64_t>(0, lo);
    hi[a] = std::min(n[a], up);
  }
  r.dims = {hi[0] - r.offset.x, hi[1] - r.offset.y, hi[2] - r.offset.z};
  if (clamped) *clamped = hit;
  return r;
}

Volume3D extract_region(const Volume3D& volume, const Region& region) {
  const Dims& d = region.dims;
  std::vector<float> out(d.count());
  std::size_t i = 0;
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x)
        out[i++] = volume.at(x + region.offset.x, y + region.offset.y, z + region.offset.z);
  const Origin& o = volume.origin();
  const Spacing& s = volume.spacing();
  Origin sub{o.x + region.offset.x * s.x, o.y + region.offset.y * s.y, o.z + region.offset.z * s.z};
  return Volume3D(d, s, std::move(out), sub, volume.source_type());
}

Mask3D extract_region(const Mask3D& mask, const Region& region) {
  const Dims& d = region.dims;
  std::vector<std::uint8_t> out(d.count());
  std::size_t i = 0;
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x)
        out[i++] = mask.at(x + region.offset.x, y + region.offset.y, z + region.offset.z) ? 1 : 0;
  return Mask3D(d, mask.spacing(), std::move(out));
}

std::pair<Volume3D, Index3> crop(const Volume3D& volume, const BoundingBox& bbox, double margin_mm) {
  const Region r = expand_region(volume.dims(), volume.spacing(), bbox, margin_mm);
  return {extract_region(volume, r), r.offset};
}

Mask3D embed(const Mask3D& sub, const Index3& offset, const Dims& full_dims) {
  Mask3D out(full_dims, sub.spacing());
  const Dims& d = sub.dims();
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x) {
        if (!sub.at(x, y, z)) continue;
        const std::int64_t fx = x + offset.x, fy = y + offset.y, fz = z + offset.z;
        if (!full_dims.contains(fx, fy, fz)) fail(ErrorKind::InvalidRange, "embedded mask exceeds parent grid");
        out.set(fx, fy, fz, true);
      }
  return out;
}

Volume3D clip_hu(const Volume3D& volume, double lo, double hi) {
  if (!(lo < hi)) fail(ErrorKind::InvalidRange, "clip window requires lo < hi");
  std::vector<float> out(volume.data().begin(), volume.data().end());
  const auto flo = static_cast<float>(lo);
  const auto fhi = static_cast<float>(hi);
  for (float& v : out) v = std::clamp(v, flo, fhi);
  return Volume3D(volume.dims(), volume.spacing(), std::move(out), volume.origin(), volume.source_type());
}

BoundingBox to_region_frame(const BoundingBox& bbox, const Region& region) {
  BoundingBox b = bbox;
  for (int a = 0; a < 3; ++a) {
    b.min[a] -= region.offset[a];
    b.max[a] -= region.offset[a];
  }
  return b;
}

}  // namespace peri
