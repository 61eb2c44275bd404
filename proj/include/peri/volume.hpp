#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace peri {

/// Voxel counts per axis. Linear index is x-fastest: x + nx * (y + ny * z).
struct Dims {
  std::int64_t nx = 0;
  std::int64_t ny = 0;
  std::int64_t nz = 0;

  std::size_t count() const { return static_cast<std::size_t>(nx * ny * nz); }
  bool contains(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
  }
  std::size_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return static_cast<std::size_t>(x + nx * (y + ny * z));
  }
  bool operator==(const Dims&) const = default;
};

/// Millimetres per voxel along each axis.
struct Spacing {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;

  double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  bool operator==(const Spacing&) const = default;
};

struct Index3 {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  std::int64_t operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  std::int64_t& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
  bool operator==(const Index3&) const = default;
};

struct Origin {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  bool operator==(const Origin&) const = default;
};

/// Axis-aligned voxel box; min inclusive, max exclusive.
struct BoundingBox {
  Index3 min;
  Index3 max;

  /// Throws InvalidRange unless 0 <= min < max <= dims on every axis.
  void validate(const Dims& dims) const;
  Index3 center() const { return {(min.x + max.x) / 2, (min.y + max.y) / 2, (min.z + max.z) / 2}; }
  Dims extent() const { return {max.x - min.x, max.y - min.y, max.z - min.z}; }
  bool contains(const Index3& p) const {
    return p.x >= min.x && p.y >= min.y && p.z >= min.z && p.x < max.x && p.y < max.y && p.z < max.z;
  }
  bool operator==(const BoundingBox&) const = default;
};

/// NIfTI datatype codes understood by the reader/writer.
enum class NiftiDatatype : std::int16_t {
  UInt8 = 2,
  Int16 = 4,
  Int32 = 8,
  Float32 = 16,
  Float64 = 64,
};

/// Scalar CT grid in HU. Immutable once constructed.
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(Dims dims, Spacing spacing, std::vector<float> data, Origin origin = {},
           NiftiDatatype source_type = NiftiDatatype::Float32);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  const Origin& origin() const { return origin_; }
  NiftiDatatype source_type() const { return source_type_; }
  std::span<const float> data() const { return data_; }
  std::size_t size() const { return data_.size(); }

  float operator[](std::size_t i) const { return data_[i]; }
  float at(std::int64_t x, std::int64_t y, std::int64_t z) const { return data_[dims_.index(x, y, z)]; }

 private:
  Dims dims_;
  Spacing spacing_;
  Origin origin_;
  NiftiDatatype source_type_ = NiftiDatatype::Float32;
  std::vector<float> data_;
};

/// Boolean grid congruent with a volume; one byte (0/1) per voxel.
class Mask3D {
 public:
  Mask3D() = default;
  Mask3D(Dims dims, Spacing spacing);
  Mask3D(Dims dims, Spacing spacing, std::vector<std::uint8_t> bits);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  std::size_t size() const { return bits_.size(); }

  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  bool at(std::int64_t x, std::int64_t y, std::int64_t z) const { return bits_[dims_.index(x, y, z)] != 0; }
  void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }
  void set(std::int64_t x, std::int64_t y, std::int64_t z, bool v) { set(dims_.index(x, y, z), v); }

  std::size_t count() const;
  bool empty() const { return count() == 0; }
  /// Tight box around set voxels; throws EmptyMask when nothing is set.
  BoundingBox bounds() const;

  bool operator==(const Mask3D& other) const {
    return dims_ == other.dims_ && spacing_ == other.spacing_ && bits_ == other.bits_;
  }

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<std::uint8_t> bits_;
};

/// Sub-grid placement inside a parent grid.
struct Region {
  Index3 offset;
  Dims dims;
};

/// Box grown by ceil(margin_mm / spacing) voxels per side, clamped to the grid.
/// `clamped` reports whether any side hit the grid boundary.
Region expand_region(const Dims& parent, const Spacing& spacing, const BoundingBox& bbox, double margin_mm,
                     bool* clamped = nullptr);

std::pair<Volume3D, Index3> crop(const Volume3D& volume, const BoundingBox& bbox, double margin_mm);
Volume3D extract_region(const Volume3D& volume, const Region& region);
Mask3D extract_region(const Mask3D& mask, const Region& region);

/// Places `sub` into an empty full-size mask at `offset`.
Mask3D embed(const Mask3D& sub, const Index3& offset, const Dims& full_dims);

Volume3D clip_hu(const Volume3D& volume, double lo = -1000.0, double hi = 400.0);

/// Translate a box into the frame of a region.
BoundingBox to_region_frame(const BoundingBox& bbox, const Region& region);

}  // namespace peri
