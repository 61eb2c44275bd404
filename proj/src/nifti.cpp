#include "peri/nifti.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <vector>

#include "peri/error.hpp"

namespace peri::nifti {

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kDataOffset = 352;  // header + 4-byte extension flag

// field offsets in the NIfTI-1 header
constexpr std::size_t kDim = 40;
constexpr std::size_t kDatatype = 70;
constexpr std::size_t kBitpix = 72;
constexpr std::size_t kPixdim = 76;
constexpr std::size_t kVoxOffset = 108;
constexpr std::size_t kSclSlope = 112;
constexpr std::size_t kSclInter = 116;
constexpr std::size_t kXyztUnits = 123;
constexpr std::size_t kQoffset = 268;
constexpr std::size_t kMagic = 344;

template <typename T>
T byteswap_value(T v) {
  std::array<unsigned char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  std::reverse(b.begin(), b.end());
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& buf, bool swap) : buf_(buf), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    T v;
    std::memcpy(&v, buf_.data() + offset, sizeof(T));
    return swap_ ? byteswap_value(v) : v;
  }

 private:
  const std::vector<unsigned char>& buf_;
  bool swap_;
};

class Writer {
 public:
  Writer(std::vector<unsigned char>& buf, bool swap) : buf_(buf), swap_(swap) {}

  template <typename T>
  void put(std::size_t offset, T v) {
    if (swap_) v = byteswap_value(v);
    std::memcpy(buf_.data() + offset, &v, sizeof(T));
  }

 private:
  std::vector<unsigned char>& buf_;
  bool swap_;
};

bool host_is_little() { return std::endian::native == std::endian::little; }

int bytes_per_voxel(std::int16_t code) {
  switch (code) {
    case 2: return 1;
    case 4: return 2;
    case 8: return 4;
    case 16: return 4;
    case 64: return 8;
    default: return 0;
  }
}

template <typename T>
void decode(const Reader& r, std::size_t offset, std::size_t n, std::vector<float>& out, double slope, double inter) {
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = static_cast<double>(r.get<T>(offset + i * sizeof(T)));
    out[i] = static_cast<float>(slope != 0.0 ? raw * slope + inter : raw);
  }
}

template <typename T>
T saturate(double v) {
  if constexpr (std::is_integral_v<T>) {
    const double r = std::nearbyint(v);
    const double lo = static_cast<double>(std::numeric_limits<T>::min());
    const double hi = static_cast<double>(std::numeric_limits<T>::max());
    return static_cast<T>(std::clamp(r, lo, hi));
  } else {
    return static_cast<T>(v);
  }
}

template <typename T>
void encode(Writer& w, std::span<const float> values) {
  for (std::size_t i = 0; i < values.size(); ++i) w.put<T>(kDataOffset + i * sizeof(T), saturate<T>(values[i]));
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

std::vector<unsigned char> encode_file(const Dims& dims, const Spacing& spacing, const Origin& origin,
                                       std::span<const float> values, NiftiDatatype datatype, Endian endian) {
  const auto code = static_cast<std::int16_t>(datatype);
  const int bpv = bytes_per_voxel(code);
  if (bpv == 0) fail(ErrorKind::UnsupportedDatatype, "cannot write datatype " + std::to_string(code));

  std::vector<unsigned char> buf(kDataOffset + values.size() * static_cast<std::size_t>(bpv), 0);
  const bool swap = (endian == Endian::Little) != host_is_little();
  Writer w(buf, swap);
  w.put<std::int32_t>(0, static_cast<std::int32_t>(kHeaderSize));
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(dims.nx), static_cast<std::int16_t>(dims.ny),
                               static_cast<std::int16_t>(dims.nz), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) w.put<std::int16_t>(kDim + 2 * i, dim[i]);
  w.put<std::int16_t>(kDatatype, code);
  w.put<std::int16_t>(kBitpix, static_cast<std::int16_t>(8 * bpv));
  const float pixdim[8] = {1.0f, static_cast<float>(spacing.x), static_cast<float>(spacing.y),
                           static_cast<float>(spacing.z), 0.0f, 0.0f, 0.0f, 0.0f};
  for (int i = 0; i < 8; ++i) w.put<float>(kPixdim + 4 * i, pixdim[i]);
  w.put<float>(kVoxOffset, static_cast<float>(kDataOffset));
  w.put<float>(kSclSlope, 0.0f);
  w.put<float>(kSclInter, 0.0f);
  buf[kXyztUnits] = 2;  // millimetres
  w.put<float>(kQoffset + 0, static_cast<float>(origin.x));
  w.put<float>(kQoffset + 4, static_cast<float>(origin.y));
  w.put<float>(kQoffset + 8, static_cast<float>(origin.z));
  std::memcpy(buf.data() + kMagic, "n+1\0", 4);

  switch (datatype) {
    case NiftiDatatype::UInt8: encode<std::uint8_t>(w, values); break;
    case NiftiDatatype::Int16: encode<std::int16_t>(w, values); break;
    case NiftiDatatype::Int32: encode<std::int32_t>(w, values); break;
    case NiftiDatatype::Float32: encode<float>(w, values); break;
    case NiftiDatatype::Float64: encode<double>(w, values); break;
  }
  return buf;
}

}  // namespace

Volume3D read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < kHeaderSize) fail(ErrorKind::MalformedHeader, path.string() + ": file shorter than header");

  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, buf.data(), 4);
  bool swap = false;
  if (sizeof_hdr != static_cast<std::int32_t>(kHeaderSize)) {
    if (byteswap_value(sizeof_hdr) != static_cast<std::int32_t>(kHeaderSize))
      fail(ErrorKind::MalformedHeader, path.string() + ": sizeof_hdr is not 348 in either byte order");
    swap = true;
  }
  if (std::memcmp(buf.data() + kMagic, "n+1\0", 4) != 0)
    fail(ErrorKind::MalformedHeader, path.string() + ": magic is not \"n+1\"");

  const Reader r(buf, swap);
  std::int16_t dim[8];
  for (int i = 0; i < 8; ++i) dim[i] = r.get<std::int16_t>(kDim + 2 * i);
  if (dim[0] != 3) {
    // trailing singleton dimensions are not tolerated either: the pipeline is strictly 3D
    fail(ErrorKind::DimensionMismatch, path.string() + ": dim[0] = " + std::to_string(dim[0]) + ", expected 3");
  }
  if (dim[1] <= 0 || dim[2] <= 0 || dim[3] <= 0) fail(ErrorKind::MalformedHeader, path.string() + ": nonpositive dim");

  const auto datatype = r.get<std::int16_t>(kDatatype);
  const int bpv = bytes_per_voxel(datatype);
  if (bpv == 0) fail(ErrorKind::UnsupportedDatatype, path.string() + ": datatype " + std::to_string(datatype));

  float pixdim[4];
  for (int i = 0; i < 4; ++i) pixdim[i] = r.get<float>(kPixdim + 4 * i);
  const Spacing spacing{pixdim[1], pixdim[2], pixdim[3]};
  if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0) || !std::isfinite(spacing.x) || !std::isfinite(spacing.y) ||
      !std::isfinite(spacing.z))
    fail(ErrorKind::MalformedHeader, path.string() + ": pixdim[1..3] must be positive");

  const float vox_offset_f = r.get<float>(kVoxOffset);
  if (!(vox_offset_f >= static_cast<float>(kHeaderSize)))
    fail(ErrorKind::MalformedHeader, path.string() + ": vox_offset inside header");
  const auto vox_offset = static_cast<std::size_t>(vox_offset_f);

  const Dims dims{dim[1], dim[2], dim[3]};
  const std::size_t n = dims.count();
  if (buf.size() < vox_offset + n * static_cast<std::size_t>(bpv))
    fail(ErrorKind::TruncatedData, path.string() + ": expected " + std::to_string(n * bpv) + " data bytes");

  const double slope = r.get<float>(kSclSlope);
  const double inter = r.get<float>(kSclInter);
  const double use_slope = std::isfinite(slope) ? slope : 0.0;
  const double use_inter = std::isfinite(inter) ? inter : 0.0;

  std::vector<float> values(n);
  switch (datatype) {
    case 2: decode<std::uint8_t>(r, vox_offset, n, values, use_slope, use_inter); break;
    case 4: decode<std::int16_t>(r, vox_offset, n, values, use_slope, use_inter); break;
    case 8: decode<std::int32_t>(r, vox_offset, n, values, use_slope, use_inter); break;
    case 16: decode<float>(r, vox_offset, n, values, use_slope, use_inter); break;
    case 64: decode<double>(r, vox_offset, n, values, use_slope, use_inter); break;
  }
  for (float v : values)
    if (!std::isfinite(v)) fail(ErrorKind::MalformedHeader, path.string() + ": non-finite voxel values");

  const Origin origin{r.get<float>(kQoffset), r.get<float>(kQoffset + 4), r.get<float>(kQoffset + 8)};
  return Volume3D(dims, spacing, std::move(values), origin, static_cast<NiftiDatatype>(datatype));
}

void write(const Volume3D& volume, const std::filesystem::path& path, NiftiDatatype datatype, Endian endian) {
  write_file(path, encode_file(volume.dims(), volume.spacing(), volume.origin(), volume.data(), datatype, endian));
}

void write_mask(const Mask3D& mask, const std::filesystem::path& path) {
  std::vector<float> values(mask.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = mask[i] ? 1.0f : 0.0f;
  write_file(path, encode_file(mask.dims(), mask.spacing(), Origin{}, values, NiftiDatatype::UInt8, Endian::Little));
}

Mask3D read_mask(const std::filesystem::path& path) {
  const Volume3D v = read(path);
  std::vector<std::uint8_t> bits(v.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = v[i] > 0.5f ? 1 : 0;
  return Mask3D(v.dims(), v.spacing(), std::move(bits));
}

}  // namespace peri::nifti
