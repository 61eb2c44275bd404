#pragma once

#include <filesystem>

#include "peri/volume.hpp"

namespace peri::nifti {

enum class Endian { Little, Big };

/// Reads a single-file NIfTI-1 (.nii) 3D image. Accepts datatypes uint8, int16,
/// int32, float32 and float64 in either byte order; applies scl_slope/scl_inter
/// when the slope is nonzero.
Volume3D read(const std::filesystem::path& path);

/// Writes `volume` with the requested on-disk datatype. Integer datatypes round
/// to nearest and saturate.
void write(const Volume3D& volume, const std::filesystem::path& path, NiftiDatatype datatype = NiftiDatatype::Float32,
           Endian endian = Endian::Little);

/// uint8 0/1 mask file.
void write_mask(const Mask3D& mask, const std::filesystem::path& path);

/// read() followed by thresholding at 0.5.
Mask3D read_mask(const std::filesystem::path& path);

}  // namespace peri::nifti
