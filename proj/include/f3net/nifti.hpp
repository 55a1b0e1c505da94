#pragma once

#include <filesystem>

#include "f3net/pathoseg.hpp"
#include "f3net/volume.hpp"

namespace f3net::nifti {

/// NIfTI-1 single-file volumes; gzip is used when the name ends in ".gz".
/// Voxels are taken in stored order (no reorientation). Reading accepts the
/// common integer and float datatypes, applies scl_slope/scl_inter, and
/// handles byte-swapped headers. Throws CorruptFile.
VolumeGrid read_volume(const std::filesystem::path& path);
SegMask read_mask(const std::filesystem::path& path);
/// Header geometry only.
Geometry read_geometry(const std::filesystem::path& path);

/// float32 voxels.
void write_volume(const std::filesystem::path& path, const VolumeGrid& grid);
/// Smallest of uint8 / int16 / int32 that holds every label.
void write_mask(const std::filesystem::path& path, const SegMask& mask);
void write_mask(const std::filesystem::path& path, const PathosegMask& mask);

}  // namespace f3net::nifti
