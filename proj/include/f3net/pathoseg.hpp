#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "f3net/volume.hpp"

namespace f3net {

/// Binary whole-pathology mask, values in {0,1}.
struct PathosegMask {
  Geometry geometry;
  std::vector<std::uint8_t> data;

  std::int64_t foreground_count() const;
};

/// Nearest-neighbour resampling of an already co-registered mask onto a new grid.
/// Source and target share their physical origin at the corner of voxel 0, so
/// voxel centres map as (i + 0.5) * target_spacing / source_spacing - 0.5.
SegMask resample_mask(const SegMask& mask, const Geometry& target);

/// Merge a dataset's distinct pathology masks into the main pathology mask.
/// Each later mask's labels are shifted by the running maximum label; where
/// masks overlap the earlier one wins. Throws GeometryMismatch.
SegMask merge_distinct_masks(std::span<const SegMask> masks);

/// Add a binary WMH mask to the main pathology mask under a fresh label
/// max(main) + 1. Voxels already labelled in main keep their label.
/// Throws GeometryMismatch or NonBinaryWMH.
SegMask merge_whole(const SegMask& main, const SegMask& wmh);

/// label > 0 -> 1, otherwise 0.
PathosegMask binarize(const SegMask& mask);
PathosegMask binarize(const PathosegMask& mask);

SegMask to_segmask(const PathosegMask& mask);

}  // namespace f3net
