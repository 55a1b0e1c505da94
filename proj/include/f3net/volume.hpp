#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace f3net {

/// Channel order of every stacked input. Indices are stable across the project.
enum class Modality : int { T1 = 0, T1Gd = 1, T2 = 2, FLAIR = 3, DWI = 4, ADC = 5 };

inline constexpr int kNumModalities = 6;
inline constexpr std::array<Modality, kNumModalities> kAllModalities = {
    Modality::T1, Modality::T1Gd, Modality::T2, Modality::FLAIR, Modality::DWI, Modality::ADC};

/// Lower-case file suffix: t1, t1gd, t2, flair, dwi, adc.
std::string_view modality_name(Modality m);
std::optional<Modality> parse_modality(std::string_view name);
constexpr int index_of(Modality m) { return static_cast<int>(m); }

/// Voxel grid extent. Storage order is x-fastest (x + nx * (y + ny * z)), matching NIfTI.
struct Shape3 {
  int x = 1, y = 1, z = 1;

  std::int64_t voxels() const { return std::int64_t{x} * y * z; }
  std::int64_t index(int ix, int iy, int iz) const {
    return ix + std::int64_t{x} * (iy + std::int64_t{y} * iz);
  }
  int operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  int& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
  bool operator==(const Shape3&) const = default;
};

std::string to_string(const Shape3& s);

/// Voxel size in millimetres.
using Spacing3 = std::array<double, 3>;

struct Geometry {
  Shape3 shape;
  Spacing3 spacing{1.0, 1.0, 1.0};

  bool operator==(const Geometry&) const = default;
};

/// Scalar 3D image. Values must be finite.
struct VolumeGrid {
  Geometry geometry;
  std::vector<float> data;

  VolumeGrid() = default;
  /// Zero-filled grid.
  explicit VolumeGrid(const Geometry& g);
  VolumeGrid(const Geometry& g, std::vector<float> values);

  const Shape3& shape() const { return geometry.shape; }
  float& at(int x, int y, int z) { return data[geometry.shape.index(x, y, z)]; }
  float at(int x, int y, int z) const { return data[geometry.shape.index(x, y, z)]; }
  bool is_all_zero() const;
};

/// Which of the six slots hold real acquisitions.
struct ModalityPresence {
  std::array<bool, kNumModalities> present{};

  bool operator[](Modality m) const { return present[index_of(m)]; }
  bool& operator[](Modality m) { return present[index_of(m)]; }
  int count() const;
  bool operator==(const ModalityPresence&) const = default;

  static ModalityPresence all();
  static ModalityPresence of(std::initializer_list<Modality> ms);
};

std::string to_string(const ModalityPresence& p);

/// Integer label grid; 0 is background. Shares geometry with the case it annotates.
struct SegMask {
  Geometry geometry;
  std::vector<std::int32_t> data;
  std::map<std::int32_t, std::string> label_semantics;

  SegMask() = default;
  explicit SegMask(const Geometry& g) : geometry(g), data(g.shape.voxels(), 0) {}
  SegMask(const Geometry& g, std::vector<std::int32_t> labels);

  const Shape3& shape() const { return geometry.shape; }
  std::int32_t& at(int x, int y, int z) { return data[geometry.shape.index(x, y, z)]; }
  std::int32_t at(int x, int y, int z) const { return data[geometry.shape.index(x, y, z)]; }
  std::int32_t max_label() const;
  std::int64_t foreground_count() const;
};

/// Six aligned volumes with a presence vector; absent slots are exact zero-images.
struct MultiModalCase {
  std::string case_id;
  std::array<VolumeGrid, kNumModalities> volumes;
  ModalityPresence presence;
  std::optional<SegMask> label;

  const Geometry& geometry() const { return volumes[0].geometry; }
  const VolumeGrid& volume(Modality m) const { return volumes[index_of(m)]; }
};

using PartialCase = std::map<Modality, VolumeGrid>;

/// Fill every missing modality with a zero-image of the shared geometry.
/// Throws EmptyCase when nothing is provided and GeometryMismatch when
/// provided volumes disagree on shape or spacing.
MultiModalCase synthesize_zero_images(const PartialCase& raw_case, std::string case_id = {});

/// Re-run synthesis on a full case, treating all-zero slots as missing.
MultiModalCase resynthesize(const MultiModalCase& c);

/// presence[m] is false iff every voxel of slot m is exactly zero.
ModalityPresence detect_presence(const MultiModalCase& c);

struct NormalizedVolume {
  VolumeGrid grid;
  /// Set when the nonzero support had zero variance; voxels were only mean-shifted.
  bool degenerate = false;
};

/// Z-score over the nonzero voxels. Zero voxels (and all-zero grids) stay exactly zero.
NormalizedVolume normalize_intensity(const VolumeGrid& grid);

/// Normalizes every present slot in place; absent slots are left untouched.
void normalize_case(MultiModalCase& c);

/// Throws GeometryMismatch / ShapeError when a case breaks its invariants.
void validate_case(const MultiModalCase& c);

}  // namespace f3net
