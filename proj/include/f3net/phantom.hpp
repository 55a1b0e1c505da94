#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "f3net/volume.hpp"

namespace f3net {

struct Lesion {
  double cx = 0, cy = 0, cz = 0;  // voxel-index coordinates
  double radius = 1;
};

/// Synthetic brain: an ellipsoid of smoothly varying tissue with spherical
/// lesions whose contrast depends on the modality, plus Gaussian noise.
struct PhantomSpec {
  std::string case_id = "case_0000";
  Shape3 shape{32, 32, 32};
  Spacing3 spacing{1.0, 1.0, 1.0};
  /// Placed as given.
  std::vector<Lesion> lesions;
  /// Additional lesions with random centres and radii in [min_radius, max_radius].
  int random_lesions = 0;
  double min_radius = 2.0;
  double max_radius = 5.0;
  ModalityPresence modalities = ModalityPresence::all();
  /// Noise standard deviation relative to the tissue intensity.
  double noise = 0.05;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;
};

/// A voxel belongs to a lesion when its index lies within the radius (inclusive).
/// Intensities are raw (not normalized); absent modalities are zero-images.
MultiModalCase generate_phantom(const PhantomSpec& spec);

/// Writes generate_phantom(spec) under root/{case_id}; returns the case directory.
std::filesystem::path make_phantom(const PhantomSpec& spec, const std::filesystem::path& root);

/// Intensity of healthy tissue and of lesion tissue for each modality.
struct ContrastProfile {
  float tissue;
  float lesion;
};
ContrastProfile contrast_of(Modality m);

}  // namespace f3net
