#include "f3net/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "f3net/case_layout.hpp"
#include "f3net/error.hpp"

namespace f3net {

ContrastProfile contrast_of(Modality m) {
  switch (m) {
    case Modality::T1: return {1.0f, 0.55f};
    case Modality::T1Gd: return {1.0f, 1.6f};
    case Modality::T2: return {1.0f, 1.8f};
    case Modality::FLAIR: return {1.0f, 2.2f};
    case Modality::DWI: return {1.0f, 1.7f};
    case Modality::ADC: return {1.0f, 0.5f};
  }
  return {1.0f, 1.0f};
}

void PhantomSpec::validate() const {
  if (shape.x < 1 || shape.y < 1 || shape.z < 1) throw InvalidConfig("phantom shape must be positive");
  for (double s : spacing)
    if (!(s > 0.0)) throw InvalidConfig("phantom spacing must be positive");
  if (modalities.count() == 0) throw InvalidConfig("phantom needs at least one modality");
  if (random_lesions < 0) throw InvalidConfig("random_lesions must be nonnegative");
  if (!(min_radius > 0.0) || max_radius < min_radius)
    throw InvalidConfig("lesion radii need 0 < min_radius <= max_radius");
  if (!(noise >= 0.0)) throw InvalidConfig("noise must be nonnegative");
  for (const Lesion& l : lesions) {
    if (!(l.radius > 0.0)) throw InvalidConfig("lesion radius must be positive");
    if (l.cx < 0 || l.cy < 0 || l.cz < 0 || l.cx > shape.x - 1 || l.cy > shape.y - 1 ||
        l.cz > shape.z - 1)
      throw InvalidConfig("lesion centre lies outside the grid");
  }
}

MultiModalCase generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const Shape3 s = spec.shape;
  const Geometry g{s, spec.spacing};

  std::vector<Lesion> lesions = spec.lesions;
  for (int i = 0; i < spec.random_lesions; ++i) {
    std::uniform_real_distribution<double> radius(spec.min_radius, spec.max_radius);
    Lesion l;
    l.radius = radius(rng);
    double c[3];
    for (int a = 0; a < 3; ++a) {
      // Keep the ball inside the grid when it fits, otherwise centre it.
      const double lo = std::min(l.radius, (s[a] - 1) / 2.0);
      const double hi = std::max(lo, s[a] - 1 - l.radius);
      c[a] = std::uniform_real_distribution<double>(lo, hi)(rng);
    }
    l.cx = c[0], l.cy = c[1], l.cz = c[2];
    lesions.push_back(l);
  }

  SegMask label(g);
  for (int z = 0; z < s.z; ++z)
    for (int y = 0; y < s.y; ++y)
      for (int x = 0; x < s.x; ++x)
        for (const Lesion& l : lesions) {
          const double dx = x - l.cx, dy = y - l.cy, dz = z - l.cz;
          if (dx * dx + dy * dy + dz * dz <= l.radius * l.radius) {
            label.at(x, y, z) = 1;
            break;
          }
        }
  label.label_semantics[1] = "lesion";

  // Brain ellipsoid inscribed in the grid; lesion voxels count as brain too.
  std::vector<std::uint8_t> brain(s.voxels(), 0);
  std::vector<float> texture(s.voxels(), 0.0f);
  const double pi = std::numbers::pi;
  for (int z = 0; z < s.z; ++z)
    for (int y = 0; y < s.y; ++y)
      for (int x = 0; x < s.x; ++x) {
        const double u = (x + 0.5) / s.x * 2.0 - 1.0;
        const double v = (y + 0.5) / s.y * 2.0 - 1.0;
        const double w = (z + 0.5) / s.z * 2.0 - 1.0;
        const std::int64_t i = s.index(x, y, z);
        brain[i] = (u * u + v * v + w * w <= 0.92 * 0.92) || label.data[i] != 0;
        texture[i] = static_cast<float>(0.08 * std::sin(pi * u) * std::cos(pi * v) +
                                        0.05 * std::cos(pi * w));
      }

  PartialCase raw;
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  for (Modality m : kAllModalities) {
    if (!spec.modalities[m]) continue;
    const ContrastProfile p = contrast_of(m);
    VolumeGrid vol(g);
    for (std::int64_t i = 0; i < s.voxels(); ++i) {
      const float base = label.data[i] ? p.lesion : p.tissue;
      // Draw for every voxel so the stream does not depend on the mask.
      const float n = gauss(rng) * static_cast<float>(spec.noise);
      if (!brain[i]) continue;
      float value = base * (1.0f + texture[i]) * (1.0f + n);
      // Exact zero is reserved for background and absent modalities.
      if (value == 0.0f) value = 1e-6f;
      vol.data[i] = value;
    }
    raw[m] = std::move(vol);
  }

  MultiModalCase c = synthesize_zero_images(raw, spec.case_id);
  c.label = std::move(label);
  return c;
}

std::filesystem::path make_phantom(const PhantomSpec& spec, const std::filesystem::path& root) {
  return write_case(root, generate_phantom(spec));
}

}  // namespace f3net
