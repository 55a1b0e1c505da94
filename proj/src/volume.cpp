#include "f3net/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "f3net/error.hpp"

namespace f3net {

namespace {
constexpr std::array<std::string_view, kNumModalities> kNames = {"t1", "t1gd", "t2",
                                                                  "flair", "dwi", "adc"};
}

std::string_view modality_name(Modality m) { return kNames[index_of(m)]; }

std::optional<Modality> parse_modality(std::string_view name) {
  for (int i = 0; i < kNumModalities; ++i)
    if (kNames[i] == name) return static_cast<Modality>(i);
  return std::nullopt;
}

std::string to_string(const Shape3& s) {
  std::ostringstream os;
  os << "(" << s.x << "," << s.y << "," << s.z << ")";
  return os.str();
}

VolumeGrid::VolumeGrid(const Geometry& g) : geometry(g), data(g.shape.voxels(), 0.0f) {}

VolumeGrid::VolumeGrid(const Geometry& g, std::vector<float> values)
    : geometry(g), data(std::move(values)) {
  if (static_cast<std::int64_t>(data.size()) != g.shape.voxels())
    throw ShapeError("voxel buffer size " + std::to_string(data.size()) +
                     " does not match shape " + to_string(g.shape));
}

bool VolumeGrid::is_all_zero() const {
  return std::all_of(data.begin(), data.end(), [](float v) { return v == 0.0f; });
}

SegMask::SegMask(const Geometry& g, std::vector<std::int32_t> labels)
    : geometry(g), data(std::move(labels)) {
  if (static_cast<std::int64_t>(data.size()) != g.shape.voxels())
    throw ShapeError("label buffer size " + std::to_string(data.size()) +
                     " does not match shape " + to_string(g.shape));
}

std::int32_t SegMask::max_label() const {
  return data.empty() ? 0 : *std::max_element(data.begin(), data.end());
}

std::int64_t SegMask::foreground_count() const {
  return std::count_if(data.begin(), data.end(), [](std::int32_t l) { return l > 0; });
}

int ModalityPresence::count() const {
  return static_cast<int>(std::count(present.begin(), present.end(), true));
}

ModalityPresence ModalityPresence::all() {
  ModalityPresence p;
  p.present.fill(true);
  return p;
}

ModalityPresence ModalityPresence::of(std::initializer_list<Modality> ms) {
  ModalityPresence p;
  for (Modality m : ms) p[m] = true;
  return p;
}

std::string to_string(const ModalityPresence& p) {
  std::string s = "[";
  for (int i = 0; i < kNumModalities; ++i) {
    if (i) s += ",";
    s += p.present[i] ? "1" : "0";
  }
  return s + "]";
}

MultiModalCase synthesize_zero_images(const PartialCase& raw_case, std::string case_id) {
  if (raw_case.empty()) throw EmptyCase("no modalities provided for case '" + case_id + "'");

  const Geometry& ref = raw_case.begin()->second.geometry;
  for (const auto& [m, vol] : raw_case) {
    if (!(vol.geometry == ref))
      throw GeometryMismatch(std::string(modality_name(m)) + " has shape " +
                             to_string(vol.geometry.shape) + ", expected " + to_string(ref.shape) +
                             " with matching spacing");
    if (static_cast<std::int64_t>(vol.data.size()) != ref.shape.voxels())
      throw ShapeError(std::string(modality_name(m)) + " buffer does not match its shape");
  }

  MultiModalCase out;
  out.case_id = std::move(case_id);
  for (Modality m : kAllModalities) {
    auto it = raw_case.find(m);
    if (it != raw_case.end()) {
      out.volumes[index_of(m)] = it->second;
      out.presence[m] = true;
    } else {
      out.volumes[index_of(m)] = VolumeGrid(ref);
    }
  }
  return out;
}

MultiModalCase resynthesize(const MultiModalCase& c) {
  PartialCase partial;
  for (Modality m : kAllModalities)
    if (!c.volume(m).is_all_zero()) partial.emplace(m, c.volume(m));
  MultiModalCase out = synthesize_zero_images(partial, c.case_id);
  out.label = c.label;
  return out;
}

ModalityPresence detect_presence(const MultiModalCase& c) {
  ModalityPresence p;
  for (Modality m : kAllModalities) p[m] = !c.volume(m).is_all_zero();
  return p;
}

NormalizedVolume normalize_intensity(const VolumeGrid& grid) {
  NormalizedVolume out{grid, false};
  double sum = 0.0;
  std::int64_t n = 0;
  for (float v : grid.data)
    if (v != 0.0f) {
      sum += v;
      ++n;
    }
  if (n == 0) return out;

  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (float v : grid.data)
    if (v != 0.0f) ss += (v - mean) * (v - mean);
  const double std_dev = std::sqrt(ss / static_cast<double>(n));

  out.degenerate = !(std_dev > 0.0);
  const double scale = out.degenerate ? 1.0 : 1.0 / std_dev;
  for (float& v : out.grid.data)
    if (v != 0.0f) v = static_cast<float>((v - mean) * scale);
  return out;
}

void normalize_case(MultiModalCase& c) {
  for (Modality m : kAllModalities)
    if (c.presence[m]) c.volumes[index_of(m)] = normalize_intensity(c.volume(m)).grid;
}

void validate_case(const MultiModalCase& c) {
  const Geometry& g = c.geometry();
  if (g.shape.x < 1 || g.shape.y < 1 || g.shape.z < 1)
    throw ShapeError("case '" + c.case_id + "' has empty shape " + to_string(g.shape));
  for (double s : g.spacing)
    if (!(s > 0.0)) throw ShapeError("case '" + c.case_id + "' has non-positive spacing");
  if (c.presence.count() == 0) throw EmptyCase("case '" + c.case_id + "' has no real modality");
  for (Modality m : kAllModalities) {
    const VolumeGrid& v = c.volume(m);
    if (!(v.geometry == g))
      throw GeometryMismatch("case '" + c.case_id + "' slot " + std::string(modality_name(m)) +
                             " disagrees with the case geometry");
    if (static_cast<std::int64_t>(v.data.size()) != g.shape.voxels())
      throw ShapeError("case '" + c.case_id + "' slot buffer size mismatch");
    for (float x : v.data)
      if (!std::isfinite(x)) throw DataError("NonFiniteVoxel", "case '" + c.case_id + "'");
  }
  if (c.label) {
    if (!(c.label->geometry.shape == g.shape) ||
        static_cast<std::int64_t>(c.label->data.size()) != g.shape.voxels())
      throw GeometryMismatch("case '" + c.case_id + "' label does not match the case geometry");
    for (std::int32_t l : c.label->data)
      if (l < 0) throw InvalidLabel("case '" + c.case_id + "' has a negative label");
  }
}

}  // namespace f3net
