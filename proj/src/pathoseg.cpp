#include "f3net/pathoseg.hpp"

#include <algorithm>
#include <cmath>

#include "f3net/error.hpp"

namespace f3net {

namespace {

void require_same_shape(const SegMask& a, const SegMask& b, const char* what) {
  if (!(a.geometry.shape == b.geometry.shape) || a.data.size() != b.data.size())
    throw GeometryMismatch(std::string(what) + ": " + to_string(a.geometry.shape) + " vs " +
                           to_string(b.geometry.shape));
}

int nearest_source_index(int i, double target_spacing, double source_spacing, int source_size) {
  const double pos = (i + 0.5) * target_spacing / source_spacing - 0.5;
  const int idx = static_cast<int>(std::floor(pos + 0.5));
  return std::clamp(idx, 0, source_size - 1);
}

}  // namespace

std::int64_t PathosegMask::foreground_count() const {
  return std::count(data.begin(), data.end(), std::uint8_t{1});
}

SegMask resample_mask(const SegMask& mask, const Geometry& target) {
  const Shape3& src = mask.geometry.shape;
  const Shape3& dst = target.shape;
  std::array<std::vector<int>, 3> lookup;
  for (int axis = 0; axis < 3; ++axis) {
    lookup[axis].resize(dst[axis]);
    for (int i = 0; i < dst[axis]; ++i)
      lookup[axis][i] =
          nearest_source_index(i, target.spacing[axis], mask.geometry.spacing[axis], src[axis]);
  }

  SegMask out(target);
  out.label_semantics = mask.label_semantics;
  for (int z = 0; z < dst.z; ++z)
    for (int y = 0; y < dst.y; ++y)
      for (int x = 0; x < dst.x; ++x)
        out.at(x, y, z) = mask.at(lookup[0][x], lookup[1][y], lookup[2][z]);
  return out;
}

SegMask merge_distinct_masks(std::span<const SegMask> masks) {
  if (masks.empty()) throw EmptyCase("merge_distinct_masks needs at least one mask");
  SegMask out = masks.front();
  std::int32_t running_max = out.max_label();
  for (std::size_t k = 1; k < masks.size(); ++k) {
    const SegMask& next = masks[k];
    require_same_shape(out, next, "merge_distinct_masks");
    const std::int32_t offset = running_max;
    for (std::size_t i = 0; i < out.data.size(); ++i)
      if (out.data[i] == 0 && next.data[i] > 0) out.data[i] = next.data[i] + offset;
    for (const auto& [label, name] : next.label_semantics)
      if (label > 0) out.label_semantics.emplace(label + offset, name);
    running_max = std::max(running_max, next.max_label() + offset);
  }
  return out;
}

SegMask merge_whole(const SegMask& main, const SegMask& wmh) {
  require_same_shape(main, wmh, "merge_whole");
  for (std::int32_t v : wmh.data)
    if (v != 0 && v != 1) throw NonBinaryWMH("WMH mask holds label " + std::to_string(v));

  SegMask out = main;
  const std::int32_t fresh = main.max_label() + 1;
  bool any = false;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    if (wmh.data[i] == 1 && out.data[i] == 0) {
      out.data[i] = fresh;
      any = true;
    }
  if (any) out.label_semantics[fresh] = "wmh";
  return out;
}

PathosegMask binarize(const SegMask& mask) {
  PathosegMask out{mask.geometry, std::vector<std::uint8_t>(mask.data.size())};
  std::transform(mask.data.begin(), mask.data.end(), out.data.begin(),
                 [](std::int32_t l) -> std::uint8_t { return l > 0 ? 1 : 0; });
  return out;
}

PathosegMask binarize(const PathosegMask& mask) {
  PathosegMask out = mask;
  for (auto& v : out.data) v = v > 0 ? 1 : 0;
  return out;
}

SegMask to_segmask(const PathosegMask& mask) {
  SegMask out(mask.geometry);
  std::copy(mask.data.begin(), mask.data.end(), out.data.begin());
  out.label_semantics[1] = "pathology";
  return out;
}

}  // namespace f3net
