#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "f3net/volume.hpp"

namespace f3net {

/// Channel-major 3D feature map: data[c * voxels + shape.index(x, y, z)].
struct Tensor {
  int channels = 0;
  Shape3 shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int c, const Shape3& s) : channels(c), shape(s), data(std::size_t(c) * s.voxels(), 0.0f) {}

  std::int64_t voxels() const { return shape.voxels(); }
  std::span<float> channel(int c) {
    return {data.data() + std::size_t(c) * voxels(), std::size_t(voxels())};
  }
  std::span<const float> channel(int c) const {
    return {data.data() + std::size_t(c) * voxels(), std::size_t(voxels())};
  }
  float& at(int c, int x, int y, int z) { return data[std::size_t(c) * voxels() + shape.index(x, y, z)]; }
  float at(int c, int x, int y, int z) const {
    return data[std::size_t(c) * voxels() + shape.index(x, y, z)];
  }
  bool same_layout(const Tensor& o) const { return channels == o.channels && shape == o.shape; }
  void fill(float v) { std::fill(data.begin(), data.end(), v); }
};

}  // namespace f3net
