#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "f3net/pathoseg.hpp"
#include "f3net/tensor.hpp"
#include "f3net/volume.hpp"

namespace f3net::test {

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("f3net_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline Tensor random_tensor(int c, const Shape3& s, std::mt19937_64& rng, float scale = 1.0f) {
  Tensor t(c, s);
  std::normal_distribution<float> n(0.0f, scale);
  for (float& v : t.data) v = n(rng);
  return t;
}

inline SegMask random_labels(const Shape3& s, int max_label, double density, std::mt19937_64& rng) {
  SegMask m(Geometry{s});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> l(1, std::max(1, max_label));
  for (auto& v : m.data) v = u(rng) < density ? l(rng) : 0;
  return m;
}

}  // namespace f3net::test
