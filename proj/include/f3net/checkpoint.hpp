#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "f3net/network.hpp"

namespace f3net {

/// Archive layout (little-endian):
///   8 bytes  magic "F3NETCKP"
///   u32      format version (kCheckpointVersion)
///   u64      header length in bytes
///   header   UTF-8 JSON: {"format", "version", "spec", "tensors": [{name, shape, offset, count}], "meta"}
///   blob     float32 arrays at the listed element offsets
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'F', '3', 'N', 'E', 'T', 'C', 'K', 'P'};

struct Checkpoint {
  NetworkSpec spec;
  /// Model parameters keyed by parameter name, plus any extra arrays (e.g.
  /// optimizer momentum under "momentum.<param>").
  std::map<std::string, std::vector<float>> arrays;
  /// Optional per-array shape (model parameters carry one).
  std::map<std::string, std::vector<int>> shapes;
  nlohmann::json meta = nlohmann::json::object();
};

nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

/// Writes via a temporary file and rename.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws CorruptFile on a bad magic, version, or truncated payload.
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const F3NetModel& model);
/// Rebuilds a model from the stored spec and copies every parameter array.
F3NetModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace f3net
