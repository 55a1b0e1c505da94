#include "f3net/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "f3net/error.hpp"

namespace f3net {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

nlohmann::json spec_to_json(const NetworkSpec& spec) {
  return {{"num_stages", spec.num_stages},
          {"base_channels", spec.base_channels},
          {"max_channels", spec.max_channels},
          {"num_classes", spec.num_classes},
          {"mask_scope", std::string(to_string(spec.mask_scope))}};
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  try {
    s.num_stages = j.at("num_stages").get<int>();
    s.base_channels = j.at("base_channels").get<int>();
    s.max_channels = j.at("max_channels").get<int>();
    s.num_classes = j.at("num_classes").get<int>();
    auto scope = parse_mask_scope(j.at("mask_scope").get<std::string>());
    if (!scope) throw CorruptFile("unknown mask_scope in checkpoint");
    s.mask_scope = *scope;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(std::string("network spec: ") + e.what());
  }
  return s;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = "f3net-checkpoint";
  header["version"] = kCheckpointVersion;
  header["spec"] = spec_to_json(ckpt.spec);
  header["meta"] = ckpt.meta;
  auto& tensors = header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, values] : ckpt.arrays) {
    nlohmann::json entry = {{"name", name}, {"offset", offset}, {"count", values.size()}};
    if (auto it = ckpt.shapes.find(name); it != ckpt.shapes.end()) entry["shape"] = it->second;
    tensors.push_back(std::move(entry));
    offset += values.size();
  }
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("IOError", "cannot write " + tmp.string());
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    os.write(reinterpret_cast<const char*>(&version), sizeof version);
    os.write(reinterpret_cast<const char*>(&len), sizeof len);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, values] : ckpt.arrays)
      os.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!os) throw DataError("IOError", "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptFile("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  is.read(magic, sizeof magic);
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  is.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw CorruptFile(path.string() + " is not an f3net checkpoint");
  if (version != kCheckpointVersion)
    throw CorruptFile("unsupported checkpoint version " + std::to_string(version));
  if (len > (1u << 30)) throw CorruptFile("checkpoint header too large");

  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw CorruptFile("truncated checkpoint header");

  Checkpoint ckpt;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(std::string("checkpoint header: ") + e.what());
  }
  ckpt.spec = spec_from_json(header.at("spec"));
  if (header.contains("meta")) ckpt.meta = header["meta"];

  const auto blob_start = is.tellg();
  for (const auto& t : header.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto offset = t.at("offset").get<std::uint64_t>();
    const auto count = t.at("count").get<std::uint64_t>();
    std::vector<float> values(count);
    is.seekg(blob_start + static_cast<std::streamoff>(offset * sizeof(float)));
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!is) throw CorruptFile("truncated array '" + name + "' in " + path.string());
    ckpt.arrays.emplace(name, std::move(values));
    if (t.contains("shape")) ckpt.shapes.emplace(name, t["shape"].get<std::vector<int>>());
  }
  return ckpt;
}

Checkpoint make_checkpoint(const F3NetModel& model) {
  Checkpoint c;
  c.spec = model.spec();
  for (const auto& p : model.parameters()) {
    c.arrays.emplace(p.name, p.value);
    c.shapes.emplace(p.name, p.shape);
  }
  return c;
}

F3NetModel model_from_checkpoint(const Checkpoint& ckpt) {
  F3NetModel model(ckpt.spec);
  for (auto& p : model.parameters()) {
    auto it = ckpt.arrays.find(p.name);
    if (it == ckpt.arrays.end()) throw CorruptFile("checkpoint lacks parameter " + p.name);
    if (it->second.size() != p.value.size())
      throw CorruptFile("parameter " + p.name + " has " + std::to_string(it->second.size()) +
                        " values, expected " + std::to_string(p.value.size()));
    p.value = it->second;
  }
  return model;
}

}  // namespace f3net
