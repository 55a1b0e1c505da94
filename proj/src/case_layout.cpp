#include "f3net/case_layout.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "f3net/error.hpp"
#include "f3net/nifti.hpp"
#include "f3net/pathoseg.hpp"

namespace fs = std::filesystem;

namespace f3net {

namespace {

constexpr std::string_view kExtensions[] = {".nii.gz", ".nii"};

/// "{id}_{suffix}" when name is "{id}_{suffix}.nii[.gz]".
std::optional<std::string> stem_of(const std::string& name) {
  for (auto ext : kExtensions)
    if (name.size() > ext.size() && name.ends_with(ext)) return name.substr(0, name.size() - ext.size());
  return std::nullopt;
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fingerprint(const CaseFiles& files) {
  std::vector<fs::path> all;
  for (const auto& [m, p] : files.modalities) all.push_back(p);
  if (files.seg) all.push_back(*files.seg);
  if (files.wmh) all.push_back(*files.wmh);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : all) {
    const std::string s = fs::absolute(p).lexically_normal().string();
    h = fnv1a(h, s.data(), s.size());
    const auto size = static_cast<std::uint64_t>(fs::file_size(p));
    const auto mtime = static_cast<std::int64_t>(fs::last_write_time(p).time_since_epoch().count());
    h = fnv1a(h, &size, sizeof size);
    h = fnv1a(h, &mtime, sizeof mtime);
  }
  return h;
}

constexpr char kCacheMagic[8] = {'F', '3', 'N', 'E', 'T', 'C', 'A', 'S'};
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
bool get(std::istream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof v));
}

void write_cache(const fs::path& path, const MultiModalCase& c) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) return;
    os.write(kCacheMagic, sizeof kCacheMagic);
    put(os, kCacheVersion);
    const Geometry& g = c.geometry();
    put(os, g.shape.x);
    put(os, g.shape.y);
    put(os, g.shape.z);
    for (double s : g.spacing) put(os, s);
    for (bool p : c.presence.present) put(os, static_cast<std::uint8_t>(p));
    put(os, static_cast<std::uint8_t>(c.label.has_value()));
    const std::uint32_t id_len = static_cast<std::uint32_t>(c.case_id.size());
    put(os, id_len);
    os.write(c.case_id.data(), id_len);
    for (Modality m : kAllModalities)
      if (c.presence[m])
        os.write(reinterpret_cast<const char*>(c.volume(m).data.data()),
                 static_cast<std::streamsize>(c.volume(m).data.size() * sizeof(float)));
    if (c.label)
      os.write(reinterpret_cast<const char*>(c.label->data.data()),
               static_cast<std::streamsize>(c.label->data.size() * sizeof(std::int32_t)));
    if (!os) {
      os.close();
      fs::remove(tmp);
      return;
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fs::remove(tmp, ec);
}

std::optional<MultiModalCase> read_cache(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  char magic[8];
  std::uint32_t version = 0;
  if (!is.read(magic, 8) || std::memcmp(magic, kCacheMagic, 8) != 0) return std::nullopt;
  if (!get(is, version) || version != kCacheVersion) return std::nullopt;
  Geometry g;
  if (!get(is, g.shape.x) || !get(is, g.shape.y) || !get(is, g.shape.z)) return std::nullopt;
  for (double& s : g.spacing)
    if (!get(is, s)) return std::nullopt;
  if (g.shape.x < 1 || g.shape.y < 1 || g.shape.z < 1) return std::nullopt;
  MultiModalCase c;
  for (bool& p : c.presence.present) {
    std::uint8_t b = 0;
    if (!get(is, b)) return std::nullopt;
    p = b != 0;
  }
  std::uint8_t has_label = 0;
  std::uint32_t id_len = 0;
  if (!get(is, has_label) || !get(is, id_len) || id_len > 4096) return std::nullopt;
  c.case_id.resize(id_len);
  if (!is.read(c.case_id.data(), id_len)) return std::nullopt;
  const auto n = g.shape.voxels();
  for (Modality m : kAllModalities) {
    c.volumes[index_of(m)] = VolumeGrid(g);
    if (!c.presence[m]) continue;
    auto& d = c.volumes[index_of(m)].data;
    if (!is.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(n * sizeof(float))))
      return std::nullopt;
  }
  if (has_label) {
    SegMask label(g);
    if (!is.read(reinterpret_cast<char*>(label.data.data()),
                 static_cast<std::streamsize>(n * sizeof(std::int32_t))))
      return std::nullopt;
    c.label = std::move(label);
  }
  return c;
}

std::optional<fs::path> cache_dir() {
  const char* env = std::getenv("F3NET_CACHE");
  if (env == nullptr || *env == '\0') return std::nullopt;
  return fs::path(env);
}

}  // namespace

CaseFiles scan_case_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LayoutError("'" + dir.string() + "' is not a directory");
  CaseFiles files;
  files.dir = dir;
  files.case_id = fs::absolute(dir).lexically_normal().filename().string();
  if (files.case_id.empty()) files.case_id = fs::absolute(dir).lexically_normal().parent_path().filename().string();
  const std::string prefix = files.case_id + "_";
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto stem = stem_of(entry.path().filename().string());
    if (!stem || !stem->starts_with(prefix)) continue;
    const std::string suffix = stem->substr(prefix.size());
    if (suffix == "seg") {
      files.seg = entry.path();
    } else if (suffix == "wmh") {
      files.wmh = entry.path();
    } else if (auto m = parse_modality(suffix)) {
      if (files.modalities.count(*m))
        throw LayoutError("case '" + files.case_id + "' has two files for " +
                          std::string(modality_name(*m)));
      files.modalities[*m] = entry.path();
    }
  }
  if (files.modalities.empty())
    throw LayoutError("'" + dir.string() + "' holds no {case_id}_{modality}.nii.gz file");
  return files;
}

std::optional<SegMask> load_label(const CaseFiles& files) {
  std::optional<SegMask> seg, wmh;
  if (files.seg) seg = nifti::read_mask(*files.seg);
  if (files.wmh) wmh = nifti::read_mask(*files.wmh);
  if (seg && wmh) {
    if (wmh->geometry.shape != seg->geometry.shape)
      throw GeometryMismatch("wmh and seg of case '" + files.case_id + "' differ in shape");
    wmh->geometry = seg->geometry;
    return merge_whole(*seg, *wmh);
  }
  return seg ? seg : wmh;
}

namespace {

MultiModalCase read_files(const CaseFiles& files) {
  PartialCase raw;
  for (const auto& [m, path] : files.modalities) raw[m] = nifti::read_volume(path);
  MultiModalCase c = synthesize_zero_images(raw, files.case_id);
  c.label = load_label(files);
  if (c.label && c.label->geometry.shape != c.geometry().shape)
    throw GeometryMismatch("label of case '" + files.case_id + "' has shape " +
                           to_string(c.label->geometry.shape) + ", volumes have " +
                           to_string(c.geometry().shape));
  if (c.label) c.label->geometry = c.geometry();
  validate_case(c);
  return c;
}

}  // namespace

MultiModalCase load_raw_case(const fs::path& dir) { return read_files(scan_case_dir(dir)); }

MultiModalCase load_case(const fs::path& dir) {
  const CaseFiles files = scan_case_dir(dir);
  const auto cache = cache_dir();
  fs::path cache_file;
  if (cache) {
    char name[32];
    std::snprintf(name, sizeof name, "%016llx.f3c",
                  static_cast<unsigned long long>(fingerprint(files)));
    cache_file = *cache / name;
    if (auto hit = read_cache(cache_file)) return std::move(*hit);
  }
  MultiModalCase c = read_files(files);
  normalize_case(c);
  if (cache) {
    std::error_code ec;
    fs::create_directories(*cache, ec);
    if (!ec) write_cache(cache_file, c);
  }
  return c;
}

std::vector<fs::path> list_case_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw LayoutError("'" + root.string() + "' is not a directory");
  auto is_case = [](const fs::path& d) {
    try {
      scan_case_dir(d);
      return true;
    } catch (const LayoutError&) {
      return false;
    }
  };
  if (is_case(root)) return {root};
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && is_case(entry.path())) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw LayoutError("no case directories under '" + root.string() + "'");
  return dirs;
}

std::vector<MultiModalCase> load_dataset(const fs::path& root) {
  std::vector<MultiModalCase> cases;
  for (const auto& d : list_case_dirs(root)) cases.push_back(load_case(d));
  return cases;
}

fs::path write_case(const fs::path& root, const MultiModalCase& c) {
  if (c.case_id.empty()) throw LayoutError("case has no id");
  const fs::path dir = root / c.case_id;
  fs::create_directories(dir);
  for (Modality m : kAllModalities)
    if (c.presence[m])
      nifti::write_volume(dir / (c.case_id + "_" + std::string(modality_name(m)) + ".nii.gz"),
                          c.volume(m));
  if (c.label) nifti::write_mask(dir / (c.case_id + "_seg.nii.gz"), *c.label);
  return dir;
}

}  // namespace f3net
