#include "f3net/nifti.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>

#include "f3net/error.hpp"

namespace f3net::nifti {

namespace {

#pragma pack(push, 1)
struct Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Header) == 348);

enum DataType : std::int16_t {
  kUInt8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUInt16 = 512,
  kUInt32 = 768,
};

int bytes_per_voxel(std::int16_t dt) {
  switch (dt) {
    case kUInt8: case kInt8: return 1;
    case kInt16: case kUInt16: return 2;
    case kInt32: case kUInt32: case kFloat32: return 4;
    case kFloat64: return 8;
    default: return 0;
  }
}

template <typename T>
void swap_inplace(T& v) {
  auto* b = reinterpret_cast<unsigned char*>(&v);
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
}

void swap_header(Header& h) {
  swap_inplace(h.sizeof_hdr);
  for (auto& d : h.dim) swap_inplace(d);
  swap_inplace(h.datatype);
  swap_inplace(h.bitpix);
  for (auto& p : h.pixdim) swap_inplace(p);
  swap_inplace(h.vox_offset);
  swap_inplace(h.scl_slope);
  swap_inplace(h.scl_inter);
}

struct GzCloser {
  void operator()(gzFile f) const { if (f) gzclose(f); }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

GzHandle open_read(const std::filesystem::path& path) {
  GzHandle f(gzopen(path.c_str(), "rb"));
  if (!f) throw CorruptFile("cannot open " + path.string());
  return f;
}

void read_exact(gzFile f, void* dst, std::size_t n, const std::filesystem::path& path) {
  auto* p = static_cast<char*>(dst);
  while (n > 0) {
    const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
    const int got = gzread(f, p, chunk);
    if (got <= 0) throw CorruptFile("truncated NIfTI data in " + path.string());
    p += got;
    n -= static_cast<std::size_t>(got);
  }
}

struct Loaded {
  Header header;
  bool swapped = false;
  std::vector<char> raw;
};

Loaded load(const std::filesystem::path& path, bool with_data) {
  auto f = open_read(path);
  Loaded l;
  read_exact(f.get(), &l.header, sizeof(Header), path);
  Header& h = l.header;
  if (h.sizeof_hdr != 348) {
    swap_header(h);
    if (h.sizeof_hdr != 348) throw CorruptFile(path.string() + " is not a NIfTI-1 file");
    l.swapped = true;
  }
  if (std::memcmp(h.magic, "n+1", 4) != 0)
    throw CorruptFile(path.string() + ": only single-file NIfTI-1 (n+1) is supported");
  if (h.dim[0] < 1 || h.dim[0] > 7) throw CorruptFile(path.string() + ": bad dim[0]");
  for (int d = 4; d <= h.dim[0]; ++d)
    if (h.dim[d] > 1) throw CorruptFile(path.string() + ": only 3D volumes are supported");
  for (int d = 1; d <= 3; ++d)
    if (d <= h.dim[0] && h.dim[d] < 1) throw CorruptFile(path.string() + ": non-positive dim");
  if (bytes_per_voxel(h.datatype) == 0)
    throw CorruptFile(path.string() + ": unsupported datatype " + std::to_string(h.datatype));
  if (!with_data) return l;

  const std::int64_t nvox = std::int64_t{h.dim[1]} * (h.dim[0] >= 2 ? h.dim[2] : 1) *
                            (h.dim[0] >= 3 ? h.dim[3] : 1);
  const auto offset = static_cast<std::int64_t>(h.vox_offset);
  if (offset < 348) throw CorruptFile(path.string() + ": bad vox_offset");
  std::vector<char> skip(static_cast<std::size_t>(offset - 348));
  if (!skip.empty()) read_exact(f.get(), skip.data(), skip.size(), path);
  l.raw.resize(static_cast<std::size_t>(nvox) * bytes_per_voxel(h.datatype));
  read_exact(f.get(), l.raw.data(), l.raw.size(), path);
  return l;
}

Geometry geometry_of(const Header& h) {
  Geometry g;
  g.shape = {h.dim[1], h.dim[0] >= 2 ? h.dim[2] : 1, h.dim[0] >= 3 ? h.dim[3] : 1};
  for (int a = 0; a < 3; ++a) {
    const double s = std::fabs(h.pixdim[a + 1]);
    g.spacing[a] = s > 0.0 ? s : 1.0;
  }
  return g;
}

template <typename T>
double value_at(const char* raw, std::size_t i, bool swapped) {
  T v;
  std::memcpy(&v, raw + i * sizeof(T), sizeof(T));
  if (swapped) swap_inplace(v);
  return static_cast<double>(v);
}

std::vector<double> decode(const Loaded& l) {
  const Header& h = l.header;
  const std::size_t n = l.raw.size() / bytes_per_voxel(h.datatype);
  std::vector<double> out(n);
  const char* raw = l.raw.data();
  for (std::size_t i = 0; i < n; ++i) {
    switch (h.datatype) {
      case kUInt8: out[i] = value_at<std::uint8_t>(raw, i, false); break;
      case kInt8: out[i] = value_at<std::int8_t>(raw, i, false); break;
      case kInt16: out[i] = value_at<std::int16_t>(raw, i, l.swapped); break;
      case kUInt16: out[i] = value_at<std::uint16_t>(raw, i, l.swapped); break;
      case kInt32: out[i] = value_at<std::int32_t>(raw, i, l.swapped); break;
      case kUInt32: out[i] = value_at<std::uint32_t>(raw, i, l.swapped); break;
      case kFloat32: out[i] = value_at<float>(raw, i, l.swapped); break;
      case kFloat64: out[i] = value_at<double>(raw, i, l.swapped); break;
    }
  }
  const double slope = h.scl_slope;
  if (std::isfinite(slope) && slope != 0.0 && !(slope == 1.0 && h.scl_inter == 0.0))
    for (double& v : out) v = v * slope + h.scl_inter;
  return out;
}

Header make_header(const Geometry& g, std::int16_t datatype) {
  Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  for (int a = 0; a < 3; ++a) {
    if (g.shape[a] > std::numeric_limits<std::int16_t>::max())
      throw ShapeError("NIfTI-1 dimension exceeds 32767");
    h.dim[a + 1] = static_cast<std::int16_t>(g.shape[a]);
  }
  for (int d = 4; d < 8; ++d) h.dim[d] = 1;
  h.datatype = datatype;
  h.bitpix = static_cast<std::int16_t>(8 * bytes_per_voxel(datatype));
  h.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = static_cast<float>(g.spacing[a]);
  for (int d = 4; d < 8; ++d) h.pixdim[d] = 1.0f;
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.xyzt_units = 2;  // millimetres
  h.sform_code = 1;
  h.srow_x[0] = static_cast<float>(g.spacing[0]);
  h.srow_y[1] = static_cast<float>(g.spacing[1]);
  h.srow_z[2] = static_cast<float>(g.spacing[2]);
  std::memcpy(h.magic, "n+1", 4);
  return h;
}

void write_file(const std::filesystem::path& path, const Header& h, const void* data,
                std::size_t bytes) {
  static_assert(std::endian::native == std::endian::little);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const bool gz = path.extension() == ".gz";
  GzHandle f(gzopen(path.c_str(), gz ? "wb6" : "wbT"));
  if (!f) throw DataError("IOError", "cannot write " + path.string());
  const char extension[4] = {0, 0, 0, 0};
  bool ok = gzwrite(f.get(), &h, sizeof h) == static_cast<int>(sizeof h) &&
            gzwrite(f.get(), extension, 4) == 4;
  const auto* p = static_cast<const char*>(data);
  while (ok && bytes > 0) {
    const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(bytes, 1u << 30));
    ok = gzwrite(f.get(), p, chunk) == static_cast<int>(chunk);
    p += chunk;
    bytes -= chunk;
  }
  if (!ok || gzclose(f.release()) != Z_OK)
    throw DataError("IOError", "short write to " + path.string());
}

template <typename T>
void write_labels(const std::filesystem::path& path, const Geometry& g,
                  const std::vector<std::int32_t>& labels, std::int16_t dt) {
  std::vector<T> buf(labels.begin(), labels.end());
  write_file(path, make_header(g, dt), buf.data(), buf.size() * sizeof(T));
}

}  // namespace

Geometry read_geometry(const std::filesystem::path& path) {
  return geometry_of(load(path, false).header);
}

VolumeGrid read_volume(const std::filesystem::path& path) {
  const Loaded l = load(path, true);
  const auto values = decode(l);
  VolumeGrid g(geometry_of(l.header));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw CorruptFile(path.string() + " holds non-finite voxels");
    g.data[i] = static_cast<float>(values[i]);
  }
  return g;
}

SegMask read_mask(const std::filesystem::path& path) {
  const Loaded l = load(path, true);
  const auto values = decode(l);
  SegMask m(geometry_of(l.header));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::round(values[i]);
    if (!std::isfinite(v) || v < 0.0 || v > std::numeric_limits<std::int32_t>::max())
      throw InvalidLabel(path.string() + " holds label " + std::to_string(values[i]));
    m.data[i] = static_cast<std::int32_t>(v);
  }
  return m;
}

void write_volume(const std::filesystem::path& path, const VolumeGrid& grid) {
  write_file(path, make_header(grid.geometry, kFloat32), grid.data.data(),
             grid.data.size() * sizeof(float));
}

void write_mask(const std::filesystem::path& path, const SegMask& mask) {
  const std::int32_t mx = mask.max_label();
  if (mx <= 255)
    write_labels<std::uint8_t>(path, mask.geometry, mask.data, kUInt8);
  else if (mx <= std::numeric_limits<std::int16_t>::max())
    write_labels<std::int16_t>(path, mask.geometry, mask.data, kInt16);
  else
    write_labels<std::int32_t>(path, mask.geometry, mask.data, kInt32);
}

void write_mask(const std::filesystem::path& path, const PathosegMask& mask) {
  write_file(path, make_header(mask.geometry, kUInt8), mask.data.data(), mask.data.size());
}

}  // namespace f3net::nifti
