#include "f3net/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

#include "f3net/error.hpp"

namespace f3net::nn {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

// Reused scratch for the unfolded input; conv calls are not re-entrant per thread.
thread_local std::vector<float> t_col;
thread_local std::vector<float> t_col_grad;

struct ConvGeometry {
  Shape3 in, out;
  int kernel, stride, pad;
  std::int64_t rows() const { return std::int64_t{kernel} * kernel * kernel; }
};

// Valid [lo, hi) range of output positions o for which o * stride + k - pad lies in [0, n).
void valid_range(int n_out, int n_in, int k, int stride, int pad, int& lo, int& hi) {
  lo = 0;
  while (lo < n_out && lo * stride + k - pad < 0) ++lo;
  hi = n_out;
  while (hi > lo && (hi - 1) * stride + k - pad >= n_in) --hi;
}

// Unfolds output rows [row_begin, row_end) (a row is one (oz, oy) line of out.x
// voxels) into col, laid out (in_channels * k^3, rows * out.x).
void im2col(const Tensor& in, const ConvGeometry& g, int row_begin, int row_end, float* col) {
  const std::int64_t n_in = g.in.voxels();
  const std::int64_t width = std::int64_t{row_end - row_begin} * g.out.x;
  const int k = g.kernel;
  std::int64_t row = 0;
  for (int c = 0; c < in.channels; ++c) {
    const float* src_c = in.data.data() + c * n_in;
    for (int kz = 0; kz < k; ++kz)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx, ++row) {
          float* dst = col + row * width;
          int xlo, xhi;
          valid_range(g.out.x, g.in.x, kx, g.stride, g.pad, xlo, xhi);
          for (int r = row_begin; r < row_end; ++r) {
            const int oz = r / g.out.y, oy = r % g.out.y;
            float* d = dst + std::int64_t{r - row_begin} * g.out.x;
            const int iz = oz * g.stride + kz - g.pad;
            const int iy = oy * g.stride + ky - g.pad;
            if (iz < 0 || iz >= g.in.z || iy < 0 || iy >= g.in.y) {
              std::memset(d, 0, sizeof(float) * g.out.x);
              continue;
            }
            const float* s = src_c + (std::int64_t{iz} * g.in.y + iy) * g.in.x;
            for (int ox = 0; ox < xlo; ++ox) d[ox] = 0.0f;
            if (g.stride == 1) {
              if (xhi > xlo) std::memcpy(d + xlo, s + xlo + kx - g.pad, sizeof(float) * (xhi - xlo));
            } else {
              for (int ox = xlo; ox < xhi; ++ox) d[ox] = s[ox * g.stride + kx - g.pad];
            }
            for (int ox = std::max(xhi, xlo); ox < g.out.x; ++ox) d[ox] = 0.0f;
          }
        }
  }
}

// Adds the unfolded gradient of rows [row_begin, row_end) back onto grad_in.
void col2im_add(const float* col, const ConvGeometry& g, int row_begin, int row_end,
                Tensor& grad_in) {
  const std::int64_t n_in = g.in.voxels();
  const std::int64_t width = std::int64_t{row_end - row_begin} * g.out.x;
  const int k = g.kernel;
  std::int64_t row = 0;
  for (int c = 0; c < grad_in.channels; ++c) {
    float* dst_c = grad_in.data.data() + c * n_in;
    for (int kz = 0; kz < k; ++kz)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx, ++row) {
          const float* src = col + row * width;
          int xlo, xhi;
          valid_range(g.out.x, g.in.x, kx, g.stride, g.pad, xlo, xhi);
          for (int r = row_begin; r < row_end; ++r) {
            const int oz = r / g.out.y, oy = r % g.out.y;
            const int iz = oz * g.stride + kz - g.pad;
            const int iy = oy * g.stride + ky - g.pad;
            if (iz < 0 || iz >= g.in.z || iy < 0 || iy >= g.in.y) continue;
            const float* s = src + std::int64_t{r - row_begin} * g.out.x;
            float* d = dst_c + (std::int64_t{iz} * g.in.y + iy) * g.in.x;
            for (int ox = xlo; ox < xhi; ++ox) d[ox * g.stride + kx - g.pad] += s[ox];
          }
        }
  }
}

ConvGeometry make_geometry(const Shape3& in, int kernel, int stride) {
  if (kernel % 2 == 0) throw ShapeError("conv kernel must be odd");
  ConvGeometry g{in, {}, kernel, stride, kernel / 2};
  for (int a = 0; a < 3; ++a) g.out[a] = conv_output_extent(in[a], kernel, stride);
  return g;
}

// Output rows per tile, sized so one unfolded tile stays cache resident.
int rows_per_tile(const ConvGeometry& g, std::int64_t k_rows) {
  constexpr std::int64_t kTileFloats = 96 * 1024;
  const std::int64_t cols = std::max<std::int64_t>(g.out.x, kTileFloats / std::max<std::int64_t>(1, k_rows));
  return static_cast<int>(std::max<std::int64_t>(1, cols / g.out.x));
}

bool pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1; }

// Direct kernel for 3x3x3 stride-1 convolutions. The input is copied into a
// zero halo buffer whose rows are padded to whole 16-lane vectors, so every
// load is in bounds and lanes past the row end only ever see zeros.
using v16 = float __attribute__((vector_size(64)));
constexpr int kLanes = 16;
constexpr int kTaps = 27;
constexpr int kOutBlock = 8;

inline v16 load16(const float* p) {
  v16 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

struct Halo {
  int xp = 0, yp = 0, zp = 0, blocks = 0;
  std::int64_t channel_stride = 0;
  const float* data = nullptr;
};

thread_local std::vector<float> t_halo;
thread_local std::vector<float> t_packed;
thread_local std::vector<v16> t_vec;

Halo make_halo(const Tensor& in) {
  const Shape3 s = in.shape;
  Halo h;
  h.blocks = (s.x + kLanes - 1) / kLanes;
  h.xp = h.blocks * kLanes + kLanes;
  h.yp = s.y + 2;
  h.zp = s.z + 2;
  h.channel_stride = std::int64_t{h.xp} * h.yp * h.zp;
  t_halo.assign(std::size_t(in.channels * h.channel_stride), 0.0f);
  for (int c = 0; c < in.channels; ++c)
    for (int z = 0; z < s.z; ++z)
      for (int y = 0; y < s.y; ++y)
        std::memcpy(t_halo.data() + c * h.channel_stride + (std::int64_t{z + 1} * h.yp + y + 1) * h.xp + 1,
                    in.data.data() + c * s.voxels() + s.index(0, y, z), sizeof(float) * s.x);
  h.data = t_halo.data();
  return h;
}

// Packs weight(o, i, tap) into [o / 8][i][tap][o % 8], zero-filling the last block.
template <typename Weight>
void pack_weights(int out_channels, int in_channels, Weight weight) {
  const int blocks = (out_channels + kOutBlock - 1) / kOutBlock;
  t_packed.assign(std::size_t(blocks) * in_channels * kTaps * kOutBlock, 0.0f);
  for (int o = 0; o < out_channels; ++o)
    for (int i = 0; i < in_channels; ++i)
      for (int t = 0; t < kTaps; ++t)
        t_packed[((std::size_t(o / kOutBlock) * in_channels + i) * kTaps + t) * kOutBlock + o % kOutBlock] =
            weight(o, i, t);
}

// out(o) = sum_i sum_tap packed(o, i, tap) * halo(i) shifted by tap (+ bias).
void direct_forward(const Halo& h, int in_channels, const Shape3& s, int out_channels,
                    const float* bias, Tensor& out) {
  const int blocks = (out_channels + kOutBlock - 1) / kOutBlock;
  for (int ob = 0; ob < blocks; ++ob) {
    const int nb = std::min(kOutBlock, out_channels - ob * kOutBlock);
    const float* wb = t_packed.data() + std::size_t(ob) * in_channels * kTaps * kOutBlock;
    for (int z = 0; z < s.z; ++z)
      for (int y = 0; y < s.y; ++y)
        for (int xb = 0; xb < h.blocks; ++xb) {
          v16 acc[kOutBlock] = {};
          for (int i = 0; i < in_channels; ++i) {
            const float* base = h.data + i * h.channel_stride + xb * kLanes;
            const float* w = wb + std::size_t(i) * kTaps * kOutBlock;
            for (int kz = 0; kz < 3; ++kz)
              for (int ky = 0; ky < 3; ++ky) {
                const float* row = base + (std::int64_t{z + kz} * h.yp + y + ky) * h.xp;
                for (int kx = 0; kx < 3; ++kx, w += kOutBlock) {
                  const v16 x = load16(row + kx);
                  for (int c = 0; c < kOutBlock; ++c) acc[c] += x * w[c];
                }
              }
          }
          const int x0 = xb * kLanes;
          const int len = std::min(kLanes, s.x - x0);
          for (int c = 0; c < nb; ++c) {
            const int o = ob * kOutBlock + c;
            float lane[kLanes];
            std::memcpy(lane, &acc[c], sizeof lane);
            float* dst = out.data.data() + o * s.voxels() + s.index(x0, y, z);
            const float b = bias ? bias[o] : 0.0f;
            for (int l = 0; l < len; ++l) dst[l] = lane[l] + b;
          }
        }
  }
}

// grad_weight(o, i, tap) += sum_v dy(o, v) * halo(i, v + tap).
void direct_grad_weight(const Halo& h, int in_channels, const Tensor& dy, float* grad_weight) {
  const Shape3 s = dy.shape;
  const int out_channels = dy.channels;
  const int blocks = (out_channels + kOutBlock - 1) / kOutBlock;
  const int slice_vecs = s.y * h.blocks;
  // z-slab whose gathered dy (8 vectors per position) stays around 128 KiB.
  const int slab = std::clamp(2048 / (slice_vecs * kOutBlock), 1, s.z);
  std::vector<v16> partial(std::size_t(out_channels) * in_channels * kTaps, v16{});
  t_vec.resize(std::size_t(slab) * slice_vecs * kOutBlock);
  for (int ob = 0; ob < blocks; ++ob) {
    const int nb = std::min(kOutBlock, out_channels - ob * kOutBlock);
    for (int z0 = 0; z0 < s.z; z0 += slab) {
      const int z1 = std::min(s.z, z0 + slab);
      // Gathered as [z][y][xb][c], zero past the row end and for unused c.
      std::fill(t_vec.begin(), t_vec.end(), v16{});
      for (int z = z0; z < z1; ++z)
        for (int y = 0; y < s.y; ++y)
          for (int xb = 0; xb < h.blocks; ++xb) {
            const int x0 = xb * kLanes;
            const int len = std::min(kLanes, s.x - x0);
            v16* dst = t_vec.data() + ((std::size_t(z - z0) * s.y + y) * h.blocks + xb) * kOutBlock;
            for (int c = 0; c < nb; ++c)
              std::memcpy(&dst[c], dy.data.data() + (ob * kOutBlock + c) * s.voxels() + s.index(x0, y, z),
                          sizeof(float) * len);
          }
      for (int i = 0; i < in_channels; ++i) {
        const float* base = h.data + i * h.channel_stride;
        int tap = 0;
        for (int kz = 0; kz < 3; ++kz)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx, ++tap) {
              v16 acc[kOutBlock] = {};
              const v16* d = t_vec.data();
              for (int z = z0; z < z1; ++z)
                for (int y = 0; y < s.y; ++y) {
                  const float* row = base + (std::int64_t{z + kz} * h.yp + y + ky) * h.xp + kx;
                  for (int xb = 0; xb < h.blocks; ++xb, d += kOutBlock) {
                    const v16 x = load16(row + xb * kLanes);
                    for (int c = 0; c < kOutBlock; ++c) acc[c] += d[c] * x;
                  }
                }
              for (int c = 0; c < nb; ++c)
                partial[(std::size_t(ob * kOutBlock + c) * in_channels + i) * kTaps + tap] += acc[c];
            }
      }
    }
  }
  for (std::size_t k = 0; k < partial.size(); ++k) {
    float lane[kLanes];
    std::memcpy(lane, &partial[k], sizeof lane);
    double sum = 0.0;
    for (float v : lane) sum += v;
    grad_weight[k] += static_cast<float>(sum);
  }
}

// Fixed-order lane-parallel reductions in double precision; the compiler may
// not reassociate a plain scalar loop, which leaves it unvectorized.
using v8d = double __attribute__((vector_size(64)));
using v8f = float __attribute__((vector_size(32)));

inline v8d widen(const float* p) {
  v8f f;
  std::memcpy(&f, p, sizeof f);
  return __builtin_convertvector(f, v8d);
}

inline double lanes_sum(v8d a) {
  double s = 0.0;
  for (int i = 0; i < 8; ++i) s += a[i];
  return s;
}

double reduce_sum(const float* x, std::int64_t n) {
  v8d a{}, b{};
  std::int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    a += widen(x + i);
    b += widen(x + i + 8);
  }
  double s = lanes_sum(a + b);
  for (; i < n; ++i) s += x[i];
  return s;
}

double reduce_sq_dev(const float* x, std::int64_t n, double mean) {
  v8d a{}, b{};
  std::int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const v8d d0 = widen(x + i) - mean, d1 = widen(x + i + 8) - mean;
    a += d0 * d0;
    b += d1 * d1;
  }
  double s = lanes_sum(a + b);
  for (; i < n; ++i) s += (x[i] - mean) * (x[i] - mean);
  return s;
}

double reduce_dot(const float* x, const float* y, std::int64_t n) {
  v8d a{}, b{};
  std::int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    a += widen(x + i) * widen(y + i);
    b += widen(x + i + 8) * widen(y + i + 8);
  }
  double s = lanes_sum(a + b);
  for (; i < n; ++i) s += double(x[i]) * y[i];
  return s;
}

bool use_direct(const ConvGeometry& g) { return g.kernel == 3 && g.stride == 1; }

}  // namespace

int conv_output_extent(int in, int kernel, int stride) {
  return (in + 2 * (kernel / 2) - kernel) / stride + 1;
}

void conv3d_forward(const Tensor& in, std::span<const float> weight, std::span<const float> bias,
                    int out_channels, int kernel, int stride, Tensor& out) {
  const ConvGeometry g = make_geometry(in.shape, kernel, stride);
  const std::int64_t k_rows = in.channels * g.rows();
  if (static_cast<std::int64_t>(weight.size()) != out_channels * k_rows)
    throw ShapeError("conv3d weight size mismatch");

  if (!(out.channels == out_channels && out.shape == g.out)) out = Tensor(out_channels, g.out);
  const std::int64_t n = g.out.voxels();
  ConstMatMap w(weight.data(), out_channels, k_rows);
  MatMap y(out.data.data(), out_channels, n);

  if (use_direct(g)) {
    pack_weights(out_channels, in.channels, [&](int o, int i, int t) {
      return weight[(std::size_t(o) * in.channels + i) * kTaps + t];
    });
    direct_forward(make_halo(in), in.channels, g.out, out_channels, bias.data(), out);
    return;
  }
  if (pointwise(g)) {
    y.noalias() = w * ConstMatMap(in.data.data(), k_rows, n);
  } else {
    const int total_rows = g.out.y * g.out.z;
    const int tile = rows_per_tile(g, k_rows);
    for (int r0 = 0; r0 < total_rows; r0 += tile) {
      const int r1 = std::min(total_rows, r0 + tile);
      const std::int64_t c0 = std::int64_t{r0} * g.out.x, width = std::int64_t{r1 - r0} * g.out.x;
      t_col.resize(std::size_t(k_rows * width));
      im2col(in, g, r0, r1, t_col.data());
      y.middleCols(c0, width).noalias() = w * ConstMatMap(t_col.data(), k_rows, width);
    }
  }
  for (int c = 0; c < out_channels; ++c) y.row(c).array() += bias[c];
}

void conv3d_backward(const Tensor& in, std::span<const float> weight, int out_channels, int kernel,
                     int stride, const Tensor& grad_out, Tensor* grad_in,
                     std::span<float> grad_weight, std::span<float> grad_bias) {
  const ConvGeometry g = make_geometry(in.shape, kernel, stride);
  const std::int64_t k_rows = in.channels * g.rows();
  const std::int64_t n = g.out.voxels();

  ConstMatMap dy(grad_out.data.data(), out_channels, n);
  ConstMatMap w(weight.data(), out_channels, k_rows);
  MatMap gw(grad_weight.data(), out_channels, k_rows);
  for (int c = 0; c < out_channels; ++c)
    grad_bias[c] += static_cast<float>(reduce_sum(grad_out.data.data() + c * n, n));
  if (grad_in && !grad_in->same_layout(in)) *grad_in = Tensor(in.channels, in.shape);

  if (use_direct(g)) {
    direct_grad_weight(make_halo(in), in.channels, grad_out, grad_weight.data());
    if (grad_in) {
      // Correlation of dy with the spatially flipped, channel-transposed kernel.
      pack_weights(in.channels, out_channels, [&](int i, int o, int t) {
        return weight[(std::size_t(o) * in.channels + i) * kTaps + (kTaps - 1 - t)];
      });
      direct_forward(make_halo(grad_out), out_channels, in.shape, in.channels, nullptr, *grad_in);
    }
    return;
  }
  if (pointwise(g)) {
    ConstMatMap x(in.data.data(), k_rows, n);
    gw.noalias() += dy * x.transpose();
    if (grad_in) MatMap(grad_in->data.data(), k_rows, n).noalias() = w.transpose() * dy;
    return;
  }

  if (grad_in) grad_in->fill(0.0f);
  const int total_rows = g.out.y * g.out.z;
  const int tile = rows_per_tile(g, k_rows);
  for (int r0 = 0; r0 < total_rows; r0 += tile) {
    const int r1 = std::min(total_rows, r0 + tile);
    const std::int64_t c0 = std::int64_t{r0} * g.out.x, width = std::int64_t{r1 - r0} * g.out.x;
    const auto dy_tile = dy.middleCols(c0, width);
    t_col.resize(std::size_t(k_rows * width));
    im2col(in, g, r0, r1, t_col.data());
    gw.noalias() += dy_tile * ConstMatMap(t_col.data(), k_rows, width).transpose();
    if (grad_in) {
      t_col_grad.resize(std::size_t(k_rows * width));
      MatMap(t_col_grad.data(), k_rows, width).noalias() = w.transpose() * dy_tile;
      col2im_add(t_col_grad.data(), g, r0, r1, *grad_in);
    }
  }
}

void upconv_forward(const Tensor& in, std::span<const float> weight, std::span<const float> bias,
                    int out_channels, Tensor& out) {
  const Shape3 s = in.shape;
  const Shape3 os{s.x * 2, s.y * 2, s.z * 2};
  if (static_cast<std::int64_t>(weight.size()) != std::int64_t{out_channels} * 8 * in.channels)
    throw ShapeError("upconv weight size mismatch");
  if (!(out.channels == out_channels && out.shape == os)) out = Tensor(out_channels, os);

  const std::int64_t n = s.voxels();
  t_col.resize(std::size_t(out_channels) * 8 * n);
  ConstMatMap w(weight.data(), out_channels * 8, in.channels);
  ConstMatMap x(in.data.data(), in.channels, n);
  MatMap z(t_col.data(), out_channels * 8, n);
  z.noalias() = w * x;

  for (int c = 0; c < out_channels; ++c) {
    float* dst = out.data.data() + c * os.voxels();
    for (int o = 0; o < 8; ++o) {
      const int kx = o & 1, ky = (o >> 1) & 1, kz = (o >> 2) & 1;
      const float* src = t_col.data() + (std::int64_t{c} * 8 + o) * n;
      for (int iz = 0; iz < s.z; ++iz)
        for (int iy = 0; iy < s.y; ++iy) {
          const float* srow = src + (std::int64_t{iz} * s.y + iy) * s.x;
          float* drow = dst + os.index(kx, 2 * iy + ky, 2 * iz + kz);
          for (int ix = 0; ix < s.x; ++ix) drow[2 * ix] = srow[ix] + bias[c];
        }
    }
  }
}

void upconv_backward(const Tensor& in, std::span<const float> weight, int out_channels,
                     const Tensor& grad_out, Tensor& grad_in, std::span<float> grad_weight,
                     std::span<float> grad_bias) {
  const Shape3 s = in.shape;
  const Shape3 os = grad_out.shape;
  const std::int64_t n = s.voxels();
  t_col_grad.resize(std::size_t(out_channels) * 8 * n);
  for (int c = 0; c < out_channels; ++c) {
    const float* src = grad_out.data.data() + c * os.voxels();
    double bsum = 0.0;
    for (int o = 0; o < 8; ++o) {
      const int kx = o & 1, ky = (o >> 1) & 1, kz = (o >> 2) & 1;
      float* dst = t_col_grad.data() + (std::int64_t{c} * 8 + o) * n;
      for (int iz = 0; iz < s.z; ++iz)
        for (int iy = 0; iy < s.y; ++iy) {
          const float* srow = src + os.index(kx, 2 * iy + ky, 2 * iz + kz);
          float* drow = dst + (std::int64_t{iz} * s.y + iy) * s.x;
          for (int ix = 0; ix < s.x; ++ix) {
            drow[ix] = srow[2 * ix];
            bsum += srow[2 * ix];
          }
        }
    }
    grad_bias[c] += static_cast<float>(bsum);
  }
  ConstMatMap dz(t_col_grad.data(), out_channels * 8, n);
  ConstMatMap x(in.data.data(), in.channels, n);
  MatMap gw(grad_weight.data(), out_channels * 8, in.channels);
  gw.noalias() += dz * x.transpose();

  if (!grad_in.same_layout(in)) grad_in = Tensor(in.channels, in.shape);
  ConstMatMap w(weight.data(), out_channels * 8, in.channels);
  MatMap dx(grad_in.data.data(), in.channels, n);
  dx.noalias() = w.transpose() * dz;
}

void instance_norm_forward(const Tensor& in, std::span<const float> gamma,
                           std::span<const float> beta, Tensor& out, Tensor& xhat,
                           std::vector<float>& inv_std) {
  if (!out.same_layout(in)) out = Tensor(in.channels, in.shape);
  if (!xhat.same_layout(in)) xhat = Tensor(in.channels, in.shape);
  inv_std.resize(in.channels);
  const std::int64_t n = in.voxels();
  for (int c = 0; c < in.channels; ++c) {
    auto x = in.channel(c);
    const double mean = reduce_sum(x.data(), n) / static_cast<double>(n);
    const double var = reduce_sq_dev(x.data(), n, mean) / static_cast<double>(n);
    const float istd = static_cast<float>(1.0 / std::sqrt(var + kInstanceNormEps));
    inv_std[c] = istd;
    auto xh = xhat.channel(c);
    auto y = out.channel(c);
    const float m = static_cast<float>(mean);
    for (std::int64_t i = 0; i < n; ++i) {
      xh[i] = (x[i] - m) * istd;
      y[i] = gamma[c] * xh[i] + beta[c];
    }
  }
}

void instance_norm_backward(const Tensor& xhat, std::span<const float> inv_std,
                            std::span<const float> gamma, const Tensor& grad_out,
                            Tensor& grad_in, std::span<float> grad_gamma,
                            std::span<float> grad_beta) {
  if (!grad_in.same_layout(xhat)) grad_in = Tensor(xhat.channels, xhat.shape);
  const std::int64_t n = xhat.voxels();
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int c = 0; c < xhat.channels; ++c) {
    auto xh = xhat.channel(c);
    auto dy = grad_out.channel(c);
    const double sum_dy = reduce_sum(dy.data(), n);
    const double sum_dy_xh = reduce_dot(dy.data(), xh.data(), n);
    grad_gamma[c] += static_cast<float>(sum_dy_xh);
    grad_beta[c] += static_cast<float>(sum_dy);
    // dx = gamma * istd * (dy - mean(dy) - xhat * mean(dy * xhat))
    const float scale = gamma[c] * inv_std[c];
    const float mean_dy = static_cast<float>(sum_dy * inv_n);
    const float mean_dy_xh = static_cast<float>(sum_dy_xh * inv_n);
    auto dx = grad_in.channel(c);
    for (std::int64_t i = 0; i < n; ++i) dx[i] = scale * (dy[i] - mean_dy - xh[i] * mean_dy_xh);
  }
}

void leaky_relu_inplace(Tensor& t) {
  // max(v, slope * v) equals the leaky ReLU for 0 < slope < 1 and vectorizes.
  for (float& v : t.data) v = std::max(v, v * kLeakySlope);
}

void leaky_relu_backward_inplace(const Tensor& out, Tensor& grad) {
  const float* o = out.data.data();
  float* g = grad.data.data();
  for (std::size_t i = 0; i < grad.data.size(); ++i) g[i] *= o[i] > 0.0f ? 1.0f : kLeakySlope;
}

}  // namespace f3net::nn
