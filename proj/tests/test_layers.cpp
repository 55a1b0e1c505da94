#include <doctest.h>

#include <cmath>

#include "f3net/layers.hpp"
#include "helpers.hpp"

using namespace f3net;
using namespace f3net::nn;

namespace {

struct ConvCase {
  int cin, cout, kernel, stride;
  Shape3 shape;
};

// Brute-force convolution and its adjoints, accumulated in double.
struct RefConv {
  ConvCase c;
  Shape3 out;

  explicit RefConv(const ConvCase& cc) : c(cc) {
    for (int a = 0; a < 3; ++a) out[a] = conv_output_extent(c.shape[a], c.kernel, c.stride);
  }

  template <typename F>
  void each(F f) const {
    const int k = c.kernel, pad = k / 2;
    for (int o = 0; o < c.cout; ++o)
      for (int oz = 0; oz < out.z; ++oz)
        for (int oy = 0; oy < out.y; ++oy)
          for (int ox = 0; ox < out.x; ++ox)
            for (int i = 0; i < c.cin; ++i)
              for (int kz = 0; kz < k; ++kz)
                for (int ky = 0; ky < k; ++ky)
                  for (int kx = 0; kx < k; ++kx) {
                    const int ix = ox * c.stride + kx - pad, iy = oy * c.stride + ky - pad,
                              iz = oz * c.stride + kz - pad;
                    if (ix < 0 || iy < 0 || iz < 0 || ix >= c.shape.x || iy >= c.shape.y ||
                        iz >= c.shape.z)
                      continue;
                    const std::size_t w = ((std::size_t(o) * c.cin + i) * k + kz) * k * k + ky * k + kx;
                    const std::size_t xi = std::size_t(i) * c.shape.voxels() + c.shape.index(ix, iy, iz);
                    const std::size_t yi = std::size_t(o) * out.voxels() + out.index(ox, oy, oz);
                    f(w, xi, yi);
                  }
  }
};

double rel_err(const std::vector<double>& ref, std::span<const float> got) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num += (ref[i] - got[i]) * (ref[i] - got[i]);
    den += ref[i] * ref[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
}

}  // namespace

TEST_CASE("conv output extent") {
  CHECK(conv_output_extent(32, 3, 1) == 32);
  CHECK(conv_output_extent(32, 3, 2) == 16);
  CHECK(conv_output_extent(7, 3, 2) == 4);
  CHECK(conv_output_extent(5, 1, 1) == 5);
}

TEST_CASE("conv3d forward and backward match brute force") {
  const ConvCase cases[] = {
      {1, 8, 3, 1, {16, 16, 16}},  {3, 5, 3, 1, {5, 7, 3}},   {4, 9, 3, 1, {17, 4, 6}},
      {2, 16, 3, 1, {20, 3, 2}},   {8, 8, 3, 2, {8, 8, 8}},   {3, 4, 3, 2, {7, 5, 6}},
      {5, 3, 1, 1, {6, 5, 4}},     {2, 3, 5, 1, {6, 6, 5}},   {16, 8, 3, 1, {32, 2, 2}},
  };
  std::mt19937_64 rng(21);
  for (const ConvCase& cc : cases) {
    CAPTURE(cc.cin);
    CAPTURE(cc.cout);
    CAPTURE(cc.stride);
    CAPTURE(cc.shape.x);
    const RefConv ref(cc);
    const Tensor x = test::random_tensor(cc.cin, cc.shape, rng);
    const int taps = cc.kernel * cc.kernel * cc.kernel;
    const Tensor wt = test::random_tensor(1, {cc.cout * cc.cin * taps, 1, 1}, rng);
    const Tensor bt = test::random_tensor(1, {cc.cout, 1, 1}, rng);
    const Tensor dy = test::random_tensor(cc.cout, ref.out, rng);

    std::vector<double> y(std::size_t(cc.cout) * ref.out.voxels());
    for (int o = 0; o < cc.cout; ++o)
      for (std::int64_t p = 0; p < ref.out.voxels(); ++p) y[o * ref.out.voxels() + p] = bt.data[o];
    std::vector<double> gw(wt.data.size(), 0.0), gx(x.data.size(), 0.0), gb(cc.cout, 0.0);
    ref.each([&](std::size_t w, std::size_t xi, std::size_t yi) {
      y[yi] += double(wt.data[w]) * x.data[xi];
      gw[w] += double(dy.data[yi]) * x.data[xi];
      gx[xi] += double(dy.data[yi]) * wt.data[w];
    });
    for (int o = 0; o < cc.cout; ++o)
      for (std::int64_t p = 0; p < ref.out.voxels(); ++p) gb[o] += dy.data[o * ref.out.voxels() + p];

    Tensor out;
    conv3d_forward(x, wt.data, bt.data, cc.cout, cc.kernel, cc.stride, out);
    REQUIRE(out.channels == cc.cout);
    REQUIRE(out.shape == ref.out);
    CHECK(rel_err(y, out.data) < 1e-5);

    std::vector<float> grad_w(wt.data.size(), 0.5f), grad_b(cc.cout, 0.25f);
    Tensor grad_in(cc.cin, cc.shape);
    grad_in.fill(7.0f);
    conv3d_backward(x, wt.data, cc.cout, cc.kernel, cc.stride, dy, &grad_in, grad_w, grad_b);
    // Parameter gradients accumulate, the input gradient is overwritten.
    for (double& v : gw) v += 0.5;
    for (double& v : gb) v += 0.25;
    CHECK(rel_err(gw, grad_w) < 1e-5);
    CHECK(rel_err(gb, grad_b) < 1e-5);
    CHECK(rel_err(gx, grad_in.data) < 1e-5);
  }
}

TEST_CASE("upconv matches brute force") {
  std::mt19937_64 rng(22);
  const int cin = 6, cout = 3;
  const Shape3 s{3, 4, 2}, o{6, 8, 4};
  const Tensor x = test::random_tensor(cin, s, rng);
  const Tensor wt = test::random_tensor(1, {cout * 8 * cin, 1, 1}, rng);
  const Tensor bt = test::random_tensor(1, {cout, 1, 1}, rng);
  const Tensor dy = test::random_tensor(cout, o, rng);
  std::vector<double> y(cout * o.voxels()), gw(wt.data.size(), 0), gx(x.data.size(), 0), gb(cout, 0);
  for (int c = 0; c < cout; ++c)
    for (int z = 0; z < o.z; ++z)
      for (int yy = 0; yy < o.y; ++yy)
        for (int xx = 0; xx < o.x; ++xx) {
          const std::size_t yi = c * o.voxels() + o.index(xx, yy, z);
          y[yi] = bt.data[c];
          gb[c] += dy.data[yi];
          for (int i = 0; i < cin; ++i) {
            // weight layout (out, 2, 2, 2, in): taps ordered z, y, x
            const int tap = (z % 2) * 4 + (yy % 2) * 2 + (xx % 2);
            const std::size_t w = (std::size_t(c) * 8 + tap) * cin + i;
            const std::size_t xi = i * s.voxels() + s.index(xx / 2, yy / 2, z / 2);
            y[yi] += double(wt.data[w]) * x.data[xi];
            gw[w] += double(dy.data[yi]) * x.data[xi];
            gx[xi] += double(dy.data[yi]) * wt.data[w];
          }
        }
  Tensor out;
  upconv_forward(x, wt.data, bt.data, cout, out);
  REQUIRE(out.shape == o);
  CHECK(rel_err(y, out.data) < 1e-5);
  std::vector<float> grad_w(wt.data.size(), 0.0f), grad_b(cout, 0.0f);
  Tensor grad_in;
  upconv_backward(x, wt.data, cout, dy, grad_in, grad_w, grad_b);
  CHECK(rel_err(gw, grad_w) < 1e-5);
  CHECK(rel_err(gb, grad_b) < 1e-5);
  CHECK(rel_err(gx, grad_in.data) < 1e-5);
}

TEST_CASE("instance norm normalizes each channel and its gradient matches finite differences") {
  std::mt19937_64 rng(23);
  const int c = 3;
  const Shape3 s{4, 3, 5};
  Tensor x = test::random_tensor(c, s, rng, 2.0f);
  for (float& v : x.data) v += 1.5f;
  const Tensor gamma = test::random_tensor(1, {c, 1, 1}, rng);
  const Tensor beta = test::random_tensor(1, {c, 1, 1}, rng);
  const Tensor r = test::random_tensor(c, s, rng);

  Tensor y, xhat;
  std::vector<float> inv_std;
  instance_norm_forward(x, std::vector<float>(c, 1.0f), std::vector<float>(c, 0.0f), y, xhat, inv_std);
  for (int ch = 0; ch < c; ++ch) {
    double m = 0, q = 0;
    for (float v : y.channel(ch)) {
      m += v;
      q += double(v) * v;
    }
    m /= double(s.voxels());
    q /= double(s.voxels());
    CHECK(std::abs(m) < 1e-5);
    CHECK(q == doctest::Approx(1.0).epsilon(1e-3));
  }

  auto loss = [&](const Tensor& in) {
    Tensor o, xh;
    std::vector<float> is;
    instance_norm_forward(in, gamma.data, beta.data, o, xh, is);
    double l = 0;
    for (std::size_t i = 0; i < o.data.size(); ++i) l += double(o.data[i]) * r.data[i];
    return l;
  };
  instance_norm_forward(x, gamma.data, beta.data, y, xhat, inv_std);
  Tensor gx;
  std::vector<float> gg(c, 0.0f), gbeta(c, 0.0f);
  instance_norm_backward(xhat, inv_std, gamma.data, r, gx, gg, gbeta);
  std::vector<double> num(x.data.size());
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    Tensor xp = x, xm = x;
    xp.data[i] += 1e-2f;
    xm.data[i] -= 1e-2f;
    num[i] = (loss(xp) - loss(xm)) / 2e-2;
  }
  CHECK(rel_err(num, gx.data) < 2e-3);
  for (int ch = 0; ch < c; ++ch) {
    double sb = 0, sg = 0;
    for (std::int64_t p = 0; p < s.voxels(); ++p) {
      sb += r.data[ch * s.voxels() + p];
      sg += double(r.data[ch * s.voxels() + p]) * xhat.data[ch * s.voxels() + p];
    }
    CHECK(gbeta[ch] == doctest::Approx(sb).epsilon(1e-4));
    CHECK(gg[ch] == doctest::Approx(sg).epsilon(1e-4));
  }
}

TEST_CASE("leaky relu forward and backward") {
  Tensor t(1, {4, 1, 1});
  t.data = {-2.0f, 0.0f, 3.0f, -0.5f};
  leaky_relu_inplace(t);
  CHECK(t.data[0] == doctest::Approx(-0.02));
  CHECK(t.data[1] == 0.0f);
  CHECK(t.data[2] == 3.0f);
  CHECK(t.data[3] == doctest::Approx(-0.005));
  Tensor g(1, {4, 1, 1});
  g.fill(2.0f);
  leaky_relu_backward_inplace(t, g);
  CHECK(g.data[0] == doctest::Approx(0.02));
  CHECK(g.data[2] == 2.0f);
  CHECK(g.data[3] == doctest::Approx(0.02));
}
