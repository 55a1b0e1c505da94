#include <doctest.h>

#include <cmath>
#include <fstream>

#include "f3net/checkpoint.hpp"
#include "f3net/error.hpp"
#include "f3net/network.hpp"
#include "helpers.hpp"

using namespace f3net;

namespace {

NetworkSpec tiny_spec(MaskScope scope = MaskScope::AllStages) {
  NetworkSpec s;
  s.num_stages = 3;
  s.base_channels = 4;
  s.mask_scope = scope;
  return s;
}

double weighted_sum(const Tensor& t, const Tensor& r) {
  double l = 0;
  for (std::size_t i = 0; i < t.data.size(); ++i) l += double(t.data[i]) * r.data[i];
  return l;
}

}  // namespace

TEST_CASE("channel schedule doubles and caps") {
  NetworkSpec s;
  s.num_stages = 4;
  s.base_channels = 16;
  CHECK(s.channels_per_stage() == std::vector<int>{16, 32, 64, 128});
  CHECK(NetworkSpec::paper().channels_per_stage() == std::vector<int>{32, 64, 128, 256, 320});
  CHECK(NetworkSpec::desk().channels_per_stage() == std::vector<int>{8, 16, 32, 64});
  CHECK(s.patch_divisor() == 8);
  NetworkSpec bad = s;
  bad.num_stages = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidConfig);
}

TEST_CASE("encoder pyramid shapes") {
  NetworkSpec s;
  s.num_stages = 4;
  s.base_channels = 16;
  const F3NetModel model(s, 1);
  std::mt19937_64 rng(1);
  const Tensor patch = test::random_tensor(1, {80, 112, 80}, rng);
  const EncoderFeatures f = encode(model, patch, Modality::T1);
  REQUIRE(f.stages.size() == 4);
  const Shape3 expected[] = {{80, 112, 80}, {40, 56, 40}, {20, 28, 20}, {10, 14, 10}};
  const int channels[] = {16, 32, 64, 128};
  for (int i = 0; i < 4; ++i) {
    CHECK(f.stages[i].shape == expected[i]);
    CHECK(f.stages[i].channels == channels[i]);
  }
  CHECK_THROWS_AS(encode(model, Tensor(1, {30, 30, 30}), Modality::T1), ShapeError);
}

TEST_CASE("mask_features and fuse") {
  const F3NetModel model(tiny_spec(), 2);
  std::mt19937_64 rng(2);
  const EncoderFeatures f = encode(model, test::random_tensor(1, {8, 8, 8}, rng), Modality::T2);
  ModalityPresence p = ModalityPresence::all();
  const EncoderFeatures kept = mask_features(f, Modality::T2, p);
  for (std::size_t s = 0; s < f.stages.size(); ++s) CHECK(kept.stages[s].data == f.stages[s].data);

  p[Modality::T2] = false;
  const EncoderFeatures gone = mask_features(f, Modality::T2, p);
  for (const Tensor& t : gone.stages)
    for (float v : t.data) REQUIRE(v == 0.0f);
  const EncoderFeatures deep = mask_features(f, Modality::T2, p, MaskScope::DeepestOnly);
  CHECK(deep.stages[0].data == f.stages[0].data);
  for (float v : deep.stages.back().data) REQUIRE(v == 0.0f);

  std::vector<EncoderFeatures> six(6, gone);
  six[3] = f;
  const EncoderFeatures one = fuse(six);
  for (std::size_t s = 0; s < f.stages.size(); ++s) CHECK(one.stages[s].data == f.stages[s].data);
  six[1] = f;
  const EncoderFeatures two = fuse(six);
  for (std::size_t s = 0; s < f.stages.size(); ++s)
    for (std::size_t i = 0; i < f.stages[s].data.size(); ++i)
      REQUIRE(two.stages[s].data[i] == 2.0f * f.stages[s].data[i]);
  const EncoderFeatures none = fuse(std::vector<EncoderFeatures>(6, gone));
  for (const Tensor& t : none.stages)
    for (float v : t.data) REQUIRE(v == 0.0f);
}

TEST_CASE("forward shape, determinism and masked-content invariance") {
  for (MaskScope scope : {MaskScope::AllStages, MaskScope::DeepestOnly}) {
    const F3NetModel model(tiny_spec(scope), 3);
    std::mt19937_64 rng(3);
    Tensor patch = test::random_tensor(6, {8, 16, 8}, rng);
    const ModalityPresence p = ModalityPresence::of({Modality::T1, Modality::FLAIR});
    for (Modality m : kAllModalities)
      if (!p[m]) std::fill(patch.channel(index_of(m)).begin(), patch.channel(index_of(m)).end(), 0.0f);
    const Tensor a = forward(model, patch, p);
    CHECK(a.channels == 2);
    CHECK(a.shape == Shape3{8, 16, 8});
    CHECK(forward(model, patch, p).data == a.data);
    Tensor noisy = patch;
    const Tensor noise = test::random_tensor(6, patch.shape, rng, 5.0f);
    for (Modality m : kAllModalities)
      if (!p[m])
        for (std::int64_t i = 0; i < patch.voxels(); ++i)
          noisy.data[index_of(m) * patch.voxels() + i] = noise.data[index_of(m) * patch.voxels() + i];
    CHECK(forward(model, noisy, p).data == a.data);
  }
}

TEST_CASE("whole-network gradients match directional finite differences") {
  for (MaskScope scope : {MaskScope::AllStages, MaskScope::DeepestOnly}) {
    CAPTURE(to_string(scope));
    F3NetModel model(tiny_spec(scope), 4);
    std::mt19937_64 rng(4);
    const Tensor patch = test::random_tensor(6, {8, 8, 8}, rng);
    const ModalityPresence p = ModalityPresence::of({Modality::T1, Modality::T2, Modality::ADC});
    const Tensor r = test::random_tensor(2, {8, 8, 8}, rng);

    ForwardPass pass(model);
    pass.run(patch, p);
    Gradients g(model);
    Tensor gin;
    pass.backward(r, g, &gin);

    // Direction over every parameter.
    std::vector<std::vector<float>> dir;
    double analytic = 0;
    std::normal_distribution<float> n(0.0f, 1.0f);
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
      dir.emplace_back(model.parameters()[i].value.size());
      for (std::size_t j = 0; j < dir[i].size(); ++j) {
        // Steps relative to each weight keep the probe inside the smooth region.
        dir[i][j] = n(rng) * (std::abs(model.parameters()[i].value[j]) + 0.01f);
        // An absent encoder under deepest_only normalizes a constant zero-image
        // response, which is not differentiable in a finite-difference sense.
        const int grp = model.group_of(i);
        if (grp != kSharedGroup && !p.present[grp]) dir[i][j] = 0.0f;
        analytic += double(dir[i][j]) * g.values[i][j];
      }
    }
    auto shifted = [&](double h) {
      F3NetModel m2 = model;
      for (std::size_t i = 0; i < dir.size(); ++i)
        for (std::size_t j = 0; j < dir[i].size(); ++j)
          m2.parameters()[i].value[j] += static_cast<float>(h * dir[i][j]);
      return weighted_sum(forward(m2, patch, p), r);
    };
    const double h = 3e-4;
    const double numeric = (shifted(h) - shifted(-h)) / (2 * h);
    CHECK(std::abs(numeric - analytic) < 3e-2 * std::abs(analytic));

    // Input gradient along a random direction on the present channels.
    const Tensor d = test::random_tensor(6, patch.shape, rng);
    double in_analytic = 0;
    for (std::size_t i = 0; i < d.data.size(); ++i) in_analytic += double(d.data[i]) * gin.data[i];
    auto in_shift = [&](double hh) {
      Tensor x = patch;
      for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += static_cast<float>(hh * d.data[i]);
      return weighted_sum(forward(model, x, p), r);
    };
    const double in_numeric = (in_shift(h) - in_shift(-h)) / (2 * h);
    CHECK(std::abs(in_numeric - in_analytic) < 3e-2 * std::abs(in_analytic));

    for (Modality m : kAllModalities)
      if (!p[m])
        for (float v : gin.channel(index_of(m))) REQUIRE(v == 0.0f);
  }
}

TEST_CASE("absent encoders receive no gradient") {
  const F3NetModel model(tiny_spec(), 5);
  std::mt19937_64 rng(5);
  const Tensor patch = test::random_tensor(6, {8, 8, 8}, rng);
  const ModalityPresence p = ModalityPresence::of({Modality::FLAIR});
  ForwardPass pass(model);
  pass.run(patch, p);
  Gradients g(model);
  pass.backward(test::random_tensor(2, {8, 8, 8}, rng), g);
  for (Modality m : kAllModalities) {
    const double norm = g.group_norm(model, index_of(m));
    if (p[m]) CHECK(norm > 0.0);
    else CHECK(norm == 0.0);
  }
  CHECK(g.group_norm(model, kSharedGroup) > 0.0);
}

TEST_CASE("initialization is seeded and parameters are grouped") {
  const F3NetModel a(tiny_spec(), 9), b(tiny_spec(), 9), c(tiny_spec(), 10);
  REQUIRE(a.parameters().size() == b.parameters().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(a.parameters()[i].value == b.parameters()[i].value);
    differs = differs || a.parameters()[i].value != c.parameters()[i].value;
    const std::string& name = a.parameters()[i].name;
    if (name.starts_with("encoder.flair.")) CHECK(a.group_of(i) == index_of(Modality::FLAIR));
    if (name.starts_with("decoder.")) CHECK(a.group_of(i) == kSharedGroup);
  }
  CHECK(differs);
}

TEST_CASE("checkpoint round trip preserves parameters and spec") {
  test::TempDir dir("ckpt");
  const F3NetModel model(tiny_spec(MaskScope::DeepestOnly), 6);
  Checkpoint ck = make_checkpoint(model);
  ck.meta["epoch"] = 3;
  write_checkpoint(dir.path / "m.ckpt", ck);
  const Checkpoint back = read_checkpoint(dir.path / "m.ckpt");
  CHECK(back.spec == model.spec());
  CHECK(back.meta["epoch"] == 3);
  const F3NetModel m2 = model_from_checkpoint(back);
  for (std::size_t i = 0; i < model.parameters().size(); ++i)
    CHECK(m2.parameters()[i].value == model.parameters()[i].value);

  std::ofstream(dir.path / "bad.ckpt") << "not a checkpoint";
  CHECK_THROWS_AS(read_checkpoint(dir.path / "bad.ckpt"), CorruptFile);
}
