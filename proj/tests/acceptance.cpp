// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "f3net/case_layout.hpp"
#include "f3net/cli.hpp"
#include "f3net/inference.hpp"
#include "f3net/network.hpp"
#include "f3net/nifti.hpp"
#include "f3net/objective.hpp"
#include "f3net/pathoseg.hpp"
#include "f3net/phantom.hpp"
#include "f3net/report.hpp"
#include "f3net/trainer.hpp"

using namespace f3net;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// A criterion whose DSC drops by at most this much when modalities are removed
// still counts as flat.
constexpr double kFlatTolerance = 0.01;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& run) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = run();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("f3net_accept_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

ModalityPresence random_presence(std::mt19937_64& rng) {
  ModalityPresence p;
  do {
    for (bool& b : p.present) b = (rng() & 1) != 0;
  } while (p.count() == 0 || p.count() == kNumModalities);
  return p;
}

Tensor random_patch(const Shape3& s, std::mt19937_64& rng, float scale = 1.0f) {
  Tensor t(kNumModalities, s);
  std::normal_distribution<float> n(0.0f, scale);
  for (float& v : t.data) v = n(rng);
  return t;
}

void zero_absent(Tensor& t, const ModalityPresence& p) {
  for (Modality m : kAllModalities)
    if (!p[m]) std::fill(t.channel(index_of(m)).begin(), t.channel(index_of(m)).end(), 0.0f);
}

MultiModalCase restrict_to(const MultiModalCase& c, const ModalityPresence& keep) {
  MultiModalCase out = c;
  for (Modality m : kAllModalities)
    if (!keep[m]) out.volumes[index_of(m)] = VolumeGrid(c.geometry());
  out.presence = keep;
  return out;
}

MultiModalCase phantom(std::uint64_t seed, int lesions) {
  PhantomSpec spec;
  spec.case_id = fmt("case_%04d", int(seed));
  spec.seed = seed;
  spec.random_lesions = lesions;
  MultiModalCase c = generate_phantom(spec);
  normalize_case(c);
  return c;
}

// ---------------------------------------------------------------------------

Outcome masked_content_invariance() {
  const NetworkSpec spec = TrainConfig::desk().network;
  const Shape3 patch = TrainConfig::desk().patch_shape;
  std::mt19937_64 rng(101);
  int checked = 0;
  std::int64_t logits = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const F3NetModel model(spec, rng());
    const ModalityPresence p = random_presence(rng);
    Tensor x = random_patch(patch, rng);
    zero_absent(x, p);
    Tensor noisy = x;
    std::normal_distribution<float> n(0.0f, 10.0f);
    for (Modality m : kAllModalities)
      if (!p[m])
        for (float& v : noisy.channel(index_of(m))) v = n(rng);
    const Tensor a = forward(model, x, p);
    const Tensor b = forward(model, noisy, p);
    if (a.data != b.data) return {false, fmt("trial %d presence %s: logits differ", trial, to_string(p).c_str())};
    ++checked;
    logits += static_cast<std::int64_t>(a.data.size());
  }
  return {true, fmt("%d triples, %lld logits bit-identical", checked, static_cast<long long>(logits))};
}

Outcome masked_gradient_nullity() {
  TrainConfig cfg = TrainConfig::desk();
  const F3NetModel model(cfg.network, 7);
  std::mt19937_64 rng(202);
  const ModalityPresence p = ModalityPresence::of({Modality::T1, Modality::FLAIR, Modality::ADC});
  Tensor x = random_patch(cfg.patch_shape, rng);
  const MultiModalCase ph = phantom(3, 2);
  std::vector<std::int32_t> target(ph.label->data.begin(), ph.label->data.end());
  for (auto& t : target) t = t > 0;

  auto loss_of = [&](const Tensor& in) {
    const Tensor logits = forward(model, in, p);
    const std::vector<double> ld(logits.data.begin(), logits.data.end());
    return combined_loss(ld, 2, target, cfg.loss_weights).total;
  };

  // Central differences on voxels of the masked channels.
  double worst = 0.0;
  const double h = 1e-2;
  int probes = 0;
  for (Modality m : kAllModalities) {
    if (p[m]) continue;
    for (int k = 0; k < 4; ++k) {
      const std::size_t i = index_of(m) * cfg.patch_shape.voxels() + rng() % cfg.patch_shape.voxels();
      Tensor up = x, dn = x;
      up.data[i] += static_cast<float>(h);
      dn.data[i] -= static_cast<float>(h);
      worst = std::max(worst, std::abs(loss_of(up) - loss_of(dn)) / (2 * h));
      ++probes;
    }
  }
  // Analytic input gradient on the same channels.
  ForwardPass pass(model);
  const Tensor& logits = pass.run(x, p);
  const std::vector<double> ld(logits.data.begin(), logits.data.end());
  const LossValue lv = combined_loss(ld, 2, target, cfg.loss_weights, true);
  Tensor gl(logits.channels, logits.shape);
  for (std::size_t i = 0; i < lv.grad.size(); ++i) gl.data[i] = static_cast<float>(lv.grad[i]);
  Gradients grads(model);
  Tensor gin;
  pass.backward(gl, grads, &gin);
  double analytic = 0.0;
  for (Modality m : kAllModalities)
    if (!p[m])
      for (float v : gin.channel(index_of(m))) analytic = std::max(analytic, double(std::abs(v)));
  if (!(worst < 1e-8) || !(analytic < 1e-8))
    return {false, fmt("max |dL/dx| masked: fd %.3g analytic %.3g", worst, analytic)};

  // A train_step with T2 absent from the whole batch.
  F3NetModel trained = model;
  const F3NetModel before = model;
  std::vector<PatchSample> batch;
  Rng srng(5);
  for (int b = 0; b < cfg.batch_size; ++b) {
    ModalityPresence q = random_presence(rng);
    q[Modality::T2] = false;
    q[Modality::FLAIR] = true;
    const MultiModalCase c = restrict_to(ph, q);
    batch.push_back(sample_patch(c, cfg, srng));
  }
  OptimizerState opt(trained);
  train_step(trained, batch, cfg, opt, 0.01);
  std::size_t frozen = 0, moved = 0;
  for (std::size_t i = 0; i < trained.parameters().size(); ++i) {
    const bool same = trained.parameters()[i].value == before.parameters()[i].value;
    if (trained.group_of(i) == index_of(Modality::T2)) {
      if (!same) return {false, "T2 encoder parameter " + trained.parameters()[i].name + " changed"};
      ++frozen;
    } else if (!same) {
      ++moved;
    }
  }
  if (moved == 0) return {false, "no parameter moved at all"};
  return {true, fmt("%d fd probes max %.1g, analytic max %.1g; %zu T2 tensors bitwise unchanged", probes,
                    worst, analytic, frozen)};
}

Outcome loss_oracles() {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> g(0.0, 2.0);
  std::uniform_real_distribution<double> lam(0.0, 3.0);
  double worst_value = 0.0, worst_grad = 0.0;
  const std::size_t n = 64;  // 4x4x4
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + trial % 2;
    std::vector<double> logits(k * n);
    for (double& v : logits) v = g(rng);
    std::vector<std::int32_t> t(n);
    for (auto& v : t) v = static_cast<std::int32_t>(rng() % k);
    const LossWeights w{lam(rng), lam(rng)};

    // Independent components.
    double inter = 0, sp = 0, st = 0, ce = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = 0;
      for (int c = 0; c < k; ++c) z += std::exp(logits[c * n + i]);
      const double p_fg = 1.0 - std::exp(logits[i]) / z;
      const double tf = t[i] > 0;
      inter += p_fg * tf;
      sp += p_fg;
      st += tf;
      ce -= logits[t[i] * n + i] - std::log(z);
    }
    const double dice = 1.0 - (2 * inter + kDiceSmooth) / (sp + st + kDiceSmooth);
    ce /= double(n);
    const LossValue v = combined_loss(logits, k, t, w, true);
    worst_value = std::max(worst_value, std::abs(v.total - (w.lambda1 * dice + w.lambda2 * ce)));

    double num2 = 0, diff2 = 0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
      const double x = logits[j], h = 1e-5;
      logits[j] = x + h;
      const double up = combined_loss(logits, k, t, w).total;
      logits[j] = x - h;
      const double dn = combined_loss(logits, k, t, w).total;
      logits[j] = x;
      const double fd = (up - dn) / (2 * h);
      num2 += fd * fd;
      diff2 += (fd - v.grad[j]) * (fd - v.grad[j]);
    }
    worst_grad = std::max(worst_grad, std::sqrt(diff2 / num2));
  }
  const bool ok = worst_value <= 1e-7 && worst_grad <= 1e-4;
  return {ok, fmt("20 instances, max |L - (l1 D + l2 C)| %.2g, max gradient rel err %.2g", worst_value,
                  worst_grad)};
}

Outcome schedule() {
  const TrainConfig cfg = TrainConfig::paper();
  double worst = 0.0;
  for (int e : {0, 1, 500, 999, 1000})
    worst = std::max(worst, std::abs(lr_at(e, cfg) - 0.01 * std::pow(1.0 - e / 1000.0, 0.9)));
  const bool anchors = lr_at(0, cfg) == 0.01 && lr_at(1000, cfg) == 0.0;
  return {worst <= 1e-12 && anchors, fmt("max deviation %.2g at e in {0,1,500,999,1000}; lr(500) = %.6g", worst,
                                         lr_at(500, cfg))};
}

Outcome metric_oracle() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int edge = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Shape3 s{1 + int(rng() % 16), 1 + int(rng() % 16), 1 + int(rng() % 16)};
    const std::size_t n = s.voxels();
    double dp = u(rng), dt = u(rng);
    if (trial == 0) dp = dt = 0.0;  // both empty
    if (trial == 1) dp = 0.0, dt = 0.3;
    if (trial == 2) dp = 0.3, dt = 0.0;
    if (trial == 3) dp = dt = 1.0;
    std::vector<std::uint8_t> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = u(rng) < dp;
      b[i] = u(rng) < dt;
    }
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += a[i] && b[i];
      fp += a[i] && !b[i];
      fn += !a[i] && b[i];
      tn += !a[i] && !b[i];
    }
    edge += tp + fp == 0 || tp + fn == 0;
    auto frac = [](double num, double den, bool agree) { return den > 0 ? num / den : (agree ? 1.0 : 0.0); };
    const double dsc = frac(2.0 * tp, 2.0 * tp + fp + fn, true);
    const double sens = frac(tp, tp + fn, fp == 0);
    const double spec = frac(tn, tn + fp, fn == 0);
    const double prec = frac(tp, tp + fp, fn == 0);
    const double acc = frac(tp + tn, double(n), true);
    const MetricsRow r = confusion_metrics(a, b);
    if (r.dsc != dsc || r.sensitivity != sens || r.specificity != spec || r.precision != prec ||
        r.accuracy != acc)
      return {false, fmt("trial %d disagrees with the voxel-loop oracle", trial)};
  }
  return {true, fmt("100 pairs up to 16^3 exact, %d with an empty mask", edge)};
}

Outcome pathoseg_algebra() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto grid = [&](const Shape3& s, int max_label, double density) {
    SegMask m(Geometry{s});
    for (auto& v : m.data) v = u(rng) < density ? 1 + int(rng() % max_label) : 0;
    return m;
  };
  int checks = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Shape3 s{1 + int(rng() % 12), 1 + int(rng() % 12), 1 + int(rng() % 12)};
    const SegMask main = grid(s, 4, u(rng));
    const SegMask wmh = grid(s, 1, u(rng));
    const SegMask other = grid(s, 3, u(rng));
    const SegMask whole = merge_whole(main, wmh);
    const PathosegMask bin = binarize(whole);
    for (std::size_t i = 0; i < main.data.size(); ++i) {
      if (bin.data[i] != ((main.data[i] > 0 || wmh.data[i] > 0) ? 1 : 0)) return {false, "support union violated"};
      if (main.data[i] > 0 && whole.data[i] != main.data[i]) return {false, "main label not preserved"};
    }
    // Precedence never changes the binarized support.
    const SegMask ab = merge_distinct_masks(std::vector<SegMask>{main, other});
    const SegMask ba = merge_distinct_masks(std::vector<SegMask>{other, main});
    if (binarize(ab).data != binarize(ba).data) return {false, "support depends on precedence"};
    if (binarize(merge_whole(ab, wmh)).data != binarize(merge_whole(ba, wmh)).data)
      return {false, "whole support depends on precedence"};
    // Idempotence.
    if (merge_whole(whole, wmh).data != whole.data) return {false, "merge_whole not idempotent"};
    if (binarize(bin).data != bin.data) return {false, "binarize not idempotent"};
    if (merge_distinct_masks(std::vector<SegMask>{main}).data != main.data) return {false, "single merge not identity"};
    // Monotonicity: adding masks never removes support.
    const PathosegMask bm = binarize(main), bab = binarize(ab);
    for (std::size_t i = 0; i < main.data.size(); ++i)
      if (bm.data[i] > bab.data[i] || bm.data[i] > bin.data[i]) return {false, "support shrank"};
    checks += 7;
  }
  return {true, fmt("200 random grids up to 12^3, %d property checks", checks)};
}

Outcome overfit_smoke() {
  const auto t0 = Clock::now();
  TrainConfig cfg = TrainConfig::desk();  // 2 epochs x 100 steps = 200 steps
  PhantomSpec spec;  // make-phantom --lesions 1 --shape 32
  spec.random_lesions = 1;
  MultiModalCase c = generate_phantom(spec);
  normalize_case(c);
  F3NetModel model(cfg.network, cfg.seed);
  const std::vector<MultiModalCase> data{c};
  const TrainResult tr = train(model, data, cfg);
  PredictConfig pc;
  pc.patch_shape = cfg.patch_shape;
  const EvaluationReport r = evaluate_dataset(model, data, pc);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const int steps = cfg.max_epochs * cfg.steps_per_epoch;
  return {r.summary.dsc >= 0.90 && secs < 300.0 && steps == 200,
          fmt("%d steps, %lld lesion voxels, training-case DSC %.4f, final loss %.4f, %.0f s", steps,
              static_cast<long long>(c.label->foreground_count()), r.summary.dsc, tr.history.back().mean_loss,
              secs)};
}

Outcome missing_modality_robustness() {
  TrainConfig cfg = TrainConfig::desk();
  cfg.modality_drop_prob = 0.2;
  std::vector<MultiModalCase> train_set, eval_set;
  for (int i = 0; i < 4; ++i) train_set.push_back(phantom(100 + i, 2));
  for (int i = 0; i < 4; ++i) eval_set.push_back(phantom(200 + i, 2));
  F3NetModel model(cfg.network, cfg.seed);
  train(model, train_set, cfg);

  PredictConfig pc;
  pc.patch_shape = cfg.patch_shape;
  const ModalityPresence patterns[] = {ModalityPresence::all(),
                                       ModalityPresence::of({Modality::T1, Modality::FLAIR}),
                                       ModalityPresence::of({Modality::FLAIR})};
  double dsc[3];
  for (int k = 0; k < 3; ++k) {
    std::vector<MultiModalCase> cases;
    for (const auto& c : eval_set) cases.push_back(restrict_to(c, patterns[k]));
    dsc[k] = evaluate_dataset(model, cases, pc).summary.dsc;
  }
  const bool monotone = dsc[1] <= dsc[0] + kFlatTolerance && dsc[2] <= dsc[1] + kFlatTolerance;
  return {monotone, fmt("held-out DSC all six %.4f, T1+FLAIR %.4f, FLAIR %.4f (flat tolerance %.2f)", dsc[0],
                        dsc[1], dsc[2], kFlatTolerance)};
}

Outcome tiling_consistency() {
  const NetworkSpec spec = TrainConfig::desk().network;
  const F3NetModel model(spec, 9);
  PredictConfig pc;
  pc.patch_shape = TrainConfig::desk().patch_shape;
  std::mt19937_64 rng(909);
  double worst = 0.0;
  // Volumes no larger than the patch.
  for (const Shape3 s : {Shape3{32, 32, 32}, Shape3{20, 32, 17}, Shape3{9, 13, 32}}) {
    MultiModalCase c;
    const ModalityPresence p = random_presence(rng);
    Tensor img = random_patch(s, rng);
    zero_absent(img, p);
    for (Modality m : kAllModalities) {
      c.volumes[index_of(m)] = VolumeGrid(Geometry{s});
      auto ch = img.channel(index_of(m));
      std::copy(ch.begin(), ch.end(), c.volumes[index_of(m)].data.begin());
    }
    c.presence = p;
    const Prediction pred = predict_case(model, c, pc);
    Tensor padded(kNumModalities, pc.patch_shape);
    const Shape3 lo{(32 - s.x) / 2, (32 - s.y) / 2, (32 - s.z) / 2};
    for (int ch = 0; ch < kNumModalities; ++ch)
      for (int z = 0; z < s.z; ++z)
        for (int y = 0; y < s.y; ++y)
          for (int x = 0; x < s.x; ++x) padded.at(ch, x + lo.x, y + lo.y, z + lo.z) = img.at(ch, x, y, z);
    const Tensor logits = forward(model, padded, p);
    const std::int64_t n = padded.voxels();
    for (int z = 0; z < s.z; ++z)
      for (int y = 0; y < s.y; ++y)
        for (int x = 0; x < s.x; ++x) {
          const std::int64_t i = padded.shape.index(x + lo.x, y + lo.y, z + lo.z);
          const double fg = 1.0 / (1.0 + std::exp(double(logits.data[i]) - logits.data[n + i]));
          worst = std::max(worst, std::abs(fg - pred.probability.at(x, y, z)));
        }
  }
  // Coverage on volumes that need several windows.
  std::int64_t uncovered = 0, voxels = 0;
  for (const Shape3 s : {Shape3{50, 40, 33}, Shape3{64, 32, 45}, Shape3{33, 33, 33}}) {
    const Tensor img(kNumModalities, s);
    const auto r = sliding_window(img, pc, [](const Tensor& w) { return std::vector<float>(w.voxels(), 0.5f); });
    for (float w : r.weight_sum) uncovered += !(w > 0.0f);
    voxels += s.voxels();
  }
  return {worst <= 1e-6 && uncovered == 0,
          fmt("max |sliding - direct| %.2g; %lld of %lld voxels uncovered", worst,
              static_cast<long long>(uncovered), static_cast<long long>(voxels))};
}

Outcome determinism() {
  TempDir dir("determinism");
  std::ostringstream out, err;
  const std::string data = (dir.path / "data").string();
  if (run_cli({"make-phantom", "--out", data, "--count", "2", "--lesions", "2"}, out, err) != 0)
    return {false, "make-phantom failed: " + err.str()};
  std::string hist[2], masks[2];
  for (int run = 0; run < 2; ++run) {
    const std::string root = (dir.path / ("run" + std::to_string(run))).string();
    if (run_cli({"--preset", "desk", "--seed", "42", "--deterministic", "train", "--data", data, "--steps", "10",
                 "--out", root},
                out, err) != 0)
      return {false, "train failed: " + err.str()};
    const fs::path ck = fs::path(root) / "checkpoints" / "run";
    hist[run] = read_file(ck / "history.csv");
    const std::string preds = root + "/preds";
    if (run_cli({"predict", "--model", (ck / "latest.ckpt").string(), "--case", data, "--out", preds}, out, err) != 0)
      return {false, "predict failed: " + err.str()};
    for (const char* id : {"case_0000", "case_0001"})
      masks[run] += read_file(fs::path(preds) / (std::string(id) + "_mask.nii.gz")) +
                    read_file(fs::path(preds) / (std::string(id) + "_prob.nii.gz"));
  }
  const bool ok = !hist[0].empty() && hist[0] == hist[1] && !masks[0].empty() && masks[0] == masks[1];
  return {ok, fmt("history.csv %s (%zu bytes), prediction files %s (%zu bytes)",
                  hist[0] == hist[1] ? "identical" : "differ", hist[0].size(),
                  masks[0] == masks[1] ? "identical" : "differ", masks[0].size())};
}

Outcome report_format() {
  TempDir dir("report");
  std::ostringstream out, err;
  const fs::path data = dir.path / "labels", preds = dir.path / "preds";
  if (run_cli({"make-phantom", "--out", data.string(), "--count", "3", "--lesions", "2", "--shape", "16"}, out,
              err) != 0)
    return {false, "make-phantom failed"};
  // Predictions: the truth with a few voxels flipped, so rows differ.
  int k = 0;
  for (const auto& d : list_case_dirs(data)) {
    const MultiModalCase c = load_raw_case(d);
    PathosegMask m = binarize(*c.label);
    for (int i = 0; i < 40 * k; ++i) m.data[(i * 97) % m.data.size()] ^= 1;
    fs::create_directories(preds);
    nifti::write_mask(preds / (c.case_id + "_mask.nii.gz"), m);
    ++k;
  }
  if (run_cli({"evaluate", "--predictions", preds.string(), "--labels", data.string(), "--out",
               (dir.path / "rep").string(), "--dataset", "phantoms"},
              out, err) != 0)
    return {false, "evaluate failed: " + err.str()};
  std::istringstream metrics(read_file(dir.path / "rep" / "metrics.csv"));
  std::istringstream summary(read_file(dir.path / "rep" / "summary.csv"));
  std::string header, line, sheader, srow;
  std::getline(metrics, header);
  std::getline(summary, sheader);
  std::getline(summary, srow);
  std::vector<std::vector<double>> rows;
  std::vector<double> mean;
  while (std::getline(metrics, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    if (cells.size() != 7) return {false, "bad row: " + line};
    std::vector<double> v;
    for (int i = 2; i < 7; ++i) v.push_back(std::stod(cells[i]));
    if (cells[1] == "mean") mean = v;
    else rows.push_back(v);
  }
  if (rows.size() != 3 || mean.empty()) return {false, "expected three case rows and a mean row"};
  double worst = 0.0;
  for (int j = 0; j < 5; ++j) {
    double s = 0;
    for (const auto& r : rows) s += r[j];
    worst = std::max(worst, std::abs(s / rows.size() - mean[j]));
  }
  const bool ok = sheader == "Dataset,Av. DSC (%),Accuracy,Sensitivity,Specificity,Precision" &&
                  header == "dataset,case_id,dsc,accuracy,sensitivity,specificity,precision" &&
                  srow.starts_with("phantoms,") && worst < 1e-12 && rows[0][0] != rows[2][0];
  return {ok, fmt("summary header '%s', per-case header ok, mean row deviation %.1g", sheader.c_str(), worst)};
}

}  // namespace

int main() {
  report(1, "masked-content invariance", masked_content_invariance);
  report(2, "masked-gradient nullity", masked_gradient_nullity);
  report(3, "loss oracles", loss_oracles);
  report(4, "learning-rate schedule", schedule);
  report(5, "metric oracle", metric_oracle);
  report(6, "pathoseg algebra", pathoseg_algebra);
  report(7, "overfit smoke test", overfit_smoke);
  report(8, "missing-modality robustness", missing_modality_robustness);
  report(9, "tiling consistency", tiling_consistency);
  report(10, "determinism", determinism);
  report(11, "report format", report_format);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
