#include "f3net/inference.hpp"

#include <algorithm>
#include <cmath>

#include "f3net/error.hpp"

namespace f3net {

void PredictConfig::validate() const {
  if (!(window_overlap >= 0.0 && window_overlap < 1.0))
    throw InvalidConfig("window_overlap must lie in [0,1)");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidConfig("threshold must lie in (0,1)");
  for (int a = 0; a < 3; ++a)
    if (patch_shape[a] < 1) throw InvalidConfig("patch_shape must be positive");
}

std::vector<int> window_starts(int extent, int patch, double overlap) {
  if (extent < patch) throw ShapeError("window_starts: extent smaller than patch");
  if (extent == patch) return {0};
  const double step = std::max(1.0, patch * (1.0 - overlap));
  const int count = static_cast<int>(std::ceil((extent - patch) / step)) + 1;
  const double actual = static_cast<double>(extent - patch) / (count - 1);
  std::vector<int> starts(count);
  for (int i = 0; i < count; ++i) starts[i] = static_cast<int>(std::lround(i * actual));
  return starts;
}

std::vector<float> blend_weights(const Shape3& patch, BlendMode mode) {
  std::vector<float> w(patch.voxels(), 1.0f);
  if (mode == BlendMode::Uniform) return w;
  std::array<std::vector<double>, 3> axis;
  for (int a = 0; a < 3; ++a) {
    const double sigma = patch[a] / 8.0;
    const double centre = (patch[a] - 1) / 2.0;
    axis[a].resize(patch[a]);
    for (int i = 0; i < patch[a]; ++i) {
      const double d = i - centre;
      axis[a][i] = sigma > 0.0 ? std::exp(-d * d / (2.0 * sigma * sigma)) : 1.0;
    }
  }
  double mx = 0.0;
  for (int z = 0; z < patch.z; ++z)
    for (int y = 0; y < patch.y; ++y)
      for (int x = 0; x < patch.x; ++x)
        mx = std::max(mx, axis[0][x] * axis[1][y] * axis[2][z]);
  float min_pos = 1.0f;
  for (int z = 0; z < patch.z; ++z)
    for (int y = 0; y < patch.y; ++y)
      for (int x = 0; x < patch.x; ++x) {
        const float v = static_cast<float>(axis[0][x] * axis[1][y] * axis[2][z] / mx);
        w[patch.index(x, y, z)] = v;
        if (v > 0.0f) min_pos = std::min(min_pos, v);
      }
  for (float& v : w)
    if (!(v > 0.0f)) v = min_pos;
  return w;
}

SlidingWindowResult sliding_window(const Tensor& image, const PredictConfig& cfg,
                                   const WindowPredictor& predictor) {
  cfg.validate();
  const Shape3 vol = image.shape;
  const Shape3 patch = cfg.patch_shape;
  Shape3 padded, pad_lo;
  for (int a = 0; a < 3; ++a) {
    padded[a] = std::max(vol[a], patch[a]);
    pad_lo[a] = (padded[a] - vol[a]) / 2;
  }

  Tensor work(image.channels, padded);
  const std::int64_t nv = vol.voxels(), np = padded.voxels();
  for (int c = 0; c < image.channels; ++c)
    for (int z = 0; z < vol.z; ++z)
      for (int y = 0; y < vol.y; ++y) {
        const float* src = image.data.data() + c * nv + vol.index(0, y, z);
        float* dst = work.data.data() + c * np + padded.index(pad_lo.x, y + pad_lo.y, z + pad_lo.z);
        std::copy(src, src + vol.x, dst);
      }

  const auto weights = blend_weights(patch, cfg.blend);
  std::vector<double> acc(np, 0.0), wsum(np, 0.0);
  const auto xs = window_starts(padded.x, patch.x, cfg.window_overlap);
  const auto ys = window_starts(padded.y, patch.y, cfg.window_overlap);
  const auto zs = window_starts(padded.z, patch.z, cfg.window_overlap);

  Tensor window(image.channels, patch);
  const std::int64_t nw = patch.voxels();
  for (int oz : zs)
    for (int oy : ys)
      for (int ox : xs) {
        for (int c = 0; c < image.channels; ++c)
          for (int z = 0; z < patch.z; ++z)
            for (int y = 0; y < patch.y; ++y) {
              const float* src = work.data.data() + c * np + padded.index(ox, oy + y, oz + z);
              std::copy(src, src + patch.x, window.data.data() + c * nw + patch.index(0, y, z));
            }
        const std::vector<float> prob = predictor(window);
        if (static_cast<std::int64_t>(prob.size()) != nw)
          throw ShapeError("window predictor returned the wrong number of voxels");
        for (int z = 0; z < patch.z; ++z)
          for (int y = 0; y < patch.y; ++y)
            for (int x = 0; x < patch.x; ++x) {
              const std::int64_t w = patch.index(x, y, z);
              const std::int64_t g = padded.index(ox + x, oy + y, oz + z);
              acc[g] += double(weights[w]) * prob[w];
              wsum[g] += weights[w];
            }
      }

  SlidingWindowResult out;
  out.probability.resize(nv);
  out.weight_sum.resize(nv);
  for (int z = 0; z < vol.z; ++z)
    for (int y = 0; y < vol.y; ++y)
      for (int x = 0; x < vol.x; ++x) {
        const std::int64_t g = padded.index(x + pad_lo.x, y + pad_lo.y, z + pad_lo.z);
        const std::int64_t v = vol.index(x, y, z);
        out.weight_sum[v] = static_cast<float>(wsum[g]);
        out.probability[v] = wsum[g] > 0.0 ? static_cast<float>(acc[g] / wsum[g]) : 0.0f;
      }
  return out;
}

namespace {

Tensor flip(const Tensor& t, int mask) {
  if (mask == 0) return t;
  Tensor out(t.channels, t.shape);
  const Shape3 s = t.shape;
  for (int c = 0; c < t.channels; ++c)
    for (int z = 0; z < s.z; ++z)
      for (int y = 0; y < s.y; ++y)
        for (int x = 0; x < s.x; ++x) {
          const int ix = (mask & 1) ? s.x - 1 - x : x;
          const int iy = (mask & 2) ? s.y - 1 - y : y;
          const int iz = (mask & 4) ? s.z - 1 - z : z;
          out.at(c, x, y, z) = t.at(c, ix, iy, iz);
        }
  return out;
}

std::vector<float> foreground_of(const Tensor& logits) {
  const int k = logits.channels;
  const std::int64_t n = logits.voxels();
  std::vector<float> fg(n);
  for (std::int64_t i = 0; i < n; ++i) {
    double mx = logits.data[i];
    for (int c = 1; c < k; ++c) mx = std::max(mx, double(logits.data[c * n + i]));
    double z = 0.0;
    for (int c = 0; c < k; ++c) z += std::exp(double(logits.data[c * n + i]) - mx);
    fg[i] = static_cast<float>(1.0 - std::exp(double(logits.data[i]) - mx) / z);
  }
  return fg;
}

}  // namespace

std::vector<float> predict_window(const F3NetModel& model, const Tensor& window,
                                  const ModalityPresence& presence, bool mirror) {
  if (!mirror) return foreground_of(forward(model, window, presence));
  std::vector<double> acc(window.voxels(), 0.0);
  for (int mask = 0; mask < 8; ++mask) {
    Tensor fg_t(1, window.shape);
    const auto fg = foreground_of(forward(model, flip(window, mask), presence));
    std::copy(fg.begin(), fg.end(), fg_t.data.begin());
    const Tensor back = flip(fg_t, mask);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += back.data[i];
  }
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / 8.0);
  return out;
}

PathosegMask threshold_mask(const VolumeGrid& probability, double threshold) {
  PathosegMask m{probability.geometry, std::vector<std::uint8_t>(probability.data.size())};
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = probability.data[i] > threshold;
  return m;
}

Prediction predict_case(const F3NetModel& model, const MultiModalCase& c, const PredictConfig& cfg) {
  model.spec().validate_patch(cfg.patch_shape);
  if (c.presence.count() == 0) throw EmptyCase("case '" + c.case_id + "' has no real modality");
  const Tensor image = stack_case(c);
  const ModalityPresence presence = c.presence;
  auto result = sliding_window(image, cfg, [&](const Tensor& w) {
    return predict_window(model, w, presence, cfg.mirror);
  });
  Prediction p;
  p.probability = VolumeGrid(c.geometry(), std::move(result.probability));
  p.mask = threshold_mask(p.probability, cfg.threshold);
  return p;
}

EvaluationReport evaluate_dataset(const F3NetModel& model, std::span<const MultiModalCase> cases,
                                  const PredictConfig& cfg) {
  EvaluationReport report;
  for (const auto& c : cases)
    if (!c.label) throw MissingLabel("case '" + c.case_id + "' has no ground-truth label");
  for (const auto& c : cases) {
    const Prediction p = predict_case(model, c, cfg);
    const PathosegMask truth = binarize(*c.label);
    report.rows.push_back(confusion_metrics(p.mask.data, truth.data, c.case_id));
  }
  report.summary = mean_row(report.rows);
  return report;
}

EvaluationReport evaluate_masks(std::span<const PathosegMask> predictions,
                                std::span<const PathosegMask> labels,
                                std::span<const std::string> case_ids) {
  if (predictions.size() != labels.size() || predictions.size() != case_ids.size())
    throw MissingLabel("every prediction needs a label and a case id");
  EvaluationReport report;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    report.rows.push_back(confusion_metrics(predictions[i].data, labels[i].data, case_ids[i]));
  report.summary = mean_row(report.rows);
  return report;
}

}  // namespace f3net
