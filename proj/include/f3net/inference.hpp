#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "f3net/network.hpp"
#include "f3net/objective.hpp"
#include "f3net/pathoseg.hpp"
#include "f3net/volume.hpp"

namespace f3net {

enum class BlendMode { Gaussian, Uniform };

struct PredictConfig {
  Shape3 patch_shape{80, 112, 80};
  double window_overlap = 0.5;
  BlendMode blend = BlendMode::Gaussian;
  /// Foreground probability above this is labelled 1.
  double threshold = 0.5;
  /// Average over the eight axis-flip combinations.
  bool mirror = false;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Start offsets of windows of length `patch` covering [0, extent), extent >= patch.
/// Windows overlap by roughly `overlap` of the patch; the last window ends at extent.
std::vector<int> window_starts(int extent, int patch, double overlap);

/// Per-window blend weights (patch voxels): a separable Gaussian with
/// sigma = patch / 8 per axis, scaled to max 1 and strictly positive; or all ones.
std::vector<float> blend_weights(const Shape3& patch, BlendMode mode);

/// Maps a 6-channel window to per-voxel foreground probabilities.
using WindowPredictor = std::function<std::vector<float>(const Tensor& window)>;

struct SlidingWindowResult {
  std::vector<float> probability;  // on the input grid
  std::vector<float> weight_sum;   // total blend weight each voxel received
};

/// Zero-pads the image symmetrically up to the patch where needed, tiles it,
/// blends the window outputs, and crops back to the input grid.
SlidingWindowResult sliding_window(const Tensor& image, const PredictConfig& cfg,
                                   const WindowPredictor& predictor);

/// Foreground probability of one network evaluation.
std::vector<float> predict_window(const F3NetModel& model, const Tensor& window,
                                  const ModalityPresence& presence, bool mirror = false);

struct Prediction {
  VolumeGrid probability;
  PathosegMask mask;
};

/// Whole-case prediction using the case's presence vector.
Prediction predict_case(const F3NetModel& model, const MultiModalCase& c, const PredictConfig& cfg);

PathosegMask threshold_mask(const VolumeGrid& probability, double threshold);

struct EvaluationReport {
  std::vector<MetricsRow> rows;
  MetricsRow summary;  // unweighted mean
};

/// Scores predict_case against binarize(label) for every case. Throws MissingLabel.
EvaluationReport evaluate_dataset(const F3NetModel& model, std::span<const MultiModalCase> cases,
                                  const PredictConfig& cfg);

/// Scores precomputed masks. predictions[i] pairs with labels[i].
EvaluationReport evaluate_masks(std::span<const PathosegMask> predictions,
                                std::span<const PathosegMask> labels,
                                std::span<const std::string> case_ids);

}  // namespace f3net
