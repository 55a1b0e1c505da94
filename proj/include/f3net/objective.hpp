#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace f3net {

/// L = lambda1 * Dice + lambda2 * CE.
struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 1.0;

  /// Throws InvalidConfig unless both are nonnegative and their sum is positive.
  void validate() const;
};

/// Additive smoothing on both numerator and denominator of the soft Dice.
inline constexpr double kDiceSmooth = 1e-5;

/// 1 - (2 sum(p t) + eps) / (sum p + sum t + eps). target voxels > 0 are foreground.
double dice_loss(std::span<const double> probs, std::span<const std::int32_t> target);

/// Mean over voxels of -log softmax(logits)[target]. logits are channel-major:
/// logits[k * voxels + i]. Throws ShapeMismatch / InvalidLabel.
double ce_loss(std::span<const double> logits, int num_classes,
               std::span<const std::int32_t> target);

/// Foreground probability 1 - softmax(logits)[background] per voxel.
std::vector<double> foreground_probabilities(std::span<const double> logits, int num_classes);

struct LossValue {
  double total = 0.0;
  double dice = 0.0;
  double ce = 0.0;
  /// dTotal/dLogits, same layout as the logits; empty unless requested.
  std::vector<double> grad;
};

/// Dice on the softmax foreground probability (target > 0) plus CE on class
/// indices, weighted by w.
LossValue combined_loss(std::span<const double> logits, int num_classes,
                        std::span<const std::int32_t> target, const LossWeights& w,
                        bool with_grad = false);

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::int64_t total() const { return tp + fp + fn + tn; }
};

/// One row of an evaluation table; all values in [0,1].
struct MetricsRow {
  std::string case_id;
  double dsc = 0.0;
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double precision = 0.0;
};

/// Throws ShapeMismatch on size mismatch and InvalidLabel on values outside {0,1}.
ConfusionCounts confusion_counts(std::span<const std::uint8_t> pred,
                                 std::span<const std::uint8_t> target);

/// A zero denominator scores 1 when prediction and target agree on that
/// quantity's support (e.g. both empty for DSC), otherwise 0.
MetricsRow metrics_from_counts(const ConfusionCounts& c, std::string case_id = {});

MetricsRow confusion_metrics(std::span<const std::uint8_t> pred,
                             std::span<const std::uint8_t> target, std::string case_id = {});

/// Unweighted per-case mean of every metric.
MetricsRow mean_row(std::span<const MetricsRow> rows, std::string label = "mean");

}  // namespace f3net
