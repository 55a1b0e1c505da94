#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "f3net/network.hpp"
#include "f3net/objective.hpp"
#include "f3net/volume.hpp"

namespace f3net {

using Rng = std::mt19937_64;

struct AugmentConfig {
  bool enabled = true;
  double flip_prob = 0.5;    // per axis
  double rotate_prob = 0.25; // 90-degree in-plane rotation
  double scale_prob = 0.15;  // per present channel
  double scale_low = 0.9;
  double scale_high = 1.1;
};

struct TrainConfig {
  int batch_size = 2;
  Shape3 patch_shape{80, 112, 80};
  double momentum = 0.95;
  double weight_decay = 3e-5;
  double initial_lr = 0.01;
  double poly_power = 0.9;
  int max_epochs = 1000;
  int steps_per_epoch = 250;
  bool nesterov = false;
  LossWeights loss_weights;
  AugmentConfig augment;
  /// Per-case probability of replacing each present modality by a zero-image.
  double modality_drop_prob = 0.2;
  /// Fraction of crops forced to contain a foreground voxel at their centre.
  double foreground_oversample = 1.0 / 3.0;
  std::uint64_t seed = 0;
  bool deterministic = true;
  NetworkSpec network;

  /// Throws InvalidConfig / ShapeError.
  void validate() const;

  /// Published settings: patch (80,112,80), base 32, 5 stages.
  static TrainConfig paper();
  /// CPU-sized: patch 32^3, base 8, 2 epochs of 100 steps.
  static TrainConfig desk();
};

/// initial_lr * (1 - epoch / max_epochs)^poly_power. Throws OutOfRangeEpoch.
double lr_at(int epoch, const TrainConfig& cfg);

/// One training crop.
struct PatchSample {
  Tensor image;                      // 6 channels, patch_shape
  std::vector<std::int32_t> target;  // patch_shape voxels
  ModalityPresence presence;
  Shape3 origin;                     // crop origin in padded case coordinates
  bool foreground_forced = false;
};

/// Random crop of patch_shape; with probability cfg.foreground_oversample (when
/// the label has foreground) the crop is placed around a random foreground
/// voxel. Volumes smaller than the patch are zero-padded symmetrically.
/// Throws NoLabel.
PatchSample sample_patch(const MultiModalCase& c, const TrainConfig& cfg, Rng& rng);

/// Flips, in-plane 90-degree rotations, and intensity scaling of present
/// channels. The target only receives the spatial transforms.
void augment(PatchSample& s, const AugmentConfig& cfg, Rng& rng);

/// Zero out and mark absent each present modality with probability p, always
/// keeping at least one.
void drop_modalities(MultiModalCase& c, double p, Rng& rng);

/// Momentum buffers, shaped like the parameters.
struct OptimizerState {
  std::vector<std::vector<float>> velocity;
  explicit OptimizerState(const F3NetModel& model);
};

struct StepResult {
  double loss = 0.0;
  ConfusionCounts counts;  // hard prediction vs target over the batch
  std::array<bool, kNumParamGroups> updated{};
};

/// One SGD step on the mean combined loss of the batch:
///   v <- momentum * v + g + weight_decay * theta;  theta <- theta - lr * v.
/// Encoders whose modality is absent in every batch item are left untouched
/// (parameters and momentum). Throws NonFiniteLoss.
StepResult train_step(F3NetModel& model, std::span<const PatchSample> batch,
                      const TrainConfig& cfg, OptimizerState& opt, double lr);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double train_dsc = 0.0;  // exponential moving average of per-epoch hard DSC
};

struct TrainOptions {
  /// When set, checkpoints/{run_id}/{best,latest}.ckpt and history.csv go here.
  std::optional<std::filesystem::path> output_root;
  std::string run_id = "run";
  /// Continue from checkpoints/{run_id}/latest.ckpt when it exists.
  bool resume = false;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_dsc = 0.0;
};

/// Throws EmptyCase on an empty dataset and NoLabel for unlabeled cases.
TrainResult train(F3NetModel& model, std::span<const MultiModalCase> dataset,
                  const TrainConfig& cfg, const TrainOptions& options = {});

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);

std::filesystem::path run_directory(const std::filesystem::path& root, const std::string& run_id);

}  // namespace f3net
