#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "f3net/inference.hpp"
#include "f3net/trainer.hpp"

namespace f3net {

/// Everything a run can be configured with.
struct RunConfig {
  TrainConfig train = TrainConfig::paper();
  PredictConfig predict;
  /// Set once predict.patch_shape is given explicitly; otherwise prediction
  /// uses the patch a checkpoint was trained with.
  bool predict_patch_set = false;

  /// Desk or paper preset; predict.patch_shape follows train.patch_shape.
  static RunConfig preset(std::string_view name);
};

/// Sets one field. `key` is "section.field", for example "train.momentum",
/// "network.base_channels", "loss.lambda1", "augment.flip_prob",
/// "predict.window_overlap". Shapes are written "x,y,z" or a single integer.
/// Throws InvalidConfig for unknown keys or malformed values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

/// Plain sectioned key-value text:
///
///   [train]
///   batch_size = 2
///   patch_shape = 32,32,32
///   [network]
///   mask_scope = all_stages
///
/// Throws InvalidConfig.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Writes every field in the same format.
std::string render_config(const RunConfig& cfg);

Shape3 parse_shape(std::string_view text);

}  // namespace f3net
