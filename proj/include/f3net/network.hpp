#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "f3net/tensor.hpp"
#include "f3net/volume.hpp"

namespace f3net {

/// Where the zero gate is applied for an absent modality.
enum class MaskScope {
  AllStages,    // every pyramid stage of the absent encoder is zeroed (default)
  DeepestOnly,  // only the stage feeding the bottleneck; skips still carry zero-image features
};

std::string_view to_string(MaskScope s);
std::optional<MaskScope> parse_mask_scope(std::string_view s);

/// nnU-Net style topology: per stage two (3x3x3 conv, instance norm, leaky ReLU)
/// blocks, stride-2 downsampling on the first conv of every stage after the first.
struct NetworkSpec {
  int num_stages = 4;
  int base_channels = 16;
  int max_channels = 320;
  int num_classes = 2;
  MaskScope mask_scope = MaskScope::AllStages;

  /// Doubling per stage, capped at max_channels.
  std::vector<int> channels_per_stage() const;
  /// Every patch axis must be a multiple of this.
  int patch_divisor() const { return 1 << (num_stages - 1); }

  /// Throws InvalidConfig.
  void validate() const;
  /// Throws ShapeError when the patch is not divisible by patch_divisor().
  void validate_patch(const Shape3& patch) const;

  static NetworkSpec desk();   // base 8, 4 stages
  static NetworkSpec paper();  // base 32, 5 stages, cap 320

  bool operator==(const NetworkSpec&) const = default;
};

/// Named parameter array. Names follow encoder.{modality}.{stage}.{layer}.* and
/// decoder.{stage}.{layer}.*; see F3NetModel.
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
};

/// Index of the parameter group trained by each encoder; the bottleneck,
/// decoder and head form one shared group.
inline constexpr int kSharedGroup = kNumModalities;
inline constexpr int kNumParamGroups = kNumModalities + 1;

struct ConvBlockRef {
  int weight = -1, bias = -1, gamma = -1, beta = -1;
  int in_channels = 0, out_channels = 0, stride = 1;
};

struct UpConvRef {
  int weight = -1, bias = -1;
  int in_channels = 0, out_channels = 0;
};

/// Six modality encoders with identical topology and independent weights, a
/// bottleneck block on the fused deepest features, and one shared decoder.
class F3NetModel {
 public:
  explicit F3NetModel(const NetworkSpec& spec, std::uint64_t seed = 0);

  const NetworkSpec& spec() const { return spec_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  int group_of(std::size_t param_index) const { return groups_[param_index]; }
  const Parameter* find(std::string_view name) const;
  std::size_t parameter_count() const;

  // Layer wiring (indices into parameters()).
  const ConvBlockRef& encoder_block(Modality m, int stage, int layer) const {
    return encoders_[index_of(m)][stage][layer];
  }
  const ConvBlockRef& bottleneck() const { return bottleneck_; }
  const UpConvRef& upconv(int stage) const { return up_[stage]; }
  const ConvBlockRef& decoder_block(int stage, int layer) const { return decoder_[stage][layer]; }
  int head_weight() const { return head_weight_; }
  int head_bias() const { return head_bias_; }

  std::span<const float> values(int idx) const { return params_[idx].value; }

 private:
  int add(std::string name, std::vector<int> shape, int group);
  ConvBlockRef add_block(const std::string& prefix, int in, int out, int stride, int group);

  NetworkSpec spec_;
  std::vector<Parameter> params_;
  std::vector<int> groups_;
  std::array<std::vector<std::array<ConvBlockRef, 2>>, kNumModalities> encoders_;
  ConvBlockRef bottleneck_;
  std::vector<UpConvRef> up_;                          // indexed by decoder stage 0..S-2
  std::vector<std::array<ConvBlockRef, 2>> decoder_;   // indexed by decoder stage 0..S-2
  int head_weight_ = -1, head_bias_ = -1;
};

/// Deterministic He-normal initialization (leaky slope 0.01) for conv weights,
/// unit/zero for norm affine terms, zero biases.
void initialize_parameters(F3NetModel& model, std::uint64_t seed);

/// Per-stage output of one encoder: stage s has shape patch / 2^s and
/// channels_per_stage()[s] channels.
struct EncoderFeatures {
  std::vector<Tensor> stages;
};

/// Run encoder m on a single-channel patch.
EncoderFeatures encode(const F3NetModel& model, const Tensor& patch_channel, Modality m);
EncoderFeatures encode(const F3NetModel& model, const VolumeGrid& patch_channel, Modality m);

/// Identity when presence[m]; otherwise the gated stages become exact zeros.
EncoderFeatures mask_features(EncoderFeatures features, Modality m,
                              const ModalityPresence& presence,
                              MaskScope scope = MaskScope::AllStages);

/// Stage-wise elementwise sum. Throws ShapeError on pyramid mismatch.
EncoderFeatures fuse(std::span<const EncoderFeatures> per_modality);

/// Gradient buffers shaped like the model parameters.
struct Gradients {
  std::vector<std::vector<float>> values;

  explicit Gradients(const F3NetModel& model);
  void zero();
  /// Euclidean norm of one parameter group.
  double group_norm(const F3NetModel& model, int group) const;
};

/// One forward evaluation, retaining what backward() needs. The pass holds a
/// reference to the model; parameters must not change until backward returns.
class ForwardPass {
 public:
  explicit ForwardPass(const F3NetModel& model);
  ~ForwardPass();
  ForwardPass(const ForwardPass&) = delete;
  ForwardPass& operator=(const ForwardPass&) = delete;

  /// patch: 6 channels in Modality order. Returns logits (num_classes, patch shape).
  const Tensor& run(const Tensor& patch, const ModalityPresence& presence);

  /// Accumulates dLoss/dParam into grads. If grad_input is given it receives
  /// dLoss/dPatch (6 channels; exactly zero on gated channels).
  void backward(const Tensor& grad_logits, Gradients& grads, Tensor* grad_input = nullptr);

  const Tensor& logits() const;

 private:
  struct State;
  const F3NetModel& model_;
  std::unique_ptr<State> state_;
};

/// logits = decoder(fuse(mask_features(encode(channel m), m, presence))).
Tensor forward(const F3NetModel& model, const Tensor& patch, const ModalityPresence& presence);

/// Stack six volumes of one geometry into a 6-channel tensor.
Tensor stack_case(const MultiModalCase& c);

}  // namespace f3net
