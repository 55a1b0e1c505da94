#include "f3net/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "f3net/error.hpp"
#include "f3net/layers.hpp"

namespace f3net {

std::string_view to_string(MaskScope s) {
  return s == MaskScope::AllStages ? "all_stages" : "deepest_only";
}

std::optional<MaskScope> parse_mask_scope(std::string_view s) {
  if (s == "all_stages") return MaskScope::AllStages;
  if (s == "deepest_only") return MaskScope::DeepestOnly;
  return std::nullopt;
}

std::vector<int> NetworkSpec::channels_per_stage() const {
  std::vector<int> ch(num_stages);
  long c = base_channels;
  for (int s = 0; s < num_stages; ++s, c *= 2) ch[s] = static_cast<int>(std::min<long>(c, max_channels));
  return ch;
}

void NetworkSpec::validate() const {
  if (num_stages < 2) throw InvalidConfig("num_stages must be >= 2");
  if (num_stages > 12) throw InvalidConfig("num_stages must be <= 12");
  if (base_channels < 1 || max_channels < 1) throw InvalidConfig("channel counts must be positive");
  if (num_classes < 2) throw InvalidConfig("num_classes must be >= 2");
}

void NetworkSpec::validate_patch(const Shape3& patch) const {
  const int d = patch_divisor();
  for (int a = 0; a < 3; ++a)
    if (patch[a] < d || patch[a] % d != 0)
      throw ShapeError("patch " + to_string(patch) + " is not divisible by " + std::to_string(d) +
                       " on every axis (" + std::to_string(num_stages) + " stages)");
}

NetworkSpec NetworkSpec::desk() {
  NetworkSpec s;
  s.base_channels = 8;
  return s;
}

NetworkSpec NetworkSpec::paper() {
  NetworkSpec s;
  s.num_stages = 5;
  s.base_channels = 32;
  return s;
}

// ---------------------------------------------------------------------------

F3NetModel::F3NetModel(const NetworkSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  const auto ch = spec_.channels_per_stage();
  const int S = spec_.num_stages;

  for (Modality m : kAllModalities) {
    auto& enc = encoders_[index_of(m)];
    enc.resize(S);
    for (int s = 0; s < S; ++s) {
      const std::string prefix =
          "encoder." + std::string(modality_name(m)) + "." + std::to_string(s) + ".";
      const int in = s == 0 ? 1 : ch[s - 1];
      enc[s][0] = add_block(prefix + "0", in, ch[s], s == 0 ? 1 : 2, index_of(m));
      enc[s][1] = add_block(prefix + "1", ch[s], ch[s], 1, index_of(m));
    }
  }

  bottleneck_ = add_block("decoder." + std::to_string(S - 1) + ".0", ch[S - 1], ch[S - 1], 1,
                          kSharedGroup);
  up_.resize(S - 1);
  decoder_.resize(S - 1);
  for (int s = S - 2; s >= 0; --s) {
    const std::string prefix = "decoder." + std::to_string(s) + ".";
    UpConvRef& u = up_[s];
    u.in_channels = ch[s + 1];
    u.out_channels = ch[s];
    u.weight = add(prefix + "up.weight", {ch[s], 2, 2, 2, ch[s + 1]}, kSharedGroup);
    u.bias = add(prefix + "up.bias", {ch[s]}, kSharedGroup);
    decoder_[s][0] = add_block(prefix + "0", 2 * ch[s], ch[s], 1, kSharedGroup);
    decoder_[s][1] = add_block(prefix + "1", ch[s], ch[s], 1, kSharedGroup);
  }
  head_weight_ = add("decoder.0.head.weight", {spec_.num_classes, ch[0], 1, 1, 1}, kSharedGroup);
  head_bias_ = add("decoder.0.head.bias", {spec_.num_classes}, kSharedGroup);

  initialize_parameters(*this, seed);
}

int F3NetModel::add(std::string name, std::vector<int> shape, int group) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  params_.push_back({std::move(name), std::move(shape), std::vector<float>(n, 0.0f)});
  groups_.push_back(group);
  return static_cast<int>(params_.size() - 1);
}

ConvBlockRef F3NetModel::add_block(const std::string& prefix, int in, int out, int stride,
                                   int group) {
  ConvBlockRef b;
  b.in_channels = in;
  b.out_channels = out;
  b.stride = stride;
  b.weight = add(prefix + ".conv.weight", {out, in, 3, 3, 3}, group);
  b.bias = add(prefix + ".conv.bias", {out}, group);
  b.gamma = add(prefix + ".norm.weight", {out}, group);
  b.beta = add(prefix + ".norm.bias", {out}, group);
  return b;
}

const Parameter* F3NetModel::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::size_t F3NetModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void initialize_parameters(F3NetModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double slope = nn::kLeakySlope;
  for (Parameter& p : model.parameters()) {
    const std::string_view name = p.name;
    const bool is_weight = name.ends_with(".weight");
    const bool is_norm = name.find(".norm.") != std::string_view::npos;
    if (is_norm) {
      std::fill(p.value.begin(), p.value.end(), is_weight ? 1.0f : 0.0f);
    } else if (is_weight) {
      // fan_in = in_channels * kernel volume; for upconv weights (out,2,2,2,in) the
      // contraction runs over `in` only.
      const bool upconv = name.find(".up.") != std::string_view::npos;
      const double fan_in = upconv ? p.shape.back()
                                   : double(p.value.size()) / double(p.shape.front());
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / ((1.0 + slope * slope) * fan_in)));
      for (float& v : p.value) v = static_cast<float>(dist(rng));
    } else {
      std::fill(p.value.begin(), p.value.end(), 0.0f);
    }
  }
}

// ---------------------------------------------------------------------------

Gradients::Gradients(const F3NetModel& model) {
  values.reserve(model.parameters().size());
  for (const auto& p : model.parameters()) values.emplace_back(p.value.size(), 0.0f);
}

void Gradients::zero() {
  for (auto& v : values) std::fill(v.begin(), v.end(), 0.0f);
}

double Gradients::group_norm(const F3NetModel& model, int group) const {
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (model.group_of(i) == group)
      for (float g : values[i]) s += double(g) * g;
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------

namespace {

struct BlockTrace {
  const Tensor* input = nullptr;
  Tensor xhat;
  std::vector<float> inv_std;
  Tensor output;
};

std::span<float> grad_span(Gradients& g, int idx) { return g.values[idx]; }

void block_forward(const F3NetModel& model, const ConvBlockRef& b, const Tensor& in,
                   BlockTrace& t) {
  thread_local Tensor conv_out;
  nn::conv3d_forward(in, model.values(b.weight), model.values(b.bias), b.out_channels, 3, b.stride,
                     conv_out);
  nn::instance_norm_forward(conv_out, model.values(b.gamma), model.values(b.beta), t.output, t.xhat,
                            t.inv_std);
  nn::leaky_relu_inplace(t.output);
  t.input = &in;
}

// grad_output is consumed. grad_input may be null.
void block_backward(const F3NetModel& model, const ConvBlockRef& b, const BlockTrace& t,
                    Tensor& grad_output, Gradients& grads, Tensor* grad_input) {
  thread_local Tensor grad_conv;
  nn::leaky_relu_backward_inplace(t.output, grad_output);
  nn::instance_norm_backward(t.xhat, t.inv_std, model.values(b.gamma), grad_output, grad_conv,
                             grad_span(grads, b.gamma), grad_span(grads, b.beta));
  nn::conv3d_backward(*t.input, model.values(b.weight), b.out_channels, 3, b.stride, grad_conv,
                      grad_input, grad_span(grads, b.weight), grad_span(grads, b.bias));
}

void add_into(Tensor& acc, const Tensor& x) {
  for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += x.data[i];
}

Tensor extract_channel(const Tensor& t, int c) {
  Tensor out(1, t.shape);
  auto src = t.channel(c);
  std::copy(src.begin(), src.end(), out.data.begin());
  return out;
}

bool stage_gated(MaskScope scope, int stage, int num_stages) {
  return scope == MaskScope::AllStages || stage == num_stages - 1;
}

struct EncoderTrace {
  Tensor input;
  std::vector<std::array<BlockTrace, 2>> blocks;
  const Tensor& stage_output(int s) const { return blocks[s][1].output; }
};

void run_encoder(const F3NetModel& model, Modality m, EncoderTrace& tr) {
  const int S = model.spec().num_stages;
  tr.blocks.assign(S, {});
  const Tensor* in = &tr.input;
  for (int s = 0; s < S; ++s) {
    block_forward(model, model.encoder_block(m, s, 0), *in, tr.blocks[s][0]);
    block_forward(model, model.encoder_block(m, s, 1), tr.blocks[s][0].output, tr.blocks[s][1]);
    in = &tr.blocks[s][1].output;
  }
}

}  // namespace

EncoderFeatures encode(const F3NetModel& model, const Tensor& patch_channel, Modality m) {
  if (patch_channel.channels != 1) throw ShapeError("encode expects a single-channel patch");
  model.spec().validate_patch(patch_channel.shape);
  EncoderTrace tr;
  tr.input = patch_channel;
  run_encoder(model, m, tr);
  EncoderFeatures f;
  for (auto& stage : tr.blocks) f.stages.push_back(std::move(stage[1].output));
  return f;
}

EncoderFeatures encode(const F3NetModel& model, const VolumeGrid& patch_channel, Modality m) {
  Tensor t(1, patch_channel.shape());
  std::copy(patch_channel.data.begin(), patch_channel.data.end(), t.data.begin());
  return encode(model, t, m);
}

EncoderFeatures mask_features(EncoderFeatures features, Modality m,
                              const ModalityPresence& presence, MaskScope scope) {
  if (presence[m]) return features;
  const int S = static_cast<int>(features.stages.size());
  for (int s = 0; s < S; ++s)
    if (stage_gated(scope, s, S)) features.stages[s].fill(0.0f);
  return features;
}

EncoderFeatures fuse(std::span<const EncoderFeatures> per_modality) {
  if (per_modality.empty()) throw ShapeError("fuse needs at least one pyramid");
  EncoderFeatures out = per_modality.front();
  for (std::size_t m = 1; m < per_modality.size(); ++m) {
    const auto& p = per_modality[m];
    if (p.stages.size() != out.stages.size()) throw ShapeError("fuse: stage count mismatch");
    for (std::size_t s = 0; s < out.stages.size(); ++s) {
      if (!p.stages[s].same_layout(out.stages[s]))
        throw ShapeError("fuse: stage " + std::to_string(s) + " layout mismatch");
      add_into(out.stages[s], p.stages[s]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct ForwardPass::State {
  ModalityPresence presence;
  std::array<bool, kNumModalities> encoded{};
  std::array<EncoderTrace, kNumModalities> encoders;
  std::vector<Tensor> fused;       // per stage
  BlockTrace bottleneck;
  std::vector<Tensor> up;          // decoder stage s: upsampled features
  std::vector<Tensor> concat;      // decoder stage s: [up, fused skip]
  std::vector<std::array<BlockTrace, 2>> decoder;
  Tensor logits;
  Shape3 patch_shape;
};

ForwardPass::ForwardPass(const F3NetModel& model)
    : model_(model), state_(std::make_unique<State>()) {}

ForwardPass::~ForwardPass() = default;

const Tensor& ForwardPass::logits() const { return state_->logits; }

const Tensor& ForwardPass::run(const Tensor& patch, const ModalityPresence& presence) {
  const NetworkSpec& spec = model_.spec();
  const int S = spec.num_stages;
  if (patch.channels != kNumModalities)
    throw ShapeError("forward expects a 6-channel patch, got " + std::to_string(patch.channels));
  spec.validate_patch(patch.shape);
  const auto ch = spec.channels_per_stage();

  State& st = *state_;
  st.presence = presence;
  st.patch_shape = patch.shape;
  st.fused.assign(S, {});
  for (int s = 0; s < S; ++s) {
    Shape3 sh{patch.shape.x >> s, patch.shape.y >> s, patch.shape.z >> s};
    st.fused[s] = Tensor(ch[s], sh);
  }

  for (Modality m : kAllModalities) {
    const int mi = index_of(m);
    const bool present = presence[m];
    // With every stage gated the encoder output is discarded, so it is not run.
    st.encoded[mi] = present || spec.mask_scope == MaskScope::DeepestOnly;
    if (!st.encoded[mi]) {
      st.encoders[mi] = {};
      continue;
    }
    EncoderTrace& tr = st.encoders[mi];
    // An absent slot is encoded as the zero-image it stands for, whatever it holds.
    tr.input = present ? extract_channel(patch, mi) : Tensor(1, patch.shape);
    run_encoder(model_, m, tr);
    for (int s = 0; s < S; ++s)
      if (present || !stage_gated(spec.mask_scope, s, S)) add_into(st.fused[s], tr.stage_output(s));
  }

  block_forward(model_, model_.bottleneck(), st.fused[S - 1], st.bottleneck);

  st.up.assign(S - 1, {});
  st.concat.assign(S - 1, {});
  st.decoder.assign(S - 1, {});
  const Tensor* below = &st.bottleneck.output;
  for (int s = S - 2; s >= 0; --s) {
    const UpConvRef& u = model_.upconv(s);
    nn::upconv_forward(*below, model_.values(u.weight), model_.values(u.bias), u.out_channels,
                       st.up[s]);
    Tensor& cat = st.concat[s];
    cat = Tensor(2 * ch[s], st.up[s].shape);
    std::copy(st.up[s].data.begin(), st.up[s].data.end(), cat.data.begin());
    std::copy(st.fused[s].data.begin(), st.fused[s].data.end(),
              cat.data.begin() + static_cast<std::ptrdiff_t>(st.up[s].data.size()));
    block_forward(model_, model_.decoder_block(s, 0), cat, st.decoder[s][0]);
    block_forward(model_, model_.decoder_block(s, 1), st.decoder[s][0].output, st.decoder[s][1]);
    below = &st.decoder[s][1].output;
  }

  nn::conv3d_forward(*below, model_.values(model_.head_weight()), model_.values(model_.head_bias()),
                     spec.num_classes, 1, 1, st.logits);
  return st.logits;
}

void ForwardPass::backward(const Tensor& grad_logits, Gradients& grads, Tensor* grad_input) {
  const NetworkSpec& spec = model_.spec();
  const int S = spec.num_stages;
  State& st = *state_;
  if (!grad_logits.same_layout(st.logits)) throw ShapeError("grad_logits layout mismatch");

  std::vector<Tensor> grad_fused(S);
  for (int s = 0; s < S; ++s) grad_fused[s] = Tensor(st.fused[s].channels, st.fused[s].shape);

  // Head.
  Tensor grad;
  const Tensor& head_in = S >= 2 ? st.decoder[0][1].output : st.bottleneck.output;
  nn::conv3d_backward(head_in, model_.values(model_.head_weight()), spec.num_classes, 1, 1,
                      grad_logits, &grad, grad_span(grads, model_.head_weight()),
                      grad_span(grads, model_.head_bias()));

  // Decoder, shallow to deep.
  Tensor grad_tmp;
  for (int s = 0; s <= S - 2; ++s) {
    block_backward(model_, model_.decoder_block(s, 1), st.decoder[s][1], grad, grads, &grad_tmp);
    block_backward(model_, model_.decoder_block(s, 0), st.decoder[s][0], grad_tmp, grads, &grad);
    // grad now refers to the concat input; split into upsample and skip halves.
    const std::size_t half = st.up[s].data.size();
    Tensor grad_up(st.up[s].channels, st.up[s].shape);
    std::copy(grad.data.begin(), grad.data.begin() + static_cast<std::ptrdiff_t>(half),
              grad_up.data.begin());
    std::copy(grad.data.begin() + static_cast<std::ptrdiff_t>(half), grad.data.end(),
              grad_fused[s].data.begin());
    const UpConvRef& u = model_.upconv(s);
    const Tensor& below = s == S - 2 ? st.bottleneck.output : st.decoder[s + 1][1].output;
    nn::upconv_backward(below, model_.values(u.weight), u.out_channels, grad_up, grad,
                        grad_span(grads, u.weight), grad_span(grads, u.bias));
  }
  block_backward(model_, model_.bottleneck(), st.bottleneck, grad, grads, &grad_tmp);
  add_into(grad_fused[S - 1], grad_tmp);

  if (grad_input) {
    *grad_input = Tensor(kNumModalities, st.patch_shape);
  }

  // Encoders: the fused gradient reaches every stage that passed its gate.
  for (Modality m : kAllModalities) {
    const int mi = index_of(m);
    if (!st.encoded[mi]) continue;
    const bool present = st.presence[m];
    EncoderTrace& tr = st.encoders[mi];
    Tensor running;
    for (int s = S - 1; s >= 0; --s) {
      const bool passes = present || !stage_gated(spec.mask_scope, s, S);
      if (s == S - 1) {
        running = passes ? grad_fused[s] : Tensor(grad_fused[s].channels, grad_fused[s].shape);
      } else if (passes) {
        add_into(running, grad_fused[s]);
      }
      block_backward(model_, model_.encoder_block(m, s, 1), tr.blocks[s][1], running, grads,
                     &grad_tmp);
      const bool need_input = s > 0 || grad_input != nullptr;
      block_backward(model_, model_.encoder_block(m, s, 0), tr.blocks[s][0], grad_tmp, grads,
                     need_input ? &running : nullptr);
    }
    if (grad_input && present) {
      auto dst = grad_input->channel(mi);
      std::copy(running.data.begin(), running.data.end(), dst.begin());
    }
  }
}

Tensor forward(const F3NetModel& model, const Tensor& patch, const ModalityPresence& presence) {
  ForwardPass pass(model);
  return pass.run(patch, presence);
}

Tensor stack_case(const MultiModalCase& c) {
  Tensor t(kNumModalities, c.geometry().shape);
  for (Modality m : kAllModalities) {
    const auto& src = c.volume(m).data;
    std::copy(src.begin(), src.end(), t.channel(index_of(m)).begin());
  }
  return t;
}

}  // namespace f3net
