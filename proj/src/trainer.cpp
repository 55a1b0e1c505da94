#include "f3net/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "f3net/checkpoint.hpp"
#include "f3net/error.hpp"

namespace f3net {

void TrainConfig::validate() const {
  network.validate();
  try {
    network.validate_patch(patch_shape);
  } catch (const ShapeError& e) {
    throw InvalidConfig(e.what());
  }
  loss_weights.validate();
  if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
  if (max_epochs < 0) throw InvalidConfig("max_epochs must be >= 0");
  if (steps_per_epoch < 1) throw InvalidConfig("steps_per_epoch must be >= 1");
  if (!(initial_lr >= 0.0) || !(momentum >= 0.0) || !(weight_decay >= 0.0) || !(poly_power >= 0.0))
    throw InvalidConfig("learning rate, momentum, weight decay and poly power must be nonnegative");
  if (!(modality_drop_prob >= 0.0 && modality_drop_prob <= 1.0))
    throw InvalidConfig("modality_drop_prob must lie in [0,1]");
  if (!(foreground_oversample >= 0.0 && foreground_oversample <= 1.0))
    throw InvalidConfig("foreground_oversample must lie in [0,1]");
  if (!(augment.scale_low > 0.0 && augment.scale_low <= augment.scale_high))
    throw InvalidConfig("augmentation scale range is invalid");
}

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.network = NetworkSpec::paper();
  return c;
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.network = NetworkSpec::desk();
  c.patch_shape = {32, 32, 32};
  c.max_epochs = 2;
  c.steps_per_epoch = 100;
  return c;
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch > cfg.max_epochs)
    throw OutOfRangeEpoch("epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(cfg.max_epochs) + "]");
  if (cfg.max_epochs == 0) return cfg.initial_lr;
  const double frac = 1.0 - static_cast<double>(epoch) / static_cast<double>(cfg.max_epochs);
  return cfg.initial_lr * std::pow(frac, cfg.poly_power);
}

// ---------------------------------------------------------------------------

namespace {

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

int uniform_int(Rng& rng, int lo, int hi) {  // inclusive
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace

PatchSample sample_patch(const MultiModalCase& c, const TrainConfig& cfg, Rng& rng) {
  if (!c.label) throw NoLabel("case '" + c.case_id + "' has no label for training");
  const Shape3 vol = c.geometry().shape;
  const Shape3 patch = cfg.patch_shape;
  Shape3 padded, pad_lo;
  for (int a = 0; a < 3; ++a) {
    padded[a] = std::max(vol[a], patch[a]);
    pad_lo[a] = (padded[a] - vol[a]) / 2;
  }

  PatchSample s;
  s.presence = c.presence;
  const bool has_fg = c.label->foreground_count() > 0;
  const double u = uniform01(rng);
  s.foreground_forced = has_fg && u < cfg.foreground_oversample;

  if (s.foreground_forced) {
    const std::int64_t k =
        std::uniform_int_distribution<std::int64_t>(0, c.label->foreground_count() - 1)(rng);
    std::int64_t seen = 0, flat = 0;
    for (std::size_t i = 0; i < c.label->data.size(); ++i)
      if (c.label->data[i] > 0 && seen++ == k) {
        flat = static_cast<std::int64_t>(i);
        break;
      }
    const int fx = static_cast<int>(flat % vol.x);
    const int fy = static_cast<int>((flat / vol.x) % vol.y);
    const int fz = static_cast<int>(flat / (std::int64_t{vol.x} * vol.y));
    const int centre[3] = {fx + pad_lo.x, fy + pad_lo.y, fz + pad_lo.z};
    for (int a = 0; a < 3; ++a)
      s.origin[a] = std::clamp(centre[a] - patch[a] / 2, 0, padded[a] - patch[a]);
  } else {
    for (int a = 0; a < 3; ++a) s.origin[a] = uniform_int(rng, 0, padded[a] - patch[a]);
  }

  // A two-class network learns the Pathoseg target: any label is foreground.
  const bool binary = cfg.network.num_classes == 2;
  s.image = Tensor(kNumModalities, patch);
  s.target.assign(patch.voxels(), 0);
  for (int z = 0; z < patch.z; ++z) {
    const int vz = z + s.origin.z - pad_lo.z;
    if (vz < 0 || vz >= vol.z) continue;
    for (int y = 0; y < patch.y; ++y) {
      const int vy = y + s.origin.y - pad_lo.y;
      if (vy < 0 || vy >= vol.y) continue;
      for (int x = 0; x < patch.x; ++x) {
        const int vx = x + s.origin.x - pad_lo.x;
        if (vx < 0 || vx >= vol.x) continue;
        const std::int64_t src = vol.index(vx, vy, vz);
        const std::int64_t dst = patch.index(x, y, z);
        for (int m = 0; m < kNumModalities; ++m)
          s.image.data[std::size_t(m) * patch.voxels() + dst] = c.volumes[m].data[src];
        const std::int32_t label = c.label->data[src];
        s.target[dst] = binary ? (label > 0) : label;
      }
    }
  }
  return s;
}

namespace {

// Apply a voxel permutation given by out->in coordinate mapping to every channel and the target.
template <typename Map>
void remap(PatchSample& s, Map&& to_input) {
  const Shape3 sh = s.image.shape;
  Tensor img(s.image.channels, sh);
  std::vector<std::int32_t> tgt(s.target.size());
  const std::int64_t n = sh.voxels();
  for (int z = 0; z < sh.z; ++z)
    for (int y = 0; y < sh.y; ++y)
      for (int x = 0; x < sh.x; ++x) {
        int in[3] = {x, y, z};
        to_input(in);
        const std::int64_t dst = sh.index(x, y, z);
        const std::int64_t src = sh.index(in[0], in[1], in[2]);
        for (int c = 0; c < img.channels; ++c) img.data[c * n + dst] = s.image.data[c * n + src];
        tgt[dst] = s.target[src];
      }
  s.image = std::move(img);
  s.target = std::move(tgt);
}

}  // namespace

void augment(PatchSample& s, const AugmentConfig& cfg, Rng& rng) {
  if (!cfg.enabled) return;
  const Shape3 sh = s.image.shape;

  for (int axis = 0; axis < 3; ++axis) {
    if (uniform01(rng) < cfg.flip_prob) {
      const int n = sh[axis];
      remap(s, [axis, n](int* c) { c[axis] = n - 1 - c[axis]; });
    }
  }

  // Rotation needs a square plane; the first axis pair with equal extent is used.
  const double r = uniform01(rng);
  const int turns = uniform_int(rng, 1, 3);
  int pa = -1, pb = -1;
  if (sh.x == sh.y) pa = 0, pb = 1;
  else if (sh.x == sh.z) pa = 0, pb = 2;
  else if (sh.y == sh.z) pa = 1, pb = 2;
  if (r < cfg.rotate_prob && pa >= 0) {
    const int n = sh[pa];
    remap(s, [pa, pb, n, turns](int* c) {
      for (int t = 0; t < turns; ++t) {
        const int a = c[pa], b = c[pb];
        c[pa] = b;
        c[pb] = n - 1 - a;
      }
    });
  }

  for (Modality m : kAllModalities) {
    const double draw = uniform01(rng);
    const double factor = std::uniform_real_distribution<double>(cfg.scale_low, cfg.scale_high)(rng);
    if (!s.presence[m] || draw >= cfg.scale_prob) continue;
    for (float& v : s.image.channel(index_of(m))) v = static_cast<float>(v * factor);
  }
}

void drop_modalities(MultiModalCase& c, double p, Rng& rng) {
  const ModalityPresence original = c.presence;
  ModalityPresence kept;
  for (Modality m : kAllModalities) {
    const double u = uniform01(rng);
    kept[m] = original[m] && !(u < p);
  }
  if (kept.count() == 0 && original.count() > 0) {
    int pick = uniform_int(rng, 0, original.count() - 1);
    for (Modality m : kAllModalities)
      if (original[m] && pick-- == 0) kept[m] = true;
  }
  for (Modality m : kAllModalities)
    if (original[m] && !kept[m])
      std::fill(c.volumes[index_of(m)].data.begin(), c.volumes[index_of(m)].data.end(), 0.0f);
  c.presence = kept;
}

// ---------------------------------------------------------------------------

OptimizerState::OptimizerState(const F3NetModel& model) {
  for (const auto& p : model.parameters()) velocity.emplace_back(p.value.size(), 0.0f);
}

StepResult train_step(F3NetModel& model, std::span<const PatchSample> batch,
                      const TrainConfig& cfg, OptimizerState& opt, double lr) {
  if (batch.empty()) throw EmptyCase("train_step needs a non-empty batch");
  const int k = model.spec().num_classes;
  Gradients grads(model);
  StepResult result;

  std::array<bool, kNumParamGroups> active{};
  active[kSharedGroup] = true;

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<double> logits_d;
  for (const PatchSample& item : batch) {
    for (Modality m : kAllModalities) active[index_of(m)] = active[index_of(m)] || item.presence[m];
    ForwardPass pass(model);
    const Tensor& logits = pass.run(item.image, item.presence);
    logits_d.assign(logits.data.begin(), logits.data.end());
    const LossValue lv = combined_loss(logits_d, k, item.target, cfg.loss_weights, true);
    if (!std::isfinite(lv.total))
      throw NonFiniteLoss("loss is " + std::to_string(lv.total));
    result.loss += lv.total * inv_b;

    Tensor grad_logits(logits.channels, logits.shape);
    for (std::size_t i = 0; i < lv.grad.size(); ++i)
      grad_logits.data[i] = static_cast<float>(lv.grad[i] * inv_b);
    pass.backward(grad_logits, grads);

    const std::size_t n = item.target.size();
    std::vector<std::uint8_t> pred(n), tgt(n);
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (logits_d[c * n + i] > logits_d[best * n + i]) best = c;
      pred[i] = best > 0;
      tgt[i] = item.target[i] > 0;
    }
    const ConfusionCounts cc = confusion_counts(pred, tgt);
    result.counts.tp += cc.tp;
    result.counts.fp += cc.fp;
    result.counts.fn += cc.fn;
    result.counts.tn += cc.tn;
  }

  auto& params = model.parameters();
  const float mu = static_cast<float>(cfg.momentum);
  const float wd = static_cast<float>(cfg.weight_decay);
  const float step = static_cast<float>(lr);
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!active[model.group_of(p)]) continue;
    auto& theta = params[p].value;
    auto& v = opt.velocity[p];
    const auto& g = grads.values[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const float d = g[i] + wd * theta[i];
      v[i] = mu * v[i] + d;
      theta[i] -= step * (cfg.nesterov ? d + mu * v[i] : v[i]);
    }
  }
  result.updated = active;
  return result;
}

// ---------------------------------------------------------------------------

std::filesystem::path run_directory(const std::filesystem::path& root, const std::string& run_id) {
  return root / "checkpoints" / run_id;
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("IOError", "cannot write " + path.string());
  os << "epoch,lr,mean_loss,train_dsc\n";
  char line[160];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g\n", r.epoch, r.lr, r.mean_loss,
                  r.train_dsc);
    os << line;
  }
}

namespace {

constexpr double kDscEma = 0.9;

struct RunState {
  int next_epoch = 0;
  double ema = 0.0;
  double best = -1.0;
  std::vector<EpochRecord> history;
};

nlohmann::json history_json(std::span<const EpochRecord> h) {
  auto arr = nlohmann::json::array();
  for (const auto& r : h)
    arr.push_back({{"epoch", r.epoch}, {"lr", r.lr}, {"mean_loss", r.mean_loss},
                   {"train_dsc", r.train_dsc}});
  return arr;
}

Checkpoint training_checkpoint(const F3NetModel& model, const OptimizerState& opt,
                               const RunState& st, const Rng& rng, const TrainConfig& cfg) {
  Checkpoint c = make_checkpoint(model);
  for (std::size_t p = 0; p < model.parameters().size(); ++p)
    c.arrays.emplace("momentum." + model.parameters()[p].name, opt.velocity[p]);
  std::ostringstream rng_state;
  rng_state << rng;
  c.meta = {{"next_epoch", st.next_epoch},
            {"ema_dsc", st.ema},
            {"best_dsc", st.best},
            {"rng", rng_state.str()},
            {"seed", cfg.seed},
            {"patch_shape", {cfg.patch_shape.x, cfg.patch_shape.y, cfg.patch_shape.z}},
            {"history", history_json(st.history)}};
  return c;
}

void restore(const Checkpoint& c, F3NetModel& model, OptimizerState& opt, RunState& st, Rng& rng) {
  if (!(c.spec == model.spec())) throw CorruptFile("checkpoint network spec differs from config");
  F3NetModel loaded = model_from_checkpoint(c);
  model.parameters() = loaded.parameters();
  for (std::size_t p = 0; p < model.parameters().size(); ++p) {
    auto it = c.arrays.find("momentum." + model.parameters()[p].name);
    if (it != c.arrays.end() && it->second.size() == opt.velocity[p].size())
      opt.velocity[p] = it->second;
  }
  try {
    st.next_epoch = c.meta.at("next_epoch").get<int>();
    st.ema = c.meta.at("ema_dsc").get<double>();
    st.best = c.meta.at("best_dsc").get<double>();
    std::istringstream is(c.meta.at("rng").get<std::string>());
    is >> rng;
    st.history.clear();
    for (const auto& r : c.meta.at("history"))
      st.history.push_back({r.at("epoch").get<int>(), r.at("lr").get<double>(),
                            r.at("mean_loss").get<double>(), r.at("train_dsc").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(std::string("training state: ") + e.what());
  }
}

}  // namespace

TrainResult train(F3NetModel& model, std::span<const MultiModalCase> dataset,
                  const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  if (!(cfg.network == model.spec()))
    throw InvalidConfig("model network spec does not match the training config");
  if (dataset.empty()) throw EmptyCase("training dataset is empty");
  for (const auto& c : dataset) {
    validate_case(c);
    if (!c.label) throw NoLabel("case '" + c.case_id + "' has no label");
  }

  TrainResult result;
  if (cfg.max_epochs == 0) return result;

  Rng rng(cfg.seed);
  OptimizerState opt(model);
  RunState st;

  std::optional<std::filesystem::path> run_dir;
  if (options.output_root) run_dir = run_directory(*options.output_root, options.run_id);
  if (options.resume && run_dir && std::filesystem::exists(*run_dir / "latest.ckpt"))
    restore(read_checkpoint(*run_dir / "latest.ckpt"), model, opt, st, rng);

  std::vector<PatchSample> batch(cfg.batch_size);
  for (int epoch = st.next_epoch; epoch < cfg.max_epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    double loss_sum = 0.0;
    ConfusionCounts epoch_counts;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      for (auto& item : batch) {
        const int idx = uniform_int(rng, 0, static_cast<int>(dataset.size()) - 1);
        MultiModalCase work = dataset[idx];
        drop_modalities(work, cfg.modality_drop_prob, rng);
        item = sample_patch(work, cfg, rng);
        augment(item, cfg.augment, rng);
      }
      const StepResult r = train_step(model, batch, cfg, opt, lr);
      loss_sum += r.loss;
      epoch_counts.tp += r.counts.tp;
      epoch_counts.fp += r.counts.fp;
      epoch_counts.fn += r.counts.fn;
      epoch_counts.tn += r.counts.tn;
    }
    const double dsc = metrics_from_counts(epoch_counts).dsc;
    st.ema = st.history.empty() ? dsc : kDscEma * st.ema + (1.0 - kDscEma) * dsc;
    EpochRecord rec{epoch, lr, loss_sum / cfg.steps_per_epoch, st.ema};
    st.history.push_back(rec);
    st.next_epoch = epoch + 1;

    if (run_dir) {
      const bool improved = st.ema > st.best;
      if (improved) st.best = st.ema;
      const Checkpoint ckpt = training_checkpoint(model, opt, st, rng, cfg);
      if (improved) write_checkpoint(*run_dir / "best.ckpt", ckpt);
      write_checkpoint(*run_dir / "latest.ckpt", ckpt);
      write_history_csv(*run_dir / "history.csv", st.history);
    } else {
      st.best = std::max(st.best, st.ema);
    }
    if (options.on_epoch) options.on_epoch(rec);
  }
  result.history = st.history;
  result.best_dsc = std::max(st.best, 0.0);
  return result;
}

}  // namespace f3net
