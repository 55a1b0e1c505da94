#include "f3net/objective.hpp"

#include <algorithm>
#include <cmath>

#include "f3net/error.hpp"

namespace f3net {

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
    throw InvalidConfig("loss weights must be nonnegative");
  if (!(lambda1 + lambda2 > 0.0)) throw InvalidConfig("lambda1 + lambda2 must be positive");
}

namespace {

std::size_t voxel_count(std::span<const double> logits, int num_classes,
                        std::span<const std::int32_t> target) {
  if (num_classes < 2) throw ShapeMismatch("need at least two classes");
  if (logits.size() != target.size() * static_cast<std::size_t>(num_classes))
    throw ShapeMismatch("logits hold " + std::to_string(logits.size()) + " values for " +
                        std::to_string(target.size()) + " voxels x " +
                        std::to_string(num_classes) + " classes");
  for (std::int32_t t : target)
    if (t < 0 || t >= num_classes) throw InvalidLabel("label " + std::to_string(t));
  return target.size();
}

// Per-voxel softmax, channel-major in and out.
std::vector<double> softmax(std::span<const double> logits, int k, std::size_t n) {
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits[i];
    for (int c = 1; c < k; ++c) mx = std::max(mx, logits[c * n + i]);
    double z = 0.0;
    for (int c = 0; c < k; ++c) z += (p[c * n + i] = std::exp(logits[c * n + i] - mx));
    for (int c = 0; c < k; ++c) p[c * n + i] /= z;
  }
  return p;
}

}  // namespace

double dice_loss(std::span<const double> probs, std::span<const std::int32_t> target) {
  if (probs.size() != target.size()) throw ShapeMismatch("dice_loss: size mismatch");
  double inter = 0.0, psum = 0.0, tsum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double t = target[i] > 0 ? 1.0 : 0.0;
    inter += probs[i] * t;
    psum += probs[i];
    tsum += t;
  }
  return 1.0 - (2.0 * inter + kDiceSmooth) / (psum + tsum + kDiceSmooth);
}

double ce_loss(std::span<const double> logits, int num_classes,
               std::span<const std::int32_t> target) {
  const std::size_t n = voxel_count(logits, num_classes, target);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits[i];
    for (int c = 1; c < num_classes; ++c) mx = std::max(mx, logits[c * n + i]);
    double z = 0.0;
    for (int c = 0; c < num_classes; ++c) z += std::exp(logits[c * n + i] - mx);
    sum += std::log(z) + mx - logits[target[i] * n + i];
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

std::vector<double> foreground_probabilities(std::span<const double> logits, int num_classes) {
  const std::size_t n = logits.size() / static_cast<std::size_t>(num_classes);
  const auto p = softmax(logits, num_classes, n);
  std::vector<double> fg(n);
  for (std::size_t i = 0; i < n; ++i) fg[i] = 1.0 - p[i];
  return fg;
}

LossValue combined_loss(std::span<const double> logits, int num_classes,
                        std::span<const std::int32_t> target, const LossWeights& w,
                        bool with_grad) {
  w.validate();
  const std::size_t n = voxel_count(logits, num_classes, target);
  const int k = num_classes;
  const auto p = softmax(logits, k, n);

  LossValue out;
  double inter = 0.0, psum = 0.0, tsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double fg = 1.0 - p[i];
    const double t = target[i] > 0 ? 1.0 : 0.0;
    inter += fg * t;
    psum += fg;
    tsum += t;
  }
  const double denom = psum + tsum + kDiceSmooth;
  const double num = 2.0 * inter + kDiceSmooth;
  out.dice = 1.0 - num / denom;
  out.ce = ce_loss(logits, k, target);
  out.total = w.lambda1 * out.dice + w.lambda2 * out.ce;

  if (!with_grad) return out;
  out.grad.assign(logits.size(), 0.0);
  const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = target[i] > 0 ? 1.0 : 0.0;
    // dDice/dfg_i, then fg = 1 - p0 so dfg/dz_c = -p0 (delta_c0 - p_c).
    const double d_fg = -(2.0 * t * denom - num) / (denom * denom);
    const double p0 = p[i];
    for (int c = 0; c < k; ++c) {
      const double pc = p[c * n + i];
      const double dfg_dz = c == 0 ? -p0 * (1.0 - p0) : p0 * pc;
      const double dce_dz = (pc - (target[i] == c ? 1.0 : 0.0)) * inv_n;
      out.grad[c * n + i] = w.lambda1 * d_fg * dfg_dz + w.lambda2 * dce_dz;
    }
  }
  return out;
}

ConfusionCounts confusion_counts(std::span<const std::uint8_t> pred,
                                 std::span<const std::uint8_t> target) {
  if (pred.size() != target.size())
    throw ShapeMismatch("prediction has " + std::to_string(pred.size()) + " voxels, target " +
                        std::to_string(target.size()));
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::uint8_t a = pred[i], b = target[i];
    if (a > 1 || b > 1) throw InvalidLabel("metrics expect binary masks");
    c.tp += a & b;
    c.fp += a & (1 - b);
    c.fn += (1 - a) & b;
    c.tn += (1 - a) & (1 - b);
  }
  return c;
}

MetricsRow metrics_from_counts(const ConfusionCounts& c, std::string case_id) {
  auto ratio = [](double num, double den, bool agree) {
    return den > 0.0 ? num / den : (agree ? 1.0 : 0.0);
  };
  const double tp = double(c.tp), fp = double(c.fp), fn = double(c.fn), tn = double(c.tn);
  MetricsRow r;
  r.case_id = std::move(case_id);
  r.dsc = ratio(2.0 * tp, 2.0 * tp + fp + fn, true);
  r.sensitivity = ratio(tp, tp + fn, c.fp == 0);  // no target foreground
  r.precision = ratio(tp, tp + fp, c.fn == 0);    // no predicted foreground
  r.specificity = ratio(tn, tn + fp, c.fn == 0);  // no target background
  r.accuracy = ratio(tp + tn, double(c.total()), true);
  return r;
}

MetricsRow confusion_metrics(std::span<const std::uint8_t> pred,
                             std::span<const std::uint8_t> target, std::string case_id) {
  return metrics_from_counts(confusion_counts(pred, target), std::move(case_id));
}

MetricsRow mean_row(std::span<const MetricsRow> rows, std::string label) {
  MetricsRow m;
  m.case_id = std::move(label);
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.dsc += r.dsc;
    m.accuracy += r.accuracy;
    m.sensitivity += r.sensitivity;
    m.specificity += r.specificity;
    m.precision += r.precision;
  }
  const double n = static_cast<double>(rows.size());
  m.dsc /= n;
  m.accuracy /= n;
  m.sensitivity /= n;
  m.specificity /= n;
  m.precision /= n;
  return m;
}

}  // namespace f3net
