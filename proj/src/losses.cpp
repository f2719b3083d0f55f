#include "maps/losses.hpp"

#include <cmath>
#include <sstream>

#include "maps/error.hpp"

namespace maps {
namespace {

void require_same_count(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    std::ostringstream msg;
    msg << what << ": batch sizes differ (" << a << " vs " << b << ")";
    throw InvalidArgument(msg.str());
  }
}

double norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

std::vector<Image> augment_all(std::span<const Image> images, std::span<const AugmentationRecord> records) {
  require_same_count(images.size(), records.size(), "augment");
  std::vector<Image> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) out.push_back(apply_to_image(records[i], images[i]));
  return out;
}

}  // namespace

DivergenceError::DivergenceError(std::string stage, long step, std::string term, double value)
    : Error(ErrorCode::kDivergence, [&] {
        std::ostringstream msg;
        msg << "training diverged: stage=" << stage << " step=" << step << " term=" << term << " value=" << value;
        return msg.str();
      }()),
      stage_(std::move(stage)),
      step_(step),
      term_(std::move(term)),
      value_(value) {}

void LossWeights::validate() const {
  if (!(beta_m >= 0.0) || !(beta_s >= 0.0)) throw InvalidArgument("loss weights must be non-negative");
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("tau must lie in [0, 1]");
}

void check_divergence(const std::string& stage, long step, const std::string& term, double value) {
  if (!std::isfinite(value) || std::abs(value) > kDivergenceBound) throw DivergenceError(stage, step, term, value);
}

HeatmapLoss regression_loss(std::span<const HeatmapStack> pred, std::span<const HeatmapStack> target,
                            std::span<const double> sample_weights) {
  require_same_count(pred.size(), target.size(), "regression_loss");
  if (!sample_weights.empty()) require_same_count(pred.size(), sample_weights.size(), "regression_loss weights");
  HeatmapLoss out;
  if (pred.empty()) return out;
  const double inv_batch = 1.0 / static_cast<double>(pred.size());
  out.grad.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!pred[i].same_shape(target[i])) throw InvalidArgument("regression_loss: stack shape mismatch");
    HeatmapStack g(pred[i].keypoints(), pred[i].resolution(), pred[i].stride());
    const double w = sample_weights.empty() ? 1.0 : sample_weights[i];
    if (w != 0.0) {
      auto& gv = g.values();
      const auto& p = pred[i].values();
      const auto& t = target[i].values();
      for (std::size_t j = 0; j < gv.size(); ++j) gv[j] = p[j] - t[j];
      const double n = norm(gv);
      out.value += w * n * inv_batch;
      const double scale = n > 0.0 ? w * inv_batch / n : 0.0;
      for (double& v : gv) v *= scale;
    }
    out.grad.push_back(std::move(g));
  }
  return out;
}

std::vector<HeatmapStack> augmented_targets(std::span<const KeypointSet> labels,
                                            std::span<const AugmentationRecord> records, const HeatmapSpec& spec) {
  require_same_count(labels.size(), records.size(), "augmented_targets");
  std::vector<HeatmapStack> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.push_back(apply_to_heatmap(records[i], render_heatmaps(labels[i], spec)));
  }
  return out;
}

HeatmapLoss source_loss(std::span<const HeatmapStack> pred, std::span<const KeypointSet> labels,
                        std::span<const AugmentationRecord> records, const HeatmapSpec& spec) {
  require_same_count(pred.size(), labels.size(), "source_loss");
  const auto targets = augmented_targets(labels, records, spec);
  return regression_loss(pred, targets);
}

HeatmapLoss consistency_loss(std::span<const HeatmapStack> student_out, std::span<const HeatmapStack> teacher_out,
                             std::span<const AugmentationRecord> student_records,
                             std::span<const AugmentationRecord> teacher_records, double tau, double sigma) {
  require_same_count(student_out.size(), teacher_out.size(), "consistency_loss");
  require_same_count(student_out.size(), student_records.size(), "consistency_loss records");
  require_same_count(student_out.size(), teacher_records.size(), "consistency_loss records");
  HeatmapLoss out;
  if (student_out.empty()) return out;
  const double inv_batch = 1.0 / static_cast<double>(student_out.size());

  for (std::size_t i = 0; i < student_out.size(); ++i) {
    const HeatmapStack& h = student_out[i];
    const HeatmapStack& t = teacher_out[i];
    if (!h.same_shape(t)) throw InvalidArgument("consistency_loss: stack shape mismatch");
    HeatmapStack g(h.keypoints(), h.resolution(), h.stride());

    const DecodedKeypoints decoded = decode_heatmaps(t);
    bool any_gated_in = false;
    for (double c : decoded.confidence) any_gated_in = any_gated_in || c >= tau;
    if (!any_gated_in) {
      out.grad.push_back(std::move(g));
      continue;
    }

    const HeatmapStack teacher_canonical =
        invert_on_heatmap(teacher_records[i], render_heatmaps(decoded.keypoints, h.resolution(), sigma, h.stride()));
    const auto student_inv = GeometricWarp::inverse(student_records[i], h.height(), h.width());
    std::vector<double> residual(h.channel_size());

    for (int k = 0; k < h.keypoints(); ++k) {
      if (!(decoded.confidence[k] >= tau)) continue;
      student_inv.apply(h.channel(k), residual);
      const auto tk = teacher_canonical.channel(k);
      for (std::size_t j = 0; j < residual.size(); ++j) residual[j] -= tk[j];
      const double n = norm(residual);
      out.value += n * inv_batch;
      if (n > 0.0) {
        const double scale = inv_batch / n;
        for (double& r : residual) r *= scale;
        student_inv.accumulate_adjoint(residual, g.channel(k));
      }
    }
    out.grad.push_back(std::move(g));
  }
  return out;
}

HeatmapLoss mixup_loss(std::span<const HeatmapStack> pred_mixed, std::span<const HeatmapStack> pred_i,
                       std::span<const HeatmapStack> pred_j, double rho) {
  require_same_count(pred_mixed.size(), pred_i.size(), "mixup_loss");
  require_same_count(pred_mixed.size(), pred_j.size(), "mixup_loss");
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidArgument("mixup_loss: rho outside [0, 1]");
  std::vector<HeatmapStack> target;
  target.reserve(pred_i.size());
  for (std::size_t n = 0; n < pred_i.size(); ++n) {
    if (!pred_i[n].same_shape(pred_j[n])) throw InvalidArgument("mixup_loss: stack shape mismatch");
    HeatmapStack t = pred_i[n];
    const auto& b = pred_j[n].values();
    auto& tv = t.values();
    for (std::size_t j = 0; j < tv.size(); ++j) tv[j] = rho * tv[j] + (1.0 - rho) * b[j];
    target.push_back(std::move(t));
  }
  return regression_loss(pred_mixed, target);
}

HeatmapLoss pseudo_label_loss(std::span<const HeatmapStack> pred, std::span<const KeypointSet> pseudo,
                              std::span<const AugmentationRecord> records, const HeatmapSpec& spec,
                              std::span<const double> sample_weights) {
  require_same_count(pred.size(), pseudo.size(), "pseudo_label_loss");
  const auto targets = augmented_targets(pseudo, records, spec);
  return regression_loss(pred, targets, sample_weights);
}

ModelLoss source_loss(const DetectorParams& model, std::span<const Image> images, std::span<const KeypointSet> labels,
                      std::span<const AugmentationRecord> records, const HeatmapSpec& spec) {
  const auto inputs = augment_all(images, records);
  ForwardTrace trace;
  const auto pred = forward(model, inputs, &trace);
  const auto loss = source_loss(pred, labels, records, spec);
  return {loss.value, backward(model, trace, loss.grad)};
}

ModelLoss consistency_loss(const DetectorParams& student, const DetectorParams& teacher,
                           std::span<const Image> images, std::span<const AugmentationRecord> student_records,
                           std::span<const AugmentationRecord> teacher_records, double tau, double sigma) {
  const auto student_in = augment_all(images, student_records);
  const auto teacher_in = augment_all(images, teacher_records);
  ForwardTrace trace;
  const auto h = forward(student, student_in, &trace);
  const auto t = forward(teacher, teacher_in);
  const auto loss = consistency_loss(h, t, student_records, teacher_records, tau, sigma);
  return {loss.value, backward(student, trace, loss.grad)};
}

ModelLoss mixup_loss(const DetectorParams& model, std::span<const Image> x_i, std::span<const Image> x_j, double rho) {
  require_same_count(x_i.size(), x_j.size(), "mixup_loss");
  std::vector<Image> mixed;
  mixed.reserve(x_i.size());
  for (std::size_t n = 0; n < x_i.size(); ++n) mixed.push_back(mix_images(x_i[n], x_j[n], rho));
  const auto fi = forward(model, x_i);
  const auto fj = forward(model, x_j);
  ForwardTrace trace;
  const auto fm = forward(model, mixed, &trace);
  const auto loss = mixup_loss(fm, fi, fj, rho);
  return {loss.value, backward(model, trace, loss.grad)};
}

ModelLoss pseudo_label_loss(const DetectorParams& model, std::span<const Image> images,
                            std::span<const AugmentationRecord> records, std::span<const KeypointSet> pseudo,
                            const HeatmapSpec& spec) {
  const auto inputs = augment_all(images, records);
  ForwardTrace trace;
  const auto pred = forward(model, inputs, &trace);
  const auto loss = pseudo_label_loss(pred, pseudo, records, spec);
  return {loss.value, backward(model, trace, loss.grad)};
}

double overall_objective(const ObjectiveTerms& terms, const LossWeights& weights) {
  check_divergence("objective", -1, "loss_mt", terms.mt);
  check_divergence("objective", -1, "loss_mix", terms.mix);
  check_divergence("objective", -1, "loss_spl", terms.spl);
  return terms.mt + weights.beta_m * terms.mix + weights.beta_s * terms.spl;
}

}  // namespace maps
