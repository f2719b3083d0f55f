#pragma once

#include <span>
#include <string>
#include <vector>

#include "maps/augment.hpp"
#include "maps/geometry.hpp"
#include "maps/model.hpp"

namespace maps {

struct LossWeights {
  double beta_m = 1.0;  // self-mixup weight
  double beta_s = 1.0;  // self-paced pseudo-label weight
  double tau = 0.3;     // teacher activation gate

  void validate() const;
};

/// Loss value plus its gradient with respect to each predicted stack.
struct HeatmapLoss {
  double value = 0.0;
  std::vector<HeatmapStack> grad;
};

/// Loss value plus its gradient with respect to the model parameters.
struct ModelLoss {
  double value = 0.0;
  ParamSet grad;
};

/// Any loss term above this magnitude counts as divergence.
inline constexpr double kDivergenceBound = 1e6;

/// Throws DivergenceError when `value` is non-finite or beyond the bound.
void check_divergence(const std::string& stage, long step, const std::string& term, double value);

/// Mean over the batch of w_i * ||pred_i - target_i||_F. Empty weights mean
/// all ones.
HeatmapLoss regression_loss(std::span<const HeatmapStack> pred, std::span<const HeatmapStack> target,
                            std::span<const double> sample_weights = {});

/// A(H(y)) for each sample: render the keypoints, then warp with the record.
std::vector<HeatmapStack> augmented_targets(std::span<const KeypointSet> labels,
                                            std::span<const AugmentationRecord> records, const HeatmapSpec& spec);

/// Supervised regression against augmented rendered labels.
HeatmapLoss source_loss(std::span<const HeatmapStack> pred, std::span<const KeypointSet> labels,
                        std::span<const AugmentationRecord> records, const HeatmapSpec& spec);

/// Teacher outputs are decoded and re-rendered as ideal Gaussians, both sides
/// are mapped back to the canonical frame, and each keypoint contributes its
/// own L2 term when the teacher's raw channel maximum reaches tau. Summed over
/// keypoints, averaged over the batch. Gradient flows to the student only.
HeatmapLoss consistency_loss(std::span<const HeatmapStack> student_out, std::span<const HeatmapStack> teacher_out,
                             std::span<const AugmentationRecord> student_records,
                             std::span<const AugmentationRecord> teacher_records, double tau, double sigma);

/// ||f(mix) - (rho f(x_i) + (1 - rho) f(x_j))||, target held constant.
HeatmapLoss mixup_loss(std::span<const HeatmapStack> pred_mixed, std::span<const HeatmapStack> pred_i,
                       std::span<const HeatmapStack> pred_j, double rho);

/// Regression of augmented-input predictions onto augmented rendered pseudo
/// labels, optionally weighted per sample.
HeatmapLoss pseudo_label_loss(std::span<const HeatmapStack> pred, std::span<const KeypointSet> pseudo,
                              std::span<const AugmentationRecord> records, const HeatmapSpec& spec,
                              std::span<const double> sample_weights = {});

// Model-level forms: run the network, evaluate the loss, back-propagate.

ModelLoss source_loss(const DetectorParams& model, std::span<const Image> images, std::span<const KeypointSet> labels,
                      std::span<const AugmentationRecord> records, const HeatmapSpec& spec);

ModelLoss consistency_loss(const DetectorParams& student, const DetectorParams& teacher,
                           std::span<const Image> images, std::span<const AugmentationRecord> student_records,
                           std::span<const AugmentationRecord> teacher_records, double tau, double sigma);

/// x_i and x_j are already-augmented inputs of equal count.
ModelLoss mixup_loss(const DetectorParams& model, std::span<const Image> x_i, std::span<const Image> x_j, double rho);

ModelLoss pseudo_label_loss(const DetectorParams& model, std::span<const Image> images,
                            std::span<const AugmentationRecord> records, std::span<const KeypointSet> pseudo,
                            const HeatmapSpec& spec);

struct ObjectiveTerms {
  double mt = 0.0;
  double mix = 0.0;
  double spl = 0.0;  // sample-weighted pseudo-label regression
};

/// mt + beta_m * mix + beta_s * spl. The self-paced regulariser is constant for
/// fixed weights and is left out.
double overall_objective(const ObjectiveTerms& terms, const LossWeights& weights);

}  // namespace maps
