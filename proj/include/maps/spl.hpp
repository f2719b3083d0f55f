#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "maps/geometry.hpp"
#include "maps/image.hpp"
#include "maps/model.hpp"

namespace maps {

/// Self-paced selection state. `round` counts completed advances; round q
/// (1-based) admits schedule[q - 1] samples.
struct SelectionState {
  std::vector<std::uint8_t> weights;  // v, 0/1 per sample
  double lambda = 0.0;                // age parameter, loss units
  int round = 0;
  std::vector<std::size_t> schedule;  // strictly increasing quotas M_1..M_Q
  std::vector<double> scores;         // per-sample l_reg from the last snapshot
  std::vector<KeypointSet> pseudo_labels;

  int total_rounds() const noexcept { return static_cast<int>(schedule.size()); }
  bool exhausted() const noexcept { return round >= total_rounds(); }
  std::size_t selected_count() const;
};

/// Quotas ceil(f * n) for strictly increasing fractions in (0, 1].
std::vector<std::size_t> quota_schedule(std::span<const double> fractions, std::size_t n);

/// Fresh state (round 0, nothing selected) over n samples.
SelectionState make_selection_state(std::vector<std::size_t> schedule, std::size_t n);

/// Decodes a keypoint set from the model's output on each un-augmented image.
std::vector<KeypointSet> decode_pseudo_labels(const DetectorParams& model, std::span<const Image> images,
                                              std::size_t batch_size = 32);

/// Per-sample l_reg against the given pseudo labels, using the identity
/// augmentation. Deterministic; throws InvalidArgument on an empty dataset.
std::vector<double> score_samples(const DetectorParams& model, std::span<const Image> images,
                                  std::span<const KeypointSet> pseudo, const HeatmapSpec& spec,
                                  std::size_t batch_size = 32);

/// Hard SP-regulariser solution: v_i = 1 iff score_i <= lambda. When `quota`
/// is non-zero, samples tied at exactly lambda are admitted in index order
/// until `quota` samples are selected.
std::vector<std::uint8_t> solve_weights(std::span<const double> scores, double lambda, std::size_t quota = 0);

/// Baby-step age: the quota-th smallest score (1-based).
double baby_step_lambda(std::span<const double> scores, std::size_t quota);

/// Re-decodes pseudo labels and re-scores with the frozen model, then moves to
/// the next quota. Pseudo labels come from `pseudo_source` when given, else
/// from `model`; scores always use `model`. Throws StateExhausted when every
/// round has been used.
void advance_round(SelectionState& state, const DetectorParams& model, std::span<const Image> images,
                   const HeatmapSpec& spec, const DetectorParams* pseudo_source = nullptr);

}  // namespace maps
