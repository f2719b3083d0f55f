#include "maps/spl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "maps/error.hpp"
#include "maps/losses.hpp"

namespace maps {

std::size_t SelectionState::selected_count() const {
  return static_cast<std::size_t>(std::count(weights.begin(), weights.end(), std::uint8_t{1}));
}

std::vector<std::size_t> quota_schedule(std::span<const double> fractions, std::size_t n) {
  if (fractions.empty()) throw InvalidArgument("selection schedule is empty");
  std::vector<std::size_t> out;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw InvalidArgument("selection fractions must lie in (0, 1]");
    const auto q = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9));
    if (!out.empty() && q <= out.back()) {
      throw InvalidArgument("selection schedule must be strictly increasing after rounding to sample counts");
    }
    out.push_back(q);
  }
  if (out.front() == 0 || out.back() > n) throw InvalidArgument("selection quota out of range");
  return out;
}

SelectionState make_selection_state(std::vector<std::size_t> schedule, std::size_t n) {
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i] == 0 || schedule[i] > n || (i > 0 && schedule[i] <= schedule[i - 1])) {
      throw InvalidArgument("selection schedule must be strictly increasing quotas in [1, n]");
    }
  }
  SelectionState s;
  s.schedule = std::move(schedule);
  s.weights.assign(n, 0);
  return s;
}

std::vector<KeypointSet> decode_pseudo_labels(const DetectorParams& model, std::span<const Image> images,
                                              std::size_t batch_size) {
  std::vector<KeypointSet> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, images.size() - start);
    for (const HeatmapStack& h : forward(model, images.subspan(start, len))) {
      out.push_back(decode_heatmaps(h).keypoints);
    }
  }
  return out;
}

std::vector<double> score_samples(const DetectorParams& model, std::span<const Image> images,
                                  std::span<const KeypointSet> pseudo, const HeatmapSpec& spec,
                                  std::size_t batch_size) {
  if (images.empty()) throw InvalidArgument("score_samples: empty dataset");
  if (pseudo.size() != images.size()) throw InvalidArgument("score_samples: pseudo label count mismatch");
  std::vector<double> scores;
  scores.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, images.size() - start);
    const auto pred = forward(model, images.subspan(start, len));
    for (std::size_t i = 0; i < len; ++i) {
      const HeatmapStack target = render_heatmaps(pseudo[start + i], spec);
      const auto& p = pred[i].values();
      const auto& t = target.values();
      double acc = 0.0;
      for (std::size_t j = 0; j < p.size(); ++j) acc += (p[j] - t[j]) * (p[j] - t[j]);
      scores.push_back(std::sqrt(acc));
    }
  }
  return scores;
}

std::vector<std::uint8_t> solve_weights(std::span<const double> scores, double lambda, std::size_t quota) {
  std::vector<std::uint8_t> v(scores.size(), 0);
  std::size_t taken = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] < lambda) {
      v[i] = 1;
      ++taken;
    }
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] == lambda && (quota == 0 || taken < quota)) {
      v[i] = 1;
      ++taken;
    }
  }
  return v;
}

double baby_step_lambda(std::span<const double> scores, std::size_t quota) {
  if (quota < 1 || quota > scores.size()) throw InvalidArgument("baby_step_lambda: quota out of range");
  std::vector<double> tmp(scores.begin(), scores.end());
  std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(quota - 1), tmp.end());
  return tmp[quota - 1];
}

void advance_round(SelectionState& state, const DetectorParams& model, std::span<const Image> images,
                   const HeatmapSpec& spec, const DetectorParams* pseudo_source) {
  if (state.exhausted()) {
    throw StateExhausted("selection rounds exhausted after " + std::to_string(state.total_rounds()) + " rounds");
  }
  if (images.size() != state.weights.size()) throw InvalidArgument("advance_round: dataset size changed");
  state.pseudo_labels = decode_pseudo_labels(pseudo_source ? *pseudo_source : model, images);
  state.scores = score_samples(model, images, state.pseudo_labels, spec);
  const std::size_t quota = state.schedule[state.round];
  state.lambda = baby_step_lambda(state.scores, quota);
  state.weights = solve_weights(state.scores, state.lambda, quota);
  ++state.round;
}

}  // namespace maps
