#include "maps/geometry.hpp"

#include <cmath>
#include <sstream>

#include "maps/error.hpp"

namespace maps {

HeatmapStack::HeatmapStack(int keypoints, HeatmapResolution res, double stride)
    : keypoints_(keypoints), res_(res), stride_(stride) {
  if (keypoints < 0 || res.height <= 0 || res.width <= 0 || !(stride > 0.0)) {
    throw InvalidArgument("heatmap stack needs non-negative K, positive resolution and stride");
  }
  values_.assign(static_cast<std::size_t>(keypoints) * channel_size(), 0.0);
}

HeatmapStack render_heatmaps(const KeypointSet& keypoints, HeatmapResolution res, double sigma, double stride) {
  if (!(sigma > 0.0)) throw InvalidArgument("render_heatmaps: sigma must be positive");
  if (res.height <= 0 || res.width <= 0) throw InvalidArgument("render_heatmaps: resolution must be positive");

  HeatmapStack out(static_cast<int>(keypoints.size()), res, stride);
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  for (int k = 0; k < out.keypoints(); ++k) {
    const Keypoint& kp = keypoints[k];
    if (!kp.visible) continue;
    const double cx = image_to_heatmap(kp.x, stride);
    const double cy = image_to_heatmap(kp.y, stride);
    // Separable: exp(-(dx^2+dy^2)/2s^2) = gx * gy.
    std::vector<double> gx(res.width), gy(res.height);
    for (int x = 0; x < res.width; ++x) gx[x] = std::exp(-(x - cx) * (x - cx) * inv_two_var);
    for (int y = 0; y < res.height; ++y) gy[y] = std::exp(-(y - cy) * (y - cy) * inv_two_var);
    for (int y = 0; y < res.height; ++y) {
      for (int x = 0; x < res.width; ++x) out.at(k, y, x) = gy[y] * gx[x];
    }
  }
  return out;
}

DecodedKeypoints decode_heatmaps(const HeatmapStack& stack) {
  if (stack.empty()) throw InvalidArgument("decode_heatmaps: empty stack");
  const int h = stack.height();
  const int w = stack.width();
  DecodedKeypoints out;
  out.keypoints = KeypointSet(stack.keypoints());
  out.confidence.assign(stack.keypoints(), 0.0);

  for (int k = 0; k < stack.keypoints(); ++k) {
    const auto ch = stack.channel(k);
    std::size_t best = 0;
    for (std::size_t i = 1; i < ch.size(); ++i) {
      if (ch[i] > ch[best]) best = i;
    }
    const double peak = ch[best];
    out.confidence[k] = peak;
    if (!(peak > 0.0)) {
      out.keypoints[k] = Keypoint{0.0, 0.0, false};
      continue;
    }
    const int py = static_cast<int>(best) / w;
    const int px = static_cast<int>(best) % w;
    double fx = px;
    double fy = py;
    if (px > 0 && px < w - 1) {
      const double d = stack.at(k, py, px + 1) - stack.at(k, py, px - 1);
      if (d > 0) fx += 0.25;
      else if (d < 0) fx -= 0.25;
    }
    if (py > 0 && py < h - 1) {
      const double d = stack.at(k, py + 1, px) - stack.at(k, py - 1, px);
      if (d > 0) fy += 0.25;
      else if (d < 0) fy -= 0.25;
    }
    out.keypoints[k] = Keypoint{heatmap_to_image(fx, stack.stride()), heatmap_to_image(fy, stack.stride()), true};
  }
  return out;
}

PckReport pck(std::span<const KeypointSet> pred, std::span<const KeypointSet> gt, double image_size,
              double fraction, const KeypointGroups& groups) {
  if (pred.size() != gt.size()) throw InvalidArgument("pck: prediction and ground-truth counts differ");
  if (!(image_size > 0.0)) throw InvalidArgument("pck: image size must be positive");
  if (!(fraction > 0.0)) throw InvalidArgument("pck: fraction must be positive");

  const double threshold = fraction * image_size;
  std::size_t k_count = 0;
  std::vector<std::size_t> hit, seen;
  PckReport report;
  report.threshold_fraction = fraction;

  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (pred[i].size() != gt[i].size()) {
      std::ostringstream msg;
      msg << "pck: keypoint count mismatch at sample " << i << " (" << pred[i].size() << " vs " << gt[i].size()
          << ")";
      throw InvalidArgument(msg.str());
    }
    if (i == 0) {
      k_count = gt[i].size();
      hit.assign(k_count, 0);
      seen.assign(k_count, 0);
    } else if (gt[i].size() != k_count) {
      throw InvalidArgument("pck: K differs across samples");
    }
    for (std::size_t k = 0; k < k_count; ++k) {
      if (!gt[i][k].visible) continue;
      ++seen[k];
      const double dx = pred[i][k].x - gt[i][k].x;
      const double dy = pred[i][k].y - gt[i][k].y;
      if (std::sqrt(dx * dx + dy * dy) < threshold) ++hit[k];
    }
  }

  for (std::size_t k = 0; k < k_count; ++k) {
    report.evaluated += seen[k];
    report.correct += hit[k];
  }
  report.average = report.evaluated ? static_cast<double>(report.correct) / report.evaluated : 0.0;

  for (const auto& [name, members] : groups) {
    std::size_t g_seen = 0, g_hit = 0;
    for (int k : members) {
      if (k < 0 || static_cast<std::size_t>(k) >= k_count) {
        throw InvalidArgument("pck: group '" + name + "' references keypoint " + std::to_string(k));
      }
      g_seen += seen[k];
      g_hit += hit[k];
    }
    report.per_group[name] = g_seen ? static_cast<double>(g_hit) / g_seen : 0.0;
  }
  return report;
}

PckReport pck(const KeypointSet& pred, const KeypointSet& gt, double image_size, double fraction,
              const KeypointGroups& groups) {
  return pck(std::span<const KeypointSet>(&pred, 1), std::span<const KeypointSet>(&gt, 1), image_size, fraction,
             groups);
}

}  // namespace maps
