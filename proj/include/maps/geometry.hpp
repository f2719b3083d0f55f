#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace maps {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  bool visible = false;
};

/// K keypoints of one image, in image pixels (pixel centres at integers).
struct KeypointSet {
  std::vector<Keypoint> points;

  KeypointSet() = default;
  explicit KeypointSet(std::size_t k) : points(k) {}
  KeypointSet(std::initializer_list<Keypoint> init) : points(init) {}

  std::size_t size() const noexcept { return points.size(); }
  Keypoint& operator[](std::size_t k) { return points[k]; }
  const Keypoint& operator[](std::size_t k) const { return points[k]; }
};

struct HeatmapResolution {
  int height = 0;
  int width = 0;
};

/// K x H' x W' activation maps. `stride` is image pixels per heatmap pixel.
class HeatmapStack {
 public:
  HeatmapStack() = default;
  HeatmapStack(int keypoints, HeatmapResolution res, double stride = 1.0);

  int keypoints() const noexcept { return keypoints_; }
  int height() const noexcept { return res_.height; }
  int width() const noexcept { return res_.width; }
  HeatmapResolution resolution() const noexcept { return res_; }
  double stride() const noexcept { return stride_; }
  std::size_t channel_size() const noexcept { return static_cast<std::size_t>(res_.height) * res_.width; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& at(int k, int y, int x) { return values_[(k * channel_size()) + static_cast<std::size_t>(y) * res_.width + x]; }
  double at(int k, int y, int x) const {
    return values_[(k * channel_size()) + static_cast<std::size_t>(y) * res_.width + x];
  }

  std::span<double> channel(int k) { return {values_.data() + k * channel_size(), channel_size()}; }
  std::span<const double> channel(int k) const { return {values_.data() + k * channel_size(), channel_size()}; }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool same_shape(const HeatmapStack& o) const noexcept {
    return keypoints_ == o.keypoints_ && res_.height == o.res_.height && res_.width == o.res_.width;
  }

 private:
  int keypoints_ = 0;
  HeatmapResolution res_{};
  double stride_ = 1.0;
  std::vector<double> values_;
};

/// How keypoints are rendered into training targets.
struct HeatmapSpec {
  HeatmapResolution resolution{};
  double sigma = 1.0;   // heatmap pixels
  double stride = 1.0;  // image pixels per heatmap pixel
};

/// Image pixel coordinate -> heatmap pixel coordinate. Pixel centres are
/// aligned, so the image centre maps onto the heatmap centre.
inline double image_to_heatmap(double v, double stride) { return (v + 0.5) / stride - 0.5; }
inline double heatmap_to_image(double v, double stride) { return (v + 0.5) * stride - 0.5; }

/// Peak-1 isotropic Gaussian per visible keypoint; invisible keypoints give a
/// zero channel. Throws InvalidArgument for non-positive sigma or resolution.
HeatmapStack render_heatmaps(const KeypointSet& keypoints, HeatmapResolution res, double sigma,
                             double stride = 1.0);

inline HeatmapStack render_heatmaps(const KeypointSet& keypoints, const HeatmapSpec& spec) {
  return render_heatmaps(keypoints, spec.resolution, spec.sigma, spec.stride);
}

struct DecodedKeypoints {
  KeypointSet keypoints;
  std::vector<double> confidence;
};

/// Argmax per channel (first row-major maximum wins), refined by a quarter
/// pixel toward the larger axis neighbour, mapped back to image pixels.
/// Channels whose maximum is <= 0 decode to (0, 0), invisible.
DecodedKeypoints decode_heatmaps(const HeatmapStack& stack);

using KeypointGroups = std::map<std::string, std::vector<int>>;

struct PckReport {
  std::map<std::string, double> per_group;
  double average = 0.0;
  double threshold_fraction = 0.05;
  std::size_t evaluated = 0;
  std::size_t correct = 0;
};

/// PCK over a set of images. A keypoint is correct iff its distance is
/// strictly below fraction * image_size. Only ground-truth-visible keypoints
/// are evaluated; `average` is over keypoints, not groups.
PckReport pck(std::span<const KeypointSet> pred, std::span<const KeypointSet> gt, double image_size,
              double fraction, const KeypointGroups& groups);

/// Single-image convenience overload.
PckReport pck(const KeypointSet& pred, const KeypointSet& gt, double image_size, double fraction,
              const KeypointGroups& groups);

/// Normaliser used for PCK: max(height, width).
inline double pck_normalizer(int height, int width) { return height > width ? height : width; }

}  // namespace maps
