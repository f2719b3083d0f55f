#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "maps/geometry.hpp"
#include "maps/image.hpp"

namespace maps {

/// One sampled augmentation. Geometry is a rotation about the frame centre
/// followed by a translation; texture (noise, blur) applies to images only.
struct AugmentationRecord {
  double rotation_deg = 0.0;
  double translate_x = 0.0;  // fraction of frame width
  double translate_y = 0.0;  // fraction of frame height
  double noise_sigma = 0.0;  // intensity units
  double blur_sigma = 0.0;   // image pixels
  std::uint64_t seed = 0;    // drives the noise field

  bool geometric_identity() const noexcept {
    return rotation_deg == 0.0 && translate_x == 0.0 && translate_y == 0.0;
  }
};

struct AugmentationPolicy {
  double rotation_range = 0.0;     // degrees, symmetric
  double translation_range = 0.0;  // fraction, symmetric per axis
  double noise_range = 0.0;        // max noise sigma
  double blur_range = 0.0;         // max blur sigma
  bool rotation = true;
  bool translation = true;
  bool noise = true;
  bool blur = true;

  void validate() const;
};

AugmentationRecord sample_augmentation(const AugmentationPolicy& policy, std::mt19937_64& rng);

/// Sparse bilinear resampling operator for one frame size (zero padding).
/// Built either for the forward transform or for its exact parametric inverse.
class GeometricWarp {
 public:
  static GeometricWarp forward(const AugmentationRecord& record, int height, int width);
  static GeometricWarp inverse(const AugmentationRecord& record, int height, int width);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  bool identity() const noexcept { return identity_; }

  /// out = W * in, one plane.
  void apply(std::span<const double> in, std::span<double> out) const;
  /// in_grad += W^T * out_grad, one plane.
  void accumulate_adjoint(std::span<const double> out_grad, std::span<double> in_grad) const;

 private:
  struct Tap {
    int index[4];
    double weight[4];
  };
  GeometricWarp(const AugmentationRecord& record, int height, int width, bool invert);

  int height_ = 0;
  int width_ = 0;
  bool identity_ = true;
  std::vector<Tap> taps_;
};

/// Maps an image-pixel point through the forward geometric transform of a
/// frame of the given size.
Keypoint transform_point(const AugmentationRecord& record, const Keypoint& p, int height, int width);

/// rotate -> translate (bilinear, zero padding) -> Gaussian noise -> Gaussian blur.
Image apply_to_image(const AugmentationRecord& record, const Image& image);
/// Geometric part only, at the stack's own resolution.
HeatmapStack apply_to_heatmap(const AugmentationRecord& record, const HeatmapStack& stack);
/// Inverse geometric part: -translation, then -rotation.
HeatmapStack invert_on_heatmap(const AugmentationRecord& record, const HeatmapStack& stack);

/// Beta(alpha, alpha) draw.
double sample_mix_ratio(double alpha, std::mt19937_64& rng);
/// rho * a + (1 - rho) * b, elementwise.
Image mix_images(const Image& a, const Image& b, double rho);

}  // namespace maps
