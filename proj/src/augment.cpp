#include "maps/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "maps/error.hpp"

namespace maps {
namespace {

// cos/sin that are exact at multiples of 90 degrees.
void rotation_terms(double deg, double& c, double& s) {
  const double quarter = deg / 90.0;
  if (quarter == std::round(quarter)) {
    const long q = ((static_cast<long>(std::llround(quarter)) % 4) + 4) % 4;
    static constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
    static constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
    c = kCos[q];
    s = kSin[q];
    return;
  }
  const double rad = deg * std::numbers::pi / 180.0;
  c = std::cos(rad);
  s = std::sin(rad);
}

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

void blur_plane(std::span<double> plane, int h, int w, const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(plane.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int xx = std::clamp(x + i, 0, w - 1);
        acc += kernel[i + radius] * plane[y * w + xx];
      }
      tmp[y * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int yy = std::clamp(y + i, 0, h - 1);
        acc += kernel[i + radius] * tmp[yy * w + x];
      }
      plane[y * w + x] = acc;
    }
  }
}

}  // namespace

void AugmentationPolicy::validate() const {
  if (rotation_range < 0 || translation_range < 0 || noise_range < 0 || blur_range < 0) {
    throw InvalidArgument("augmentation ranges must be non-negative");
  }
}

AugmentationRecord sample_augmentation(const AugmentationPolicy& policy, std::mt19937_64& rng) {
  policy.validate();
  // Every component consumes its draw even when disabled, so toggling one
  // component never shifts the others.
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> half(0.0, 1.0);
  const double rot = unit(rng) * policy.rotation_range;
  const double tx = unit(rng) * policy.translation_range;
  const double ty = unit(rng) * policy.translation_range;
  const double noise = half(rng) * policy.noise_range;
  const double blur = half(rng) * policy.blur_range;
  AugmentationRecord rec;
  rec.rotation_deg = policy.rotation ? rot : 0.0;
  rec.translate_x = policy.translation ? tx : 0.0;
  rec.translate_y = policy.translation ? ty : 0.0;
  rec.noise_sigma = policy.noise ? noise : 0.0;
  rec.blur_sigma = policy.blur ? blur : 0.0;
  rec.seed = rng();
  return rec;
}

GeometricWarp GeometricWarp::forward(const AugmentationRecord& record, int height, int width) {
  return GeometricWarp(record, height, width, false);
}

GeometricWarp GeometricWarp::inverse(const AugmentationRecord& record, int height, int width) {
  return GeometricWarp(record, height, width, true);
}

GeometricWarp::GeometricWarp(const AugmentationRecord& record, int height, int width, bool invert)
    : height_(height), width_(width), identity_(record.geometric_identity()) {
  if (height <= 0 || width <= 0) throw InvalidArgument("warp: frame must be non-empty");
  if (identity_) return;

  double c, s;
  rotation_terms(record.rotation_deg, c, s);
  const double cx = 0.5 * (width - 1);
  const double cy = 0.5 * (height - 1);
  const double tx = record.translate_x * width;
  const double ty = record.translate_y * height;

  taps_.resize(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double sx, sy;
      if (!invert) {
        // Output pixel p' pulls from T^-1(p') = R^T (p' - c - t) + c.
        const double dx = x - cx - tx;
        const double dy = y - cy - ty;
        sx = c * dx + s * dy + cx;
        sy = -s * dx + c * dy + cy;
      } else {
        // Inverse warp pulls from T(q) = R (q - c) + c + t.
        const double dx = x - cx;
        const double dy = y - cy;
        sx = c * dx - s * dy + cx + tx;
        sy = s * dx + c * dy + cy + ty;
      }
      sx = snap(sx);
      sy = snap(sy);
      const double fx0 = std::floor(sx);
      const double fy0 = std::floor(sy);
      const double ax = sx - fx0;
      const double ay = sy - fy0;
      const int x0 = static_cast<int>(fx0);
      const int y0 = static_cast<int>(fy0);
      Tap& tap = taps_[static_cast<std::size_t>(y) * width + x];
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      const double ws[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
      for (int i = 0; i < 4; ++i) {
        const bool inside = xs[i] >= 0 && xs[i] < width && ys[i] >= 0 && ys[i] < height;
        if (inside && ws[i] != 0.0) {
          tap.index[i] = ys[i] * width + xs[i];
          tap.weight[i] = ws[i];
        } else {
          tap.index[i] = -1;
          tap.weight[i] = 0.0;
        }
      }
    }
  }
}

void GeometricWarp::apply(std::span<const double> in, std::span<double> out) const {
  if (identity_) {
    std::copy(in.begin(), in.end(), out.begin());
    return;
  }
  for (std::size_t p = 0; p < taps_.size(); ++p) {
    const Tap& t = taps_[p];
    double acc = 0.0;
    for (int i = 0; i < 4; ++i) {
      if (t.index[i] >= 0) acc += t.weight[i] * in[t.index[i]];
    }
    out[p] = acc;
  }
}

void GeometricWarp::accumulate_adjoint(std::span<const double> out_grad, std::span<double> in_grad) const {
  if (identity_) {
    for (std::size_t p = 0; p < out_grad.size(); ++p) in_grad[p] += out_grad[p];
    return;
  }
  for (std::size_t p = 0; p < taps_.size(); ++p) {
    const Tap& t = taps_[p];
    for (int i = 0; i < 4; ++i) {
      if (t.index[i] >= 0) in_grad[t.index[i]] += t.weight[i] * out_grad[p];
    }
  }
}

Keypoint transform_point(const AugmentationRecord& record, const Keypoint& p, int height, int width) {
  double c, s;
  rotation_terms(record.rotation_deg, c, s);
  const double cx = 0.5 * (width - 1);
  const double cy = 0.5 * (height - 1);
  const double dx = p.x - cx;
  const double dy = p.y - cy;
  return Keypoint{c * dx - s * dy + cx + record.translate_x * width, s * dx + c * dy + cy + record.translate_y * height,
                  p.visible};
}

Image apply_to_image(const AugmentationRecord& record, const Image& image) {
  if (image.empty()) throw InvalidArgument("apply_to_image: empty image");
  Image out = image;
  if (!record.geometric_identity()) {
    const auto warp = GeometricWarp::forward(record, image.height, image.width);
    for (int c = 0; c < image.channels; ++c) warp.apply(image.plane(c), out.plane(c));
  }
  if (record.noise_sigma > 0.0) {
    std::mt19937_64 rng(record.seed);
    std::normal_distribution<double> gauss(0.0, record.noise_sigma);
    for (double& v : out.pixels) v = std::clamp(v + gauss(rng), 0.0, 1.0);
  }
  if (record.blur_sigma > 0.0) {
    const auto kernel = gaussian_kernel(record.blur_sigma);
    for (int c = 0; c < out.channels; ++c) blur_plane(out.plane(c), out.height, out.width, kernel);
  }
  return out;
}

HeatmapStack apply_to_heatmap(const AugmentationRecord& record, const HeatmapStack& stack) {
  if (record.geometric_identity()) return stack;
  HeatmapStack out(stack.keypoints(), stack.resolution(), stack.stride());
  const auto warp = GeometricWarp::forward(record, stack.height(), stack.width());
  for (int k = 0; k < stack.keypoints(); ++k) warp.apply(stack.channel(k), out.channel(k));
  return out;
}

HeatmapStack invert_on_heatmap(const AugmentationRecord& record, const HeatmapStack& stack) {
  if (record.geometric_identity()) return stack;
  HeatmapStack out(stack.keypoints(), stack.resolution(), stack.stride());
  const auto warp = GeometricWarp::inverse(record, stack.height(), stack.width());
  for (int k = 0; k < stack.keypoints(); ++k) warp.apply(stack.channel(k), out.channel(k));
  return out;
}

double sample_mix_ratio(double alpha, std::mt19937_64& rng) {
  if (!(alpha > 0.0)) throw InvalidArgument("sample_mix_ratio: alpha must be positive");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double a = gamma(rng);
  const double b = gamma(rng);
  if (a + b == 0.0) return 0.5;
  return a / (a + b);
}

Image mix_images(const Image& a, const Image& b, double rho) {
  if (!a.same_shape(b)) throw InvalidArgument("mix_images: shape mismatch");
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidArgument("mix_images: rho outside [0, 1]");
  Image out = a;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = rho * a.pixels[i] + (1.0 - rho) * b.pixels[i];
  return out;
}

}  // namespace maps
