#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace maps {

/// Planar (channel-major) image with intensities nominally in [0, 1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), pixels(static_cast<std::size_t>(c) * h * w, fill) {}

  bool empty() const noexcept { return pixels.empty(); }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height) * width; }

  double& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }

  std::span<double> plane(int c) { return {pixels.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const { return {pixels.data() + c * plane_size(), plane_size()}; }

  bool same_shape(const Image& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

}  // namespace maps
