#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maps/geometry.hpp"
#include "maps/image.hpp"

namespace maps {

/// Encoder-decoder heatmap regressor: stride-2 3x3 convolutions, then
/// stride-2 4x4 transposed convolutions, then a 1x1 linear head.
struct ArchSpec {
  int image_size = 64;
  int in_channels = 1;
  std::vector<int> down_channels{16, 32, 48, 64};
  std::vector<int> up_channels{32, 32};
  int num_keypoints = 6;

  void validate() const;
  int heatmap_size() const;
  int stride() const { return image_size / heatmap_size(); }
  HeatmapResolution heatmap_resolution() const { return {heatmap_size(), heatmap_size()}; }

  bool operator==(const ArchSpec&) const = default;
};

struct ParamInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t count = 0;
};

/// Named parameter arrays stored in one contiguous buffer.
class ParamSet {
 public:
  ParamSet() = default;

  void add(std::string name, std::vector<int> shape);

  std::size_t size() const noexcept { return data_.size(); }
  const std::vector<ParamInfo>& layout() const noexcept { return layout_; }
  const ParamInfo& info(std::size_t i) const { return layout_[i]; }
  std::size_t find(const std::string& name) const;

  std::span<double> tensor(std::size_t i) { return {data_.data() + layout_[i].offset, layout_[i].count}; }
  std::span<const double> tensor(std::size_t i) const { return {data_.data() + layout_[i].offset, layout_[i].count}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_layout(const ParamSet& o) const;
  ParamSet zeros_like() const;
  /// this += a * other
  void axpy(double a, const ParamSet& other);

 private:
  std::vector<ParamInfo> layout_;
  std::vector<double> data_;
};

struct DetectorParams {
  ArchSpec arch;
  ParamSet params;
};

/// Allocates the parameter layout for `arch` and fills it with seeded He-normal
/// weights (zero biases, small head).
DetectorParams init_detector(const ArchSpec& arch, std::uint64_t seed);

/// Intermediate activations kept for the backward pass.
struct ForwardTrace {
  int batch = 0;
  std::vector<std::vector<double>> inputs;  // input to each layer, [C][B][H][W]
  std::vector<std::vector<double>> cols;    // im2col buffers of convolution layers
  std::vector<std::vector<double>> outputs; // post-activation output of each layer
};

/// Deterministic forward pass. Pass a trace to enable `backward`.
std::vector<HeatmapStack> forward(const DetectorParams& model, std::span<const Image> images,
                                  ForwardTrace* trace = nullptr);

/// Gradient of a scalar loss w.r.t. parameters, given dLoss/dOutput per sample.
ParamSet backward(const DetectorParams& model, const ForwardTrace& trace, std::span<const HeatmapStack> grad_out);

/// Student/teacher parameter sets of identical architecture. The teacher only
/// moves through `ema_update`.
struct TeacherStudentPair {
  DetectorParams student;
  DetectorParams teacher;
  double eta = 0.999;
};

TeacherStudentPair init_pair(const DetectorParams& source, double eta);
/// teacher <- eta * teacher + (1 - eta) * student, elementwise.
void ema_update(TeacherStudentPair& pair);

/// Adam with bias correction.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  explicit AdamOptimizer(const ParamSet& like, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(ParamSet& params, const ParamSet& grads, double learning_rate);

  long steps() const noexcept { return t_; }
  double beta1() const noexcept { return beta1_; }
  double beta2() const noexcept { return beta2_; }
  double eps() const noexcept { return eps_; }
  const std::vector<double>& first_moment() const noexcept { return m_; }
  const std::vector<double>& second_moment() const noexcept { return v_; }

  void restore(long t, std::vector<double> m, std::vector<double> v);

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace maps
