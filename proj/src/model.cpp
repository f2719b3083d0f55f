#include "maps/model.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <random>

#include "maps/error.hpp"

namespace maps {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

constexpr int kDownKernel = 3;
constexpr int kUpKernel = 4;

struct ConvGeom {
  int channels, batch, height, width, kernel, stride, pad, out_h, out_w;
  int rows() const { return channels * kernel * kernel; }
  int cols() const { return batch * out_h * out_w; }
};

// Activations are laid out [C][B][H][W] so a layer is one GEMM over the batch.
void im2col(const double* x, const ConvGeom& g, double* cols) {
  const std::size_t ncols = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        double* row = cols + ((static_cast<std::size_t>(c) * g.kernel + ky) * g.kernel + kx) * ncols;
        for (int b = 0; b < g.batch; ++b) {
          const double* plane = x + (static_cast<std::size_t>(c) * g.batch + b) * g.height * g.width;
          for (int oy = 0; oy < g.out_h; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            double* dst = row + (static_cast<std::size_t>(b) * g.out_h + oy) * g.out_w;
            if (iy < 0 || iy >= g.height) {
              std::fill(dst, dst + g.out_w, 0.0);
              continue;
            }
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              dst[ox] = (ix >= 0 && ix < g.width) ? plane[iy * g.width + ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col; accumulates into x.
void col2im(const double* cols, const ConvGeom& g, double* x) {
  const std::size_t ncols = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const double* row = cols + ((static_cast<std::size_t>(c) * g.kernel + ky) * g.kernel + kx) * ncols;
        for (int b = 0; b < g.batch; ++b) {
          double* plane = x + (static_cast<std::size_t>(c) * g.batch + b) * g.height * g.width;
          for (int oy = 0; oy < g.out_h; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.height) continue;
            const double* src = row + (static_cast<std::size_t>(b) * g.out_h + oy) * g.out_w;
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.width) plane[iy * g.width + ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

enum class LayerKind { kDown, kUp, kHead };

struct Layer {
  LayerKind kind;
  int in_c, out_c, in_size, out_size;
  std::size_t weight, bias;  // indices into ParamSet
};

std::vector<Layer> layers_of(const ArchSpec& arch) {
  std::vector<Layer> layers;
  int c = arch.in_channels;
  int s = arch.image_size;
  std::size_t idx = 0;
  for (int out : arch.down_channels) {
    layers.push_back({LayerKind::kDown, c, out, s, s / 2, idx, idx + 1});
    idx += 2;
    c = out;
    s /= 2;
  }
  for (int out : arch.up_channels) {
    layers.push_back({LayerKind::kUp, c, out, s, s * 2, idx, idx + 1});
    idx += 2;
    c = out;
    s *= 2;
  }
  layers.push_back({LayerKind::kHead, c, arch.num_keypoints, s, s, idx, idx + 1});
  return layers;
}

ConvGeom down_geom(const Layer& l, int batch) {
  return {l.in_c, batch, l.in_size, l.in_size, kDownKernel, 2, 1, l.out_size, l.out_size};
}

// A transposed convolution is the adjoint of a stride-2 convolution running
// on its output grid.
ConvGeom up_geom(const Layer& l, int batch) {
  return {l.out_c, batch, l.out_size, l.out_size, kUpKernel, 2, 1, l.in_size, l.in_size};
}

void add_bias_relu(std::vector<double>& z, std::span<const double> bias, std::size_t plane, bool relu) {
  for (std::size_t c = 0; c < bias.size(); ++c) {
    double* p = z.data() + c * plane;
    const double b = bias[c];
    if (relu) {
      for (std::size_t i = 0; i < plane; ++i) p[i] = std::max(0.0, p[i] + b);
    } else {
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
  }
}

void relu_backward(std::vector<double>& grad, const std::vector<double>& out) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(out[i] > 0.0)) grad[i] = 0.0;
  }
}

void bias_grad(const std::vector<double>& dz, std::size_t plane, std::span<double> db) {
  for (std::size_t c = 0; c < db.size(); ++c) {
    const double* p = dz.data() + c * plane;
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    db[c] += acc;
  }
}

}  // namespace

void ArchSpec::validate() const {
  if (image_size <= 0 || in_channels <= 0 || num_keypoints <= 0) {
    throw InvalidArgument("architecture: image size, channels and keypoints must be positive");
  }
  if (down_channels.empty()) throw InvalidArgument("architecture: need at least one downsampling block");
  if (up_channels.size() > down_channels.size()) {
    throw InvalidArgument("architecture: more upsampling than downsampling blocks");
  }
  if (image_size % (1 << down_channels.size()) != 0) {
    throw InvalidArgument("architecture: image size must be divisible by 2^depth");
  }
  for (int c : down_channels)
    if (c <= 0) throw InvalidArgument("architecture: channel widths must be positive");
  for (int c : up_channels)
    if (c <= 0) throw InvalidArgument("architecture: channel widths must be positive");
}

int ArchSpec::heatmap_size() const {
  return (image_size >> down_channels.size()) << up_channels.size();
}

void ParamSet::add(std::string name, std::vector<int> shape) {
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  layout_.push_back({std::move(name), std::move(shape), data_.size(), count});
  data_.resize(data_.size() + count, 0.0);
}

std::size_t ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < layout_.size(); ++i)
    if (layout_[i].name == name) return i;
  throw InvalidArgument("no parameter named '" + name + "'");
}

bool ParamSet::same_layout(const ParamSet& o) const {
  if (layout_.size() != o.layout_.size()) return false;
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (layout_[i].name != o.layout_[i].name || layout_[i].shape != o.layout_[i].shape) return false;
  }
  return true;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  out.layout_ = layout_;
  out.data_.assign(data_.size(), 0.0);
  return out;
}

void ParamSet::axpy(double a, const ParamSet& other) {
  if (other.data_.size() != data_.size()) throw InvalidArgument("ParamSet::axpy: size mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * other.data_[i];
}

DetectorParams init_detector(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  DetectorParams model{arch, {}};
  const auto layers = layers_of(arch);
  int down = 0, up = 0;
  for (const Layer& l : layers) {
    switch (l.kind) {
      case LayerKind::kDown: {
        const std::string p = "down" + std::to_string(down++);
        model.params.add(p + ".weight", {l.out_c, l.in_c, kDownKernel, kDownKernel});
        model.params.add(p + ".bias", {l.out_c});
        break;
      }
      case LayerKind::kUp: {
        const std::string p = "up" + std::to_string(up++);
        model.params.add(p + ".weight", {l.in_c, l.out_c, kUpKernel, kUpKernel});
        model.params.add(p + ".bias", {l.out_c});
        break;
      }
      case LayerKind::kHead:
        model.params.add("head.weight", {l.out_c, l.in_c, 1, 1});
        model.params.add("head.bias", {l.out_c});
        break;
    }
  }

  std::mt19937_64 rng(seed);
  for (const Layer& l : layers) {
    double stddev = 0.0;
    switch (l.kind) {
      case LayerKind::kDown: stddev = std::sqrt(2.0 / (l.in_c * kDownKernel * kDownKernel)); break;
      case LayerKind::kUp: stddev = std::sqrt(2.0 / (l.in_c * kUpKernel * kUpKernel / 4.0)); break;
      case LayerKind::kHead: stddev = 0.01; break;
    }
    std::normal_distribution<double> gauss(0.0, stddev);
    for (double& w : model.params.tensor(l.weight)) w = gauss(rng);
  }
  return model;
}

std::vector<HeatmapStack> forward(const DetectorParams& model, std::span<const Image> images, ForwardTrace* trace) {
  const ArchSpec& arch = model.arch;
  const int batch = static_cast<int>(images.size());
  if (batch == 0) return {};
  const int s0 = arch.image_size;
  for (const Image& im : images) {
    if (im.channels != arch.in_channels || im.height != s0 || im.width != s0) {
      throw InvalidArgument("forward: image shape does not match the architecture (" +
                            std::to_string(im.channels) + "x" + std::to_string(im.height) + "x" +
                            std::to_string(im.width) + ")");
    }
  }

  const auto layers = layers_of(arch);
  // Pack to [C][B][H][W].
  const std::size_t in_plane = static_cast<std::size_t>(s0) * s0;
  std::vector<double> act(static_cast<std::size_t>(arch.in_channels) * batch * in_plane);
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < arch.in_channels; ++c) {
      const auto src = images[b].plane(c);
      std::copy(src.begin(), src.end(), act.begin() + (static_cast<std::size_t>(c) * batch + b) * in_plane);
    }
  }

  if (trace) {
    trace->batch = batch;
    trace->inputs.assign(layers.size(), {});
    trace->cols.assign(layers.size(), {});
    trace->outputs.assign(layers.size(), {});
  }

  for (std::size_t li = 0; li < layers.size(); ++li) {
    const Layer& l = layers[li];
    const auto w = model.params.tensor(l.weight);
    const auto bias = model.params.tensor(l.bias);
    const std::size_t out_plane = static_cast<std::size_t>(batch) * l.out_size * l.out_size;
    const std::size_t in_cols = static_cast<std::size_t>(batch) * l.in_size * l.in_size;
    std::vector<double> out(static_cast<std::size_t>(l.out_c) * out_plane, 0.0);

    switch (l.kind) {
      case LayerKind::kDown: {
        const ConvGeom g = down_geom(l, batch);
        std::vector<double> cols(static_cast<std::size_t>(g.rows()) * g.cols());
        im2col(act.data(), g, cols.data());
        MatMap(out.data(), l.out_c, g.cols()).noalias() =
            ConstMatMap(w.data(), l.out_c, g.rows()) * ConstMatMap(cols.data(), g.rows(), g.cols());
        add_bias_relu(out, bias, out_plane, true);
        if (trace) trace->cols[li] = std::move(cols);
        break;
      }
      case LayerKind::kUp: {
        const ConvGeom g = up_geom(l, batch);
        std::vector<double> cols(static_cast<std::size_t>(g.rows()) * g.cols());
        MatMap(cols.data(), g.rows(), g.cols()).noalias() =
            ConstMatMap(w.data(), l.in_c, g.rows()).transpose() * ConstMatMap(act.data(), l.in_c, in_cols);
        col2im(cols.data(), g, out.data());
        add_bias_relu(out, bias, out_plane, true);
        break;
      }
      case LayerKind::kHead: {
        MatMap(out.data(), l.out_c, out_plane).noalias() =
            ConstMatMap(w.data(), l.out_c, l.in_c) * ConstMatMap(act.data(), l.in_c, in_cols);
        add_bias_relu(out, bias, out_plane, false);
        break;
      }
    }
    if (trace) {
      trace->inputs[li] = std::move(act);
      trace->outputs[li] = out;
    }
    act = std::move(out);
  }

  const int hm = arch.heatmap_size();
  const std::size_t plane = static_cast<std::size_t>(hm) * hm;
  std::vector<HeatmapStack> result;
  result.reserve(batch);
  for (int b = 0; b < batch; ++b) {
    HeatmapStack stack(arch.num_keypoints, {hm, hm}, arch.stride());
    for (int k = 0; k < arch.num_keypoints; ++k) {
      const double* src = act.data() + (static_cast<std::size_t>(k) * batch + b) * plane;
      std::copy(src, src + plane, stack.channel(k).begin());
    }
    result.push_back(std::move(stack));
  }
  return result;
}

ParamSet backward(const DetectorParams& model, const ForwardTrace& trace, std::span<const HeatmapStack> grad_out) {
  const ArchSpec& arch = model.arch;
  const int batch = trace.batch;
  if (static_cast<int>(grad_out.size()) != batch) throw InvalidArgument("backward: gradient batch size mismatch");
  const auto layers = layers_of(arch);
  if (trace.inputs.size() != layers.size()) throw InvalidArgument("backward: trace does not match model");

  ParamSet grads = model.params.zeros_like();
  const int hm = arch.heatmap_size();
  const std::size_t plane = static_cast<std::size_t>(hm) * hm;
  std::vector<double> g(static_cast<std::size_t>(arch.num_keypoints) * batch * plane);
  for (int b = 0; b < batch; ++b) {
    if (grad_out[b].keypoints() != arch.num_keypoints || grad_out[b].height() != hm || grad_out[b].width() != hm) {
      throw InvalidArgument("backward: gradient shape mismatch");
    }
    for (int k = 0; k < arch.num_keypoints; ++k) {
      const auto src = grad_out[b].channel(k);
      std::copy(src.begin(), src.end(), g.begin() + (static_cast<std::size_t>(k) * batch + b) * plane);
    }
  }

  for (std::size_t li = layers.size(); li-- > 0;) {
    const Layer& l = layers[li];
    const auto w = model.params.tensor(l.weight);
    auto dw = grads.tensor(l.weight);
    auto db = grads.tensor(l.bias);
    const std::vector<double>& x = trace.inputs[li];
    const std::size_t out_plane = static_cast<std::size_t>(batch) * l.out_size * l.out_size;
    const std::size_t in_cols = static_cast<std::size_t>(batch) * l.in_size * l.in_size;
    const bool need_input_grad = li > 0;
    std::vector<double> dx;

    if (l.kind != LayerKind::kHead) relu_backward(g, trace.outputs[li]);
    bias_grad(g, out_plane, db);

    switch (l.kind) {
      case LayerKind::kHead: {
        MatMap(dw.data(), l.out_c, l.in_c).noalias() =
            ConstMatMap(g.data(), l.out_c, out_plane) * ConstMatMap(x.data(), l.in_c, in_cols).transpose();
        if (need_input_grad) {
          dx.resize(static_cast<std::size_t>(l.in_c) * in_cols);
          MatMap(dx.data(), l.in_c, in_cols).noalias() =
              ConstMatMap(w.data(), l.out_c, l.in_c).transpose() * ConstMatMap(g.data(), l.out_c, out_plane);
        }
        break;
      }
      case LayerKind::kUp: {
        const ConvGeom geom = up_geom(l, batch);
        std::vector<double> dcols(static_cast<std::size_t>(geom.rows()) * geom.cols());
        im2col(g.data(), geom, dcols.data());
        MatMap(dw.data(), l.in_c, geom.rows()).noalias() =
            ConstMatMap(x.data(), l.in_c, in_cols) * ConstMatMap(dcols.data(), geom.rows(), geom.cols()).transpose();
        if (need_input_grad) {
          dx.resize(static_cast<std::size_t>(l.in_c) * in_cols);
          MatMap(dx.data(), l.in_c, in_cols).noalias() =
              ConstMatMap(w.data(), l.in_c, geom.rows()) * ConstMatMap(dcols.data(), geom.rows(), geom.cols());
        }
        break;
      }
      case LayerKind::kDown: {
        const ConvGeom geom = down_geom(l, batch);
        const std::vector<double>& cols = trace.cols[li];
        MatMap(dw.data(), l.out_c, geom.rows()).noalias() =
            ConstMatMap(g.data(), l.out_c, geom.cols()) * ConstMatMap(cols.data(), geom.rows(), geom.cols()).transpose();
        if (need_input_grad) {
          std::vector<double> dcols(static_cast<std::size_t>(geom.rows()) * geom.cols());
          MatMap(dcols.data(), geom.rows(), geom.cols()).noalias() =
              ConstMatMap(w.data(), l.out_c, geom.rows()).transpose() * ConstMatMap(g.data(), l.out_c, geom.cols());
          dx.assign(static_cast<std::size_t>(l.in_c) * in_cols, 0.0);
          col2im(dcols.data(), geom, dx.data());
        }
        break;
      }
    }
    g = std::move(dx);
  }
  return grads;
}

TeacherStudentPair init_pair(const DetectorParams& source, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidArgument("init_pair: eta must lie in [0, 1]");
  return TeacherStudentPair{source, source, eta};
}

void ema_update(TeacherStudentPair& pair) {
  auto& t = pair.teacher.params.data();
  const auto& s = pair.student.params.data();
  if (t.size() != s.size()) throw InvalidArgument("ema_update: teacher and student differ in size");
  const double eta = pair.eta;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = eta * t[i] + (1.0 - eta) * s[i];
}

AdamOptimizer::AdamOptimizer(const ParamSet& like, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(like.size(), 0.0), v_(like.size(), 0.0) {}

void AdamOptimizer::step(ParamSet& params, const ParamSet& grads, double learning_rate) {
  auto& p = params.data();
  const auto& g = grads.data();
  if (p.size() != m_.size() || g.size() != m_.size()) throw InvalidArgument("Adam: parameter size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g[i] * g[i];
    p[i] -= learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void AdamOptimizer::restore(long t, std::vector<double> m, std::vector<double> v) {
  if (m.size() != v.size()) throw InvalidArgument("Adam: moment sizes differ");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace maps
