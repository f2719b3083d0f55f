#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "maps/geometry.hpp"
#include "maps/image.hpp"
#include "maps/trainer.hpp"

namespace maps {

/// False when the library was built without image output support; the
/// writers below then throw ConfigError.
bool plots_available();

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

void write_line_plot(const std::filesystem::path& png, const std::string& title, std::span<const Series> series);

/// Per-term loss curves; spikes are smoothed with a trailing window.
void write_loss_curve(const std::filesystem::path& png, std::span<const StepLosses> losses, const std::string& stage);
void write_pck_curve(const std::filesystem::path& png, std::span<const EvalRecord> history);

/// Image upscaled by `scale`; ground truth as green rings, predictions as red
/// crosses joined to their ground truth.
void write_keypoint_overlay(const std::filesystem::path& png, const Image& image, const KeypointSet& truth,
                            const KeypointSet& predicted, int scale = 6);

}  // namespace maps
