#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "maps/model.hpp"

namespace maps {

/// Self-describing binary container: magic, JSON header (format version,
/// architecture, parameter layout, eta, optimizer state), then raw
/// little-endian float64 arrays.
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  std::string stage;
  ArchSpec arch;
  ParamSet student;
  std::optional<ParamSet> teacher;
  double eta = 0.999;
  long step = 0;
  AdamOptimizer optimizer;

  /// The model used for evaluation: the teacher when present.
  DetectorParams evaluation_model() const { return {arch, teacher ? *teacher : student}; }
  DetectorParams student_model() const { return {arch, student}; }
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws MissingArtifact if absent, CorruptDataset if unreadable, and
/// InvalidArgument if `expected` is given and the stored architecture differs.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ArchSpec* expected = nullptr);

std::string arch_to_json(const ArchSpec& arch);
ArchSpec arch_from_json(const std::string& text);

}  // namespace maps
