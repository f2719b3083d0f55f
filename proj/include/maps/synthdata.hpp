#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maps/geometry.hpp"
#include "maps/image.hpp"

namespace maps {

enum class BackgroundKind { kFlat, kGradient, kStripes, kBlobs };

/// Stick-figure domain: head disc, torso, two two-segment arms and legs.
/// Keypoints: head, left hand, right hand, left foot, right foot, pelvis.
struct DomainSpec {
  std::string name = "domain";
  int image_size = 64;
  int num_keypoints = 6;

  // Pose distribution (degrees; image axes, 0 = +x, 90 = +y/down).
  double torso_length = 13.0;
  double arm_segment = 8.0;
  double leg_segment = 9.5;
  double head_radius = 3.5;
  double scale_min = 0.85;
  double scale_max = 1.1;
  double torso_tilt = 20.0;
  double limb_bend = 50.0;
  double position_jitter = 6.0;  // pelvis offset from centre, pixels
  double geometry_scale = 1.0;   // geometry-gap knob; 1 leaves poses untouched

  // Appearance.
  BackgroundKind background = BackgroundKind::kFlat;
  double background_level = 0.15;
  double texture_amplitude = 0.0;
  double texture_frequency = 0.08;  // cycles per pixel for stripes
  double foreground_level = 0.85;
  double foreground_jitter = 0.05;
  double limb_width = 2.4;
  double contrast = 1.0;
  double noise_level = 0.02;

  void validate() const;
};

/// The default source-domain appearance (clean figure on a dark flat field).
DomainSpec default_source_spec();
/// Source appearance shifted toward a textured, low-contrast, noisy style.
/// gap = 0 reproduces `base`; gap = 1 is the strongest shift.
DomainSpec appearance_shift(const DomainSpec& base, double gap);

inline const std::vector<std::string>& stick_figure_keypoint_names() {
  static const std::vector<std::string> names{"head", "left_hand", "right_hand", "left_foot", "right_foot", "pelvis"};
  return names;
}
/// PCK reporting groups for the stick figure.
KeypointGroups stick_figure_groups();

struct SampleRecord {
  std::string id;
  std::string file;  // relative to the dataset directory
  std::string hash;  // FNV-1a 64 of the image file bytes, hex
  KeypointSet keypoints;
};

struct DatasetManifest {
  static constexpr int kFormatVersion = 1;
  static constexpr int kGeneratorVersion = 1;

  int format_version = kFormatVersion;
  int generator_version = kGeneratorVersion;
  DomainSpec spec;
  std::string spec_hash;
  std::uint64_t seed = 0;
  std::vector<SampleRecord> samples;

  std::size_t count() const noexcept { return samples.size(); }
};

struct SampleView {
  const std::string& id;
  const Image& image;
  const KeypointSet& keypoints;
};

/// Samples held as parallel arrays ordered by sample id.
struct Dataset {
  DatasetManifest manifest;
  std::vector<std::string> ids;
  std::vector<Image> images;
  std::vector<KeypointSet> labels;

  std::size_t size() const noexcept { return images.size(); }
  SampleView sample(std::size_t i) const { return {ids[i], images[i], labels[i]}; }
  int image_size() const noexcept { return manifest.spec.image_size; }
};

/// Renders one sample; the keypoints are the analytic joint positions.
std::pair<Image, KeypointSet> render_sample(const DomainSpec& spec, std::uint64_t seed, std::uint64_t domain_tag,
                                            std::uint64_t index);

/// Generates a dataset fully in memory, quantised exactly as it is stored.
Dataset generate_dataset(const DomainSpec& spec, std::size_t n, std::uint64_t seed, std::uint64_t domain_tag);

/// Source and target datasets drawn with independent per-sample seeds from
/// the same pose distribution; only appearance differs.
std::pair<Dataset, Dataset> generate_domain_pair(const DomainSpec& source_spec, const DomainSpec& target_spec,
                                                 std::size_t n_source, std::size_t n_target, std::uint64_t seed);

/// Writes manifest.json and images/*.pgm under `dir` (created if needed).
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Accepts a dataset directory or its manifest file. Throws MissingArtifact,
/// CorruptDataset or SealedDatasetAccess.
Dataset load_dataset(const std::filesystem::path& path);

/// Any later load_dataset under `path` throws SealedDatasetAccess.
void seal_dataset(const std::filesystem::path& path);
void unseal_all_datasets();

std::string fnv1a_hex(std::span<const unsigned char> bytes);
std::string domain_spec_json(const DomainSpec& spec);
DomainSpec domain_spec_from_json(const std::string& text);

}  // namespace maps
