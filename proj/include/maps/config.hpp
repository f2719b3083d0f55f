#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "maps/trainer.hpp"

namespace maps {

enum class Command { kGenerate, kTrainSource, kAdapt, kEvaluate };

const char* command_name(Command command);
Command command_from_name(const std::string& name);

/// Flat run configuration shared by every command. Keys irrelevant to a
/// command are accepted and ignored; unknown keys are rejected.
struct CliConfig {
  std::string output_dir;
  bool overwrite = false;
  std::uint64_t seed = 0;
  bool plots = true;
  int overlay_count = 8;

  // generate
  double gap = 0.4;
  double geometry_gap = 0.0;
  int n_source = 500;
  int n_target = 500;
  int n_test = 200;
  int image_size = 64;

  // data and artifacts
  std::string source_data;
  std::string target_data;
  std::string eval_data;
  std::string source_checkpoint;
  std::string checkpoint;

  // optimisation
  long steps = 2000;
  int batch_size = 16;
  double learning_rate = 2e-4;
  std::vector<std::pair<double, double>> lr_drops{{0.6, 2e-5}, {0.8, 2e-6}};
  double heatmap_sigma = 1.0;
  double rotation_range = 30.0;
  double translation_range = 0.1;
  double noise_range = 0.05;
  double blur_range = 1.0;
  long eval_every = 0;

  // adaptation
  std::string method = "maps";
  double eta = 0.999;
  double alpha = 0.75;
  double beta_m = 1.0;
  double beta_s = 1.0;
  double tau = 0.3;
  std::vector<double> selection_fractions{0.25, 0.35, 0.45};
  bool pseudo_from_teacher = false;
  bool evaluate_teacher = true;

  // evaluation
  double pck_fraction = 0.05;
};

const std::vector<std::string>& config_keys();

CliConfig default_cli_config(Command command);

/// Overlays `values` onto `config`. Unknown keys and ill-typed values throw
/// ConfigError naming the key.
void apply_config_json(CliConfig& config, const nlohmann::json& values);

nlohmann::json config_to_json(const CliConfig& config);

/// Defaults, then the file (if any), then `overrides`. Relative output paths
/// are resolved against $MAPS_OUTPUT_ROOT when it is set.
CliConfig resolve_config(Command command, const std::filesystem::path& file, const nlohmann::json& overrides);

/// Checks values and the presence of every input path the command reads.
void validate_config(const CliConfig& config, Command command);

TrainConfig to_train_config(const CliConfig& config, Command command);

}  // namespace maps
