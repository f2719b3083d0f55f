#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "maps/config.hpp"

namespace maps {

struct CommandOutcome {
  /// Deterministic given the config: no paths, no timings.
  nlohmann::json summary;
  std::vector<std::filesystem::path> artifacts;
};

/// Creates `dir`, refusing when it exists non-empty unless `overwrite`, in
/// which case its previous contents are removed.
void prepare_output_dir(const std::filesystem::path& dir, bool overwrite);

/// Validates, prepares the output directory, writes the config snapshot and
/// runs the command. Progress lines go to `log` when given.
CommandOutcome run_command(Command command, const CliConfig& config, std::ostream* log = nullptr);

}  // namespace maps
