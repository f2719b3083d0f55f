#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "maps/geometry.hpp"
#include "maps/trainer.hpp"

namespace maps {

nlohmann::json pck_to_json(const PckReport& report);

/// One evaluation record with the stable field set. lambda and
/// selected_count are null outside the selection stage.
nlohmann::json eval_record_json(const EvalRecord& record);

/// Line-delimited log: one "eval" record per evaluation, one "round" record
/// per selection round, then `summary` tagged as the "summary" record.
void write_report_log(const std::filesystem::path& path, const RunReport& report, nlohmann::json summary);
std::vector<nlohmann::json> read_report_log(const std::filesystem::path& path);

/// step,round,total,loss_src,loss_mt,loss_mix,loss_spl
void write_loss_trace(const std::filesystem::path& path, std::span<const StepLosses> losses);

}  // namespace maps
