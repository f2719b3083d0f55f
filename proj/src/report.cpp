#include "maps/report.hpp"

#include <fstream>
#include <iomanip>
#include <limits>

#include "maps/error.hpp"

namespace maps {

using nlohmann::json;

json pck_to_json(const PckReport& report) {
  json groups = json::object();
  for (const auto& [name, value] : report.per_group) groups[name] = value;
  return {{"pck_avg", report.average},
          {"pck_per_group", groups},
          {"threshold_fraction", report.threshold_fraction},
          {"evaluated", report.evaluated},
          {"correct", report.correct}};
}

json eval_record_json(const EvalRecord& r) {
  const bool selecting = r.stage == "maps";
  json out{{"record", "eval"},
           {"step", r.step},
           {"stage", r.stage},
           {"round", r.round},
           {"lambda", selecting ? json(r.lambda) : json(nullptr)},
           {"selected_count", selecting ? json(r.selected_count) : json(nullptr)},
           {"loss_src", r.loss_src},
           {"loss_mt", r.loss_mt},
           {"loss_mix", r.loss_mix},
           {"loss_spl", r.loss_spl}};
  out.update(pck_to_json(r.pck));
  return out;
}

void write_report_log(const std::filesystem::path& path, const RunReport& report, json summary) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report log: " + path.string());
  for (const auto& rec : report.history) out << eval_record_json(rec).dump() << '\n';
  for (const auto& round : report.selection) {
    out << json{{"record", "round"},
                {"stage", report.stage},
                {"round", round.round},
                {"step", round.start_step},
                {"lambda", round.lambda},
                {"selected_count", round.selected_count}}
               .dump()
        << '\n';
  }
  summary["record"] = "summary";
  out << summary.dump() << '\n';
  if (!out) throw IoError("failed writing report log: " + path.string());
}

std::vector<json> read_report_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("report log not found: " + path.string());
  std::vector<json> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      records.push_back(json::parse(line));
    } catch (const json::parse_error&) {
      throw CorruptDataset("malformed report record in " + path.string());
    }
  }
  return records;
}

void write_loss_trace(const std::filesystem::path& path, std::span<const StepLosses> losses) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write loss trace: " + path.string());
  out << "step,round,total,loss_src,loss_mt,loss_mix,loss_spl\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& l : losses) {
    out << l.step << ',' << l.round << ',' << l.total << ',' << l.src << ',' << l.mt << ',' << l.mix << ',' << l.spl
        << '\n';
  }
}

}  // namespace maps
