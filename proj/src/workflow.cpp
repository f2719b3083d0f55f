#include "maps/workflow.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>

#include "maps/checkpoint.hpp"
#include "maps/error.hpp"
#include "maps/plots.hpp"
#include "maps/report.hpp"
#include "maps/synthdata.hpp"

namespace maps {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& value) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << value.dump(2) << '\n';
}

bool contains(const fs::path& outer, const fs::path& inner) {
  const fs::path a = fs::weakly_canonical(outer), b = fs::weakly_canonical(inner);
  auto ai = a.begin(), bi = b.begin();
  for (; ai != a.end() && !ai->empty(); ++ai, ++bi) {
    if (bi == b.end() || *ai != *bi) return false;
  }
  return true;
}

void check_inputs_outside(const CliConfig& c) {
  for (const std::string* in : {&c.source_data, &c.target_data, &c.eval_data, &c.source_checkpoint, &c.checkpoint}) {
    if (!in->empty() && contains(c.output_dir, *in)) {
      throw ConfigError("output_dir " + c.output_dir + " contains the input " + *in);
    }
  }
}

json summary_from(const RunReport& report) {
  json s{{"stage", report.stage}};
  if (!report.history.empty()) {
    json last = eval_record_json(report.history.back());
    last.erase("record");
    s.update(last);
  } else {
    s["pck_avg"] = nullptr;
    s["pck_per_group"] = nullptr;
  }
  if (!report.losses.empty()) s["final_loss"] = report.losses.back().total;
  s["steps"] = report.losses.size();
  return s;
}

void write_overlays(const fs::path& dir, const DetectorParams& model, const Dataset& data, int count,
                    CommandOutcome& outcome) {
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(count), data.size());
  if (n == 0) return;
  fs::create_directories(dir);
  const auto pred = predict(model, std::span<const Image>(data.images.data(), n));
  for (std::size_t i = 0; i < n; ++i) {
    const fs::path png = dir / ("overlay_" + data.ids[i] + ".png");
    write_keypoint_overlay(png, data.images[i], data.labels[i], pred[i]);
    outcome.artifacts.push_back(png);
  }
}

void write_run_outputs(const fs::path& out, const CliConfig& c, const RunReport& report, json summary,
                       CommandOutcome& outcome) {
  write_report_log(out / "report.jsonl", report, summary);
  write_loss_trace(out / "losses.csv", report.losses);
  write_json(out / "summary.json", summary);
  json timing(report.wall_clock_seconds);
  write_json(out / "timing.json", timing);
  outcome.artifacts.insert(outcome.artifacts.end(),
                           {out / "report.jsonl", out / "losses.csv", out / "summary.json", out / "timing.json"});
  if (c.plots) {
    write_loss_curve(out / "loss_curve.png", report.losses, report.stage);
    outcome.artifacts.push_back(out / "loss_curve.png");
    if (!report.history.empty()) {
      write_pck_curve(out / "pck_curve.png", report.history);
      outcome.artifacts.push_back(out / "pck_curve.png");
    }
  }
  outcome.summary = std::move(summary);
}

EvalCallback progress(std::ostream* log) {
  if (!log) return {};
  return [log](const EvalRecord& r) {
    *log << r.stage << " step " << r.step << " pck_avg " << std::fixed << std::setprecision(4) << r.pck.average
         << std::defaultfloat << '\n';
    log->flush();
  };
}

CommandOutcome run_generate(const CliConfig& c, std::ostream* log) {
  const fs::path out(c.output_dir);
  DomainSpec source = default_source_spec();
  source.image_size = c.image_size;
  source.name = "source";
  DomainSpec target = appearance_shift(source, c.gap);
  target.geometry_scale = source.geometry_scale * (1.0 + c.geometry_gap);
  auto [s_train, t_train] = generate_domain_pair(source, target, c.n_source, c.n_target, c.seed);

  CommandOutcome outcome;
  json summary{{"command", "generate"}, {"seed", c.seed}, {"gap", c.gap}, {"geometry_gap", c.geometry_gap}};
  auto emit = [&](const Dataset& ds, const std::string& name) {
    write_dataset(ds, out / name);
    const fs::path manifest = out / name / "manifest.json";
    outcome.artifacts.push_back(manifest);
    summary[name] = {{"count", ds.size()}, {"spec_hash", ds.manifest.spec_hash}};
    if (log) *log << name << ": " << manifest.string() << '\n';
  };
  emit(s_train, "source");
  emit(t_train, "target");
  if (c.n_test > 0) {
    // Held-out splits come from a disjoint seed stream.
    auto [s_test, t_test] = generate_domain_pair(source, target, c.n_test, c.n_test, c.seed ^ 0x5eed7e57ULL);
    emit(s_test, "source_test");
    emit(t_test, "target_test");
  }
  write_json(out / "summary.json", summary);
  outcome.summary = std::move(summary);
  return outcome;
}

CommandOutcome run_train_source(const CliConfig& c, std::ostream* log) {
  const fs::path out(c.output_dir);
  const Dataset source = load_dataset(c.source_data);
  std::optional<Dataset> eval;
  if (!c.eval_data.empty()) eval = load_dataset(c.eval_data);
  ArchSpec arch;
  arch.image_size = source.image_size();

  TrainConfig tc = to_train_config(c, Command::kTrainSource);
  tc.checkpoint_path = (out / "source.ckpt").string();
  EvalSet es;
  if (eval) es = EvalSet::of(*eval);
  SourceResult result = train_source(tc, arch, source, eval ? &es : nullptr, progress(log));

  CommandOutcome outcome;
  outcome.artifacts.push_back(tc.checkpoint_path);
  json summary = summary_from(result.report);
  summary["command"] = "train-source";
  summary["seed"] = c.seed;
  write_run_outputs(out, c, result.report, summary, outcome);
  if (c.plots && eval) write_overlays(out / "overlays", result.model, *eval, c.overlay_count, outcome);
  return outcome;
}

CommandOutcome run_adapt(const CliConfig& c, std::ostream* log) {
  const fs::path out(c.output_dir);
  const Checkpoint source = load_checkpoint(c.source_checkpoint);
  const Dataset target = load_dataset(c.target_data);
  if (target.image_size() != source.arch.image_size) {
    throw ConfigError("target images are " + std::to_string(target.image_size()) + " px but the checkpoint expects " +
                      std::to_string(source.arch.image_size));
  }
  std::optional<Dataset> eval;
  if (!c.eval_data.empty()) eval = load_dataset(c.eval_data);

  TrainConfig tc = to_train_config(c, Command::kAdapt);
  tc.checkpoint_path = (out / (c.method + ".ckpt")).string();
  EvalSet es;
  if (eval) es = EvalSet::of(*eval);
  // Only the images reach the adaptation; target labels are never read.
  const DetectorParams model = source.student_model();
  AdaptResult result = tc.stage == Stage::kMeanTeacher
                           ? adapt_mt(tc, model, target.images, eval ? &es : nullptr, progress(log))
                           : adapt_maps(tc, model, target.images, eval ? &es : nullptr, progress(log));

  CommandOutcome outcome;
  outcome.artifacts.push_back(tc.checkpoint_path);
  json summary = summary_from(result.report);
  summary["command"] = "adapt";
  summary["method"] = c.method;
  summary["seed"] = c.seed;
  json rounds = json::array();
  for (const auto& r : result.report.selection) {
    rounds.push_back({{"round", r.round}, {"step", r.start_step}, {"lambda", r.lambda}, {"selected_count", r.selected_count}});
  }
  summary["rounds"] = rounds;
  write_run_outputs(out, c, result.report, summary, outcome);
  if (c.plots && eval) {
    const DetectorParams& shown = c.evaluate_teacher ? result.pair.teacher : result.pair.student;
    write_overlays(out / "overlays", shown, *eval, c.overlay_count, outcome);
  }
  return outcome;
}

CommandOutcome run_evaluate(const CliConfig& c, std::ostream* log) {
  const fs::path out(c.output_dir);
  const Checkpoint ck = load_checkpoint(c.checkpoint);
  const Dataset data = load_dataset(c.eval_data);
  const DetectorParams model = c.evaluate_teacher ? ck.evaluation_model() : ck.student_model();
  const PckReport report =
      evaluate(model, data.images, data.labels, data.image_size(), stick_figure_groups(), c.pck_fraction);
  CommandOutcome outcome;
  json summary = pck_to_json(report);
  summary["command"] = "evaluate";
  summary["stage"] = ck.stage;
  summary["model"] = (c.evaluate_teacher && ck.teacher) ? "teacher" : "student";
  summary["count"] = data.size();
  write_json(out / "summary.json", summary);
  outcome.artifacts.push_back(out / "summary.json");
  if (log) *log << "pck_avg " << report.average << " over " << report.evaluated << " keypoints\n";
  if (c.plots) write_overlays(out / "overlays", model, data, c.overlay_count, outcome);
  outcome.summary = std::move(summary);
  return outcome;
}

}  // namespace

void prepare_output_dir(const fs::path& dir, bool overwrite) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path exists and is not a directory: " + dir.string());
    if (!fs::is_empty(dir)) {
      if (!overwrite) throw ConfigError("output directory is not empty (pass --overwrite): " + dir.string());
      for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
    }
  }
  fs::create_directories(dir);
}

CommandOutcome run_command(Command command, const CliConfig& config, std::ostream* log) {
  validate_config(config, command);
  if (config.plots && command != Command::kGenerate && !plots_available()) {
    throw ConfigError("plots requested but image output support was not built; set plots to false");
  }
  check_inputs_outside(config);
  const fs::path out(config.output_dir);
  prepare_output_dir(out, config.overwrite);
  write_json(out / "config.json", config_to_json(config));

  CommandOutcome outcome;
  switch (command) {
    case Command::kGenerate: outcome = run_generate(config, log); break;
    case Command::kTrainSource: outcome = run_train_source(config, log); break;
    case Command::kAdapt: outcome = run_adapt(config, log); break;
    case Command::kEvaluate: outcome = run_evaluate(config, log); break;
  }
  outcome.artifacts.insert(outcome.artifacts.begin(), out / "config.json");
  return outcome;
}

}  // namespace maps
