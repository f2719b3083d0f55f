#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maps/augment.hpp"
#include "maps/geometry.hpp"
#include "maps/losses.hpp"
#include "maps/model.hpp"
#include "maps/synthdata.hpp"

namespace maps {

enum class Stage { kSource, kMeanTeacher, kMaps };

const char* stage_name(Stage stage);
Stage stage_from_name(const std::string& name);

/// Piecewise-constant learning rate: (first step, rate) pairs, starting at 0.
struct LrSchedule {
  std::vector<std::pair<long, double>> points{{0, 2e-4}};

  double rate_at(long step) const;
  void validate() const;

  /// Base rate with drops at the given fractions of the budget.
  static LrSchedule step_decay(long steps, double base, std::span<const std::pair<double, double>> drops);
};

struct TrainConfig {
  Stage stage = Stage::kSource;
  long steps = 2000;
  LrSchedule learning_rate;
  int batch_size = 16;
  LossWeights weights;
  double eta = 0.999;
  double alpha = 0.75;
  std::vector<double> selection_fractions{0.25, 0.35, 0.45};
  std::uint64_t seed = 0;
  AugmentationPolicy source_augmentation;
  AugmentationPolicy target_augmentation;
  double heatmap_sigma = 1.0;
  long eval_every = 0;  // 0: evaluate only at the end
  double pck_fraction = 0.05;
  bool evaluate_teacher = true;
  bool pseudo_from_teacher = false;
  std::string checkpoint_path;  // empty: no checkpoint written

  int rounds() const noexcept { return static_cast<int>(selection_fractions.size()); }
  void validate() const;
};

/// Source pretraining defaults: Adam, rate dropping tenfold at 60% and again
/// at 80% of the budget.
TrainConfig default_source_config();
/// Adaptation defaults: rate halves after the first third of the budget.
TrainConfig default_adapt_config(Stage stage);

struct StepLosses {
  long step = 0;
  int round = 0;
  double total = 0.0;
  double src = 0.0;
  double mt = 0.0;
  double mix = 0.0;
  double spl = 0.0;
};

struct EvalRecord {
  long step = 0;
  std::string stage;
  int round = 0;
  double lambda = 0.0;
  std::size_t selected_count = 0;
  double loss_src = 0.0;
  double loss_mt = 0.0;
  double loss_mix = 0.0;
  double loss_spl = 0.0;
  PckReport pck;
};

struct RoundRecord {
  int round = 0;
  long start_step = 0;
  double lambda = 0.0;
  std::size_t selected_count = 0;
};

struct RunReport {
  std::string stage;
  std::vector<EvalRecord> history;
  std::string checkpoint_path;
  std::vector<StepLosses> losses;
  std::vector<RoundRecord> selection;
  std::map<std::string, double> wall_clock_seconds;
};

/// Labelled images used only to report PCK during and after training.
struct EvalSet {
  std::span<const Image> images;
  std::span<const KeypointSet> labels;
  KeypointGroups groups;
  int image_size = 0;

  static EvalSet of(const Dataset& ds) {
    return {ds.images, ds.labels, stick_figure_groups(), ds.image_size()};
  }
};

using EvalCallback = std::function<void(const EvalRecord&)>;

struct SourceResult {
  DetectorParams model;
  AdamOptimizer optimizer;
  RunReport report;
};

struct AdaptResult {
  TeacherStudentPair pair;
  AdamOptimizer optimizer;
  RunReport report;
};

HeatmapSpec heatmap_spec(const ArchSpec& arch, double sigma);

SourceResult train_source(const TrainConfig& config, const ArchSpec& arch, const Dataset& source,
                          const EvalSet* eval = nullptr, const EvalCallback& on_eval = {});

/// Mean-teacher adaptation: consistency loss plus EMA only. Needs nothing
/// but the source weights and unlabeled target images.
AdaptResult adapt_mt(const TrainConfig& config, const DetectorParams& source, std::span<const Image> target,
                     const EvalSet* eval = nullptr, const EvalCallback& on_eval = {});

/// Full method: per round, freeze the student, score and select, then train
/// on consistency + beta_m * self-mixup + beta_s * selected pseudo-label
/// regression with an EMA teacher, until the selection rounds run out.
AdaptResult adapt_maps(const TrainConfig& config, const DetectorParams& source, std::span<const Image> target,
                       const EvalSet* eval = nullptr, const EvalCallback& on_eval = {});

/// Un-augmented forward, decode, PCK.
PckReport evaluate(const DetectorParams& model, std::span<const Image> images, std::span<const KeypointSet> labels,
                   int image_size, const KeypointGroups& groups, double fraction = 0.05);
PckReport evaluate(const DetectorParams& model, const EvalSet& eval, double fraction = 0.05);

/// Decoded predictions for every image, batched.
std::vector<KeypointSet> predict(const DetectorParams& model, std::span<const Image> images,
                                 std::size_t batch_size = 32);

}  // namespace maps
