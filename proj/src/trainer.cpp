#include "maps/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "maps/checkpoint.hpp"
#include "maps/error.hpp"
#include "maps/spl.hpp"

namespace maps {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Independent generator per purpose so that enabling one loss term never
// perturbs the random draws of another.
std::mt19937_64 stream(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
  return std::mt19937_64(seq);
}

enum Purpose : std::uint32_t { kInit = 10, kBatches = 11, kAugment = 12, kMixup = 13 };

/// Reshuffles the index set every epoch.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::mt19937_64 rng) : order_(n), rng_(std::move(rng)) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    cursor_ = n;
  }

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
      if (cursor_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
      }
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_;
};

void require_stage(const TrainConfig& config, Stage expected, const char* who) {
  if (config.stage != expected) {
    throw ConfigError(std::string(who) + ": config stage is '" + stage_name(config.stage) + "', expected '" +
                      stage_name(expected) + "'");
  }
}

EvalRecord make_eval(const std::string& stage, long step, const DetectorParams& model, const EvalSet& eval,
                     double fraction) {
  EvalRecord rec;
  rec.step = step;
  rec.stage = stage;
  rec.pck = evaluate(model, eval, fraction);
  return rec;
}

AdaptResult adapt_loop(const TrainConfig& config, const DetectorParams& source, std::span<const Image> target,
                       const EvalSet* eval, const EvalCallback& on_eval, bool full_method) {
  config.validate();
  if (target.empty()) throw InvalidArgument("adaptation needs at least one target image");
  if (config.batch_size > static_cast<int>(target.size())) {
    throw ConfigError("batch_size exceeds the number of target images");
  }
  const auto t0 = Clock::now();
  const std::string stage = stage_name(config.stage);
  const HeatmapSpec spec = heatmap_spec(source.arch, config.heatmap_sigma);
  const LossWeights w = full_method ? config.weights : LossWeights{0.0, 0.0, config.weights.tau};
  const auto batch = static_cast<std::size_t>(config.batch_size);

  AdaptResult result{init_pair(source, config.eta), AdamOptimizer(source.params), {}};
  TeacherStudentPair& pair = result.pair;
  RunReport& report = result.report;
  report.stage = stage;

  BatchSampler sampler(target.size(), stream(config.seed, kBatches));
  auto aug_rng = stream(config.seed, kAugment);
  auto mix_rng = stream(config.seed, kMixup);

  SelectionState selection;
  std::vector<long> round_start;
  if (full_method) {
    std::vector<std::size_t> quotas;
    try {
      quotas = quota_schedule(config.selection_fractions, target.size());
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string(e.what()) + " (" + std::to_string(target.size()) + " target images)");
    }
    selection = make_selection_state(std::move(quotas), target.size());
    const int q = config.rounds();
    for (int r = 0; r < q; ++r) round_start.push_back(config.steps * r / q);
  }
  std::size_t next_round = 0;

  double last_mt = 0, last_mix = 0, last_spl = 0;
  auto emit = [&](long step) {
    if (!eval) return;
    EvalRecord rec = make_eval(stage, step, config.evaluate_teacher ? pair.teacher : pair.student, *eval,
                               config.pck_fraction);
    rec.round = selection.round;
    rec.lambda = selection.lambda;
    rec.selected_count = selection.selected_count();
    rec.loss_mt = last_mt;
    rec.loss_mix = last_mix;
    rec.loss_spl = last_spl;
    report.history.push_back(rec);
    if (on_eval) on_eval(rec);
  };

  for (long step = 0; step < config.steps; ++step) {
    if (full_method && next_round < round_start.size() && step == round_start[next_round]) {
      // Sample selection with the student frozen.
      const auto ts = Clock::now();
      advance_round(selection, pair.student, target, spec, config.pseudo_from_teacher ? &pair.teacher : nullptr);
      report.selection.push_back({selection.round, step, selection.lambda, selection.selected_count()});
      report.wall_clock_seconds["selection"] += seconds_since(ts);
      ++next_round;
    }

    const auto idx = sampler.next(batch);
    std::vector<AugmentationRecord> rec_s(batch), rec_t(batch);
    std::vector<Image> x_s, x_t;
    x_s.reserve(batch);
    x_t.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      rec_s[i] = sample_augmentation(config.target_augmentation, aug_rng);
      rec_t[i] = sample_augmentation(config.target_augmentation, aug_rng);
      x_s.push_back(apply_to_image(rec_s[i], target[idx[i]]));
      x_t.push_back(apply_to_image(rec_t[i], target[idx[i]]));
    }

    ForwardTrace trace;
    const auto h = forward(pair.student, x_s, &trace);
    const auto t = forward(pair.teacher, x_t);
    HeatmapLoss mt = consistency_loss(h, t, rec_s, rec_t, w.tau, config.heatmap_sigma);
    check_divergence(stage, step, "loss_mt", mt.value);

    ObjectiveTerms terms{mt.value, 0.0, 0.0};
    std::vector<HeatmapStack> grad_h = std::move(mt.grad);

    if (w.beta_s > 0.0) {
      std::vector<KeypointSet> pseudo;
      std::vector<double> v;
      for (std::size_t i : idx) {
        pseudo.push_back(selection.pseudo_labels[i]);
        v.push_back(selection.weights[i]);
      }
      const HeatmapLoss spl = pseudo_label_loss(h, pseudo, rec_s, spec, v);
      check_divergence(stage, step, "loss_spl", spl.value);
      terms.spl = spl.value;
      for (std::size_t i = 0; i < batch; ++i) {
        auto& g = grad_h[i].values();
        const auto& gs = spl.grad[i].values();
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += w.beta_s * gs[j];
      }
    }
    ParamSet grads = backward(pair.student, trace, grad_h);

    if (w.beta_m > 0.0 && batch >= 2) {
      const double rho = sample_mix_ratio(config.alpha, mix_rng);
      const std::size_t offset = 1 + static_cast<std::size_t>(mix_rng() % (batch - 1));
      std::vector<Image> mixed;
      std::vector<HeatmapStack> partner;
      mixed.reserve(batch);
      partner.reserve(batch);
      for (std::size_t i = 0; i < batch; ++i) {
        const std::size_t j = (i + offset) % batch;
        mixed.push_back(mix_images(x_s[i], x_s[j], rho));
        partner.push_back(h[j]);
      }
      ForwardTrace mix_trace;
      const auto hm = forward(pair.student, mixed, &mix_trace);
      const HeatmapLoss mix = mixup_loss(hm, h, partner, rho);
      check_divergence(stage, step, "loss_mix", mix.value);
      terms.mix = mix.value;
      grads.axpy(w.beta_m, backward(pair.student, mix_trace, mix.grad));
    }

    const double total = overall_objective(terms, w);
    check_divergence(stage, step, "loss_total", total);
    result.optimizer.step(pair.student.params, grads, config.learning_rate.rate_at(step));
    ema_update(pair);

    last_mt = terms.mt;
    last_mix = terms.mix;
    last_spl = terms.spl;
    report.losses.push_back({step, selection.round, total, 0.0, terms.mt, terms.mix, terms.spl});
    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0 && step + 1 < config.steps) emit(step + 1);
  }

  emit(config.steps);
  report.wall_clock_seconds[stage] = seconds_since(t0);
  return result;
}

}  // namespace

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::kSource: return "source";
    case Stage::kMeanTeacher: return "mt";
    case Stage::kMaps: return "maps";
  }
  return "source";
}

Stage stage_from_name(const std::string& name) {
  if (name == "source") return Stage::kSource;
  if (name == "mt") return Stage::kMeanTeacher;
  if (name == "maps") return Stage::kMaps;
  throw ConfigError("unknown stage '" + name + "' (expected source, mt or maps)");
}

double LrSchedule::rate_at(long step) const {
  double rate = points.front().second;
  for (const auto& [start, r] : points) {
    if (step >= start) rate = r;
  }
  return rate;
}

void LrSchedule::validate() const {
  if (points.empty() || points.front().first != 0) throw ConfigError("learning-rate schedule must start at step 0");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].second > 0.0)) throw ConfigError("learning rates must be positive");
    if (i > 0 && points[i].first <= points[i - 1].first) {
      throw ConfigError("learning-rate schedule steps must be strictly increasing");
    }
  }
}

LrSchedule LrSchedule::step_decay(long steps, double base, std::span<const std::pair<double, double>> drops) {
  LrSchedule s;
  s.points = {{0, base}};
  for (const auto& [fraction, rate] : drops) {
    const long at = static_cast<long>(fraction * static_cast<double>(steps));
    if (at > s.points.back().first) s.points.emplace_back(at, rate);
  }
  return s;
}

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  learning_rate.validate();
  try {
    weights.validate();
    source_augmentation.validate();
    target_augmentation.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(heatmap_sigma > 0.0)) throw ConfigError("heatmap_sigma must be positive");
  if (!(pck_fraction > 0.0)) throw ConfigError("pck_fraction must be positive");
  if (eval_every < 0) throw ConfigError("eval_every must be non-negative");
  if (stage == Stage::kMaps) {
    if (selection_fractions.empty()) throw ConfigError("selection schedule must not be empty");
    for (std::size_t i = 0; i < selection_fractions.size(); ++i) {
      const double f = selection_fractions[i];
      if (!(f > 0.0 && f <= 1.0)) throw ConfigError("selection fractions must lie in (0, 1]");
      if (i > 0 && f <= selection_fractions[i - 1]) throw ConfigError("selection fractions must be strictly increasing");
    }
  }
}

TrainConfig default_source_config() {
  TrainConfig c;
  c.stage = Stage::kSource;
  c.steps = 2000;
  const std::pair<double, double> drops[] = {{0.6, 2e-5}, {0.8, 2e-6}};
  c.learning_rate = LrSchedule::step_decay(c.steps, 2e-4, drops);
  c.source_augmentation = {30.0, 0.1, 0.05, 1.0, true, true, true, true};
  c.target_augmentation = c.source_augmentation;
  return c;
}

TrainConfig default_adapt_config(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  c.steps = 1500;
  const std::pair<double, double> drops[] = {{1.0 / 3.0, 1e-4}};
  c.learning_rate = LrSchedule::step_decay(c.steps, 2e-4, drops);
  c.source_augmentation = {30.0, 0.1, 0.05, 1.0, true, true, true, true};
  c.target_augmentation = c.source_augmentation;
  return c;
}

HeatmapSpec heatmap_spec(const ArchSpec& arch, double sigma) {
  return {arch.heatmap_resolution(), sigma, static_cast<double>(arch.stride())};
}

SourceResult train_source(const TrainConfig& config, const ArchSpec& arch, const Dataset& source,
                          const EvalSet* eval, const EvalCallback& on_eval) {
  require_stage(config, Stage::kSource, "train_source");
  config.validate();
  arch.validate();
  if (source.size() == 0) throw InvalidArgument("train_source: empty source dataset");
  if (source.image_size() != arch.image_size) throw ConfigError("source images do not match the architecture");
  const auto t0 = Clock::now();
  const HeatmapSpec spec = heatmap_spec(arch, config.heatmap_sigma);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  SourceResult result{init_detector(arch, stream(config.seed, kInit)()), {}, {}};
  result.optimizer = AdamOptimizer(result.model.params);
  result.report.stage = "source";
  BatchSampler sampler(source.size(), stream(config.seed, kBatches));
  auto aug_rng = stream(config.seed, kAugment);

  double last = 0.0;
  auto emit = [&](long step) {
    if (!eval) return;
    EvalRecord rec = make_eval("source", step, result.model, *eval, config.pck_fraction);
    rec.loss_src = last;
    result.report.history.push_back(rec);
    if (on_eval) on_eval(rec);
  };

  for (long step = 0; step < config.steps; ++step) {
    const auto idx = sampler.next(batch);
    std::vector<AugmentationRecord> recs(batch);
    std::vector<Image> inputs;
    std::vector<KeypointSet> labels;
    inputs.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      recs[i] = sample_augmentation(config.source_augmentation, aug_rng);
      inputs.push_back(apply_to_image(recs[i], source.images[idx[i]]));
      labels.push_back(source.labels[idx[i]]);
    }
    ForwardTrace trace;
    const auto pred = forward(result.model, inputs, &trace);
    const HeatmapLoss loss = source_loss(pred, labels, recs, spec);
    check_divergence("source", step, "loss_src", loss.value);
    const ParamSet grads = backward(result.model, trace, loss.grad);
    result.optimizer.step(result.model.params, grads, config.learning_rate.rate_at(step));
    last = loss.value;
    result.report.losses.push_back({step, 0, loss.value, loss.value, 0.0, 0.0, 0.0});
    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0 && step + 1 < config.steps) emit(step + 1);
  }
  emit(config.steps);

  if (!config.checkpoint_path.empty()) {
    Checkpoint ck;
    ck.stage = "source";
    ck.arch = arch;
    ck.student = result.model.params;
    ck.eta = config.eta;
    ck.step = config.steps;
    ck.optimizer = result.optimizer;
    save_checkpoint(ck, config.checkpoint_path);
    result.report.checkpoint_path = config.checkpoint_path;
  }
  result.report.wall_clock_seconds["source"] = seconds_since(t0);
  return result;
}

namespace {

void write_adapt_checkpoint(const TrainConfig& config, AdaptResult& result) {
  if (config.checkpoint_path.empty()) return;
  Checkpoint ck;
  ck.stage = stage_name(config.stage);
  ck.arch = result.pair.student.arch;
  ck.student = result.pair.student.params;
  ck.teacher = result.pair.teacher.params;
  ck.eta = result.pair.eta;
  ck.step = config.steps;
  ck.optimizer = result.optimizer;
  save_checkpoint(ck, config.checkpoint_path);
  result.report.checkpoint_path = config.checkpoint_path;
}

}  // namespace

AdaptResult adapt_mt(const TrainConfig& config, const DetectorParams& source, std::span<const Image> target,
                     const EvalSet* eval, const EvalCallback& on_eval) {
  require_stage(config, Stage::kMeanTeacher, "adapt_mt");
  AdaptResult result = adapt_loop(config, source, target, eval, on_eval, false);
  write_adapt_checkpoint(config, result);
  return result;
}

AdaptResult adapt_maps(const TrainConfig& config, const DetectorParams& source, std::span<const Image> target,
                       const EvalSet* eval, const EvalCallback& on_eval) {
  require_stage(config, Stage::kMaps, "adapt_maps");
  AdaptResult result = adapt_loop(config, source, target, eval, on_eval, true);
  write_adapt_checkpoint(config, result);
  return result;
}

std::vector<KeypointSet> predict(const DetectorParams& model, std::span<const Image> images, std::size_t batch_size) {
  return decode_pseudo_labels(model, images, batch_size);
}

PckReport evaluate(const DetectorParams& model, std::span<const Image> images, std::span<const KeypointSet> labels,
                   int image_size, const KeypointGroups& groups, double fraction) {
  if (labels.empty() || labels.size() != images.size()) {
    throw InvalidArgument("evaluate: every image needs ground-truth keypoints");
  }
  const auto pred = predict(model, images);
  return pck(pred, labels, image_size, fraction, groups);
}

PckReport evaluate(const DetectorParams& model, const EvalSet& eval, double fraction) {
  return evaluate(model, eval.images, eval.labels, eval.image_size, eval.groups, fraction);
}

}  // namespace maps
