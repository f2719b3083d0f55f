// Command-line front end. Talks to the library only through maps.h.
#include <cstdio>
#include <functional>
#include <memory>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "maps/maps.h"

namespace {

using nlohmann::json;

struct Overrides {
  json values = json::object();
  std::vector<std::string> assignments;  // --set key=value

  template <typename T>
  CLI::Option* bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto holder = std::make_shared<T>();
    auto* opt = app->add_option(flag, *holder, help);
    pending.push_back([this, opt, holder, key] {
      if (opt->count() > 0) values[key] = *holder;
    });
    return opt;
  }

  void flag(CLI::App* app, const std::string& name, const std::string& key, bool value, const std::string& help) {
    auto* opt = app->add_flag(name, help);
    pending.push_back([this, opt, key, value] {
      if (opt->count() > 0) values[key] = value;
    });
  }

  void collect() {
    for (auto& f : pending) f();
    for (const auto& a : assignments) {
      const auto eq = a.find('=');
      if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key=value, got '" + a + "'");
      const std::string key = a.substr(0, eq), raw = a.substr(eq + 1);
      try {
        values[key] = json::parse(raw);
      } catch (const json::parse_error&) {
        values[key] = raw;  // bare strings need no quoting
      }
    }
  }

  std::vector<std::function<void()>> pending;
};

int report_failure(maps_status status) {
  std::cerr << "error: " << maps_last_error() << '\n';
  return maps_exit_code(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Source-free keypoint detector adaptation"};
  app.require_subcommand(1);
  std::string config_path;
  Overrides ov;

  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "JSON config file");
    ov.bind<std::string>(sub, "-o,--output", "output_dir", "output directory");
    ov.bind<unsigned long long>(sub, "--seed", "seed", "random seed");
    ov.flag(sub, "--overwrite", "overwrite", true, "replace a non-empty output directory");
    ov.flag(sub, "--no-plots", "plots", false, "skip plots and overlays");
    sub->add_option("--set", ov.assignments, "override any config key (key=value)");
  };

  auto* gen = app.add_subcommand("generate", "generate a source/target dataset pair");
  common(gen);
  ov.bind<double>(gen, "--gap", "gap", "appearance gap in [0, 1]");
  ov.bind<int>(gen, "--n-source", "n_source", "source training samples");
  ov.bind<int>(gen, "--n-target", "n_target", "target training samples");
  ov.bind<int>(gen, "--n-test", "n_test", "held-out samples per domain");

  auto* src = app.add_subcommand("train-source", "train the source detector");
  common(src);
  ov.bind<std::string>(src, "--source", "source_data", "labelled source dataset");
  ov.bind<std::string>(src, "--eval", "eval_data", "labelled dataset for PCK reporting");
  ov.bind<long>(src, "--steps", "steps", "optimisation steps");
  ov.bind<long>(src, "--eval-every", "eval_every", "evaluation cadence in steps");

  auto* adapt = app.add_subcommand("adapt", "adapt a source checkpoint to unlabelled target images");
  common(adapt);
  ov.bind<std::string>(adapt, "--method", "method", "mt or maps")->check(CLI::IsMember({"mt", "maps"}));
  ov.bind<std::string>(adapt, "--checkpoint", "source_checkpoint", "source checkpoint");
  ov.bind<std::string>(adapt, "--target", "target_data", "target dataset (labels unused)");
  ov.bind<std::string>(adapt, "--eval", "eval_data", "labelled dataset for PCK reporting");
  ov.bind<long>(adapt, "--steps", "steps", "optimisation steps");
  ov.bind<long>(adapt, "--eval-every", "eval_every", "evaluation cadence in steps");
  ov.bind<double>(adapt, "--eta", "eta", "teacher EMA coefficient");
  ov.bind<double>(adapt, "--tau", "tau", "teacher confidence gate");
  ov.bind<double>(adapt, "--beta-m", "beta_m", "mixup weight");
  ov.bind<double>(adapt, "--beta-s", "beta_s", "self-paced weight");

  auto* ev = app.add_subcommand("evaluate", "PCK of a checkpoint on a labelled dataset");
  common(ev);
  ov.bind<std::string>(ev, "--checkpoint", "checkpoint", "checkpoint to evaluate");
  ov.bind<std::string>(ev, "--data", "eval_data", "labelled dataset");
  ov.bind<double>(ev, "--fraction", "pck_fraction", "PCK threshold as a fraction of image size");
  ov.flag(ev, "--student", "evaluate_teacher", false, "evaluate the student instead of the teacher");

  try {
    app.parse(argc, argv);
    ov.collect();
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  char* merged = nullptr;
  maps_status status = maps_config_resolve(command.c_str(), config_path.c_str(), ov.values.dump().c_str(), &merged);
  if (status != MAPS_OK) return report_failure(status);
  const std::string effective = merged;
  maps_string_free(merged);
  std::cout << "effective config (" << command << "):\n" << effective << '\n';
  std::cout.flush();

  char* summary = nullptr;
  status = maps_run(command.c_str(), effective.c_str(), 1, &summary);
  if (status != MAPS_OK) return report_failure(status);
  std::cout << "summary:\n" << summary << '\n';
  maps_string_free(summary);
  return 0;
}
