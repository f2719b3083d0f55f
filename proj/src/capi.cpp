#include "maps/maps.h"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <memory>
#include <string>

#include "maps/checkpoint.hpp"
#include "maps/error.hpp"
#include "maps/report.hpp"
#include "maps/synthdata.hpp"
#include "maps/workflow.hpp"

struct maps_dataset {
  maps::Dataset data;
};

struct maps_detector {
  maps::DetectorParams model;
};

namespace {

thread_local std::string last_error;

maps_status fail(maps_status status, const std::string& message) {
  last_error = message;
  return status;
}

template <typename F>
maps_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return MAPS_OK;
  } catch (const maps::Error& e) {
    return fail(static_cast<maps_status>(static_cast<int>(e.code())), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(MAPS_ERR_CONFIG, std::string("invalid JSON: ") + e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(MAPS_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(MAPS_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(MAPS_ERR_INTERNAL, "unknown error");
  }
}

char* copy_out(const std::string& text) {
  char* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

void require(bool ok, const char* message) {
  if (!ok) throw maps::InvalidArgument(message);
}

}  // namespace

extern "C" {

const char* maps_version(void) { return "1.0.0"; }

const char* maps_last_error(void) { return last_error.c_str(); }

void maps_string_free(char* text) { std::free(text); }

int maps_exit_code(maps_status status) {
  switch (status) {
    case MAPS_OK: return 0;
    case MAPS_ERR_INVALID_ARGUMENT:
    case MAPS_ERR_CONFIG: return 2;
    case MAPS_ERR_DIVERGENCE: return 3;
    case MAPS_ERR_MISSING_ARTIFACT:
    case MAPS_ERR_SEALED: return 4;
    case MAPS_ERR_CORRUPT: return 5;
    default: return 1;
  }
}

maps_status maps_config_keys(char** keys_json) {
  return guarded([&] {
    require(keys_json != nullptr, "keys_json must not be null");
    *keys_json = copy_out(nlohmann::json(maps::config_keys()).dump());
  });
}

maps_status maps_config_resolve(const char* command, const char* config_path, const char* overrides_json,
                                char** merged_json) {
  return guarded([&] {
    require(command && merged_json, "command and merged_json must not be null");
    const auto cmd = maps::command_from_name(command);
    nlohmann::json overrides;
    if (overrides_json && *overrides_json) {
      try {
        overrides = nlohmann::json::parse(overrides_json);
      } catch (const nlohmann::json::parse_error& e) {
        throw maps::ConfigError(std::string("overrides are not valid JSON: ") + e.what());
      }
    }
    const auto config = maps::resolve_config(cmd, config_path ? config_path : "", overrides);
    *merged_json = copy_out(maps::config_to_json(config).dump(2));
  });
}

maps_status maps_run(const char* command, const char* config_json, int progress, char** summary_json) {
  return guarded([&] {
    require(command && config_json, "command and config_json must not be null");
    const auto cmd = maps::command_from_name(command);
    nlohmann::json values;
    try {
      values = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::parse_error& e) {
      throw maps::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    maps::CliConfig config = maps::default_cli_config(cmd);
    maps::apply_config_json(config, values);
    const auto outcome = maps::run_command(cmd, config, progress ? &std::cout : nullptr);
    if (summary_json) *summary_json = copy_out(outcome.summary.dump(2));
  });
}

maps_status maps_dataset_open(const char* path, maps_dataset** out) {
  return guarded([&] {
    require(path && out, "path and out must not be null");
    *out = nullptr;
    auto handle = std::make_unique<maps_dataset>();
    handle->data = maps::load_dataset(path);
    *out = handle.release();
  });
}

void maps_dataset_close(maps_dataset* dataset) { delete dataset; }

size_t maps_dataset_size(const maps_dataset* dataset) { return dataset ? dataset->data.size() : 0; }

int maps_dataset_image_size(const maps_dataset* dataset) { return dataset ? dataset->data.image_size() : 0; }

int maps_dataset_num_keypoints(const maps_dataset* dataset) {
  return dataset ? dataset->data.manifest.spec.num_keypoints : 0;
}

maps_status maps_dataset_keypoints(const maps_dataset* dataset, size_t index, double* xy, unsigned char* visible,
                                   size_t k) {
  return guarded([&] {
    require(dataset != nullptr, "dataset must not be null");
    require(index < dataset->data.size(), "sample index out of range");
    const auto& points = dataset->data.labels[index].points;
    require(k == points.size(), "keypoint count mismatch");
    for (size_t i = 0; i < k; ++i) {
      if (xy) {
        xy[2 * i] = points[i].x;
        xy[2 * i + 1] = points[i].y;
      }
      if (visible) visible[i] = points[i].visible ? 1 : 0;
    }
  });
}

maps_status maps_dataset_seal(const char* path) {
  return guarded([&] {
    require(path != nullptr, "path must not be null");
    maps::seal_dataset(path);
  });
}

void maps_dataset_unseal_all(void) { maps::unseal_all_datasets(); }

maps_status maps_detector_load(const char* checkpoint_path, int use_teacher, maps_detector** out) {
  return guarded([&] {
    require(checkpoint_path && out, "checkpoint_path and out must not be null");
    *out = nullptr;
    const auto ck = maps::load_checkpoint(checkpoint_path);
    auto handle = std::make_unique<maps_detector>();
    handle->model = use_teacher ? ck.evaluation_model() : ck.student_model();
    *out = handle.release();
  });
}

void maps_detector_free(maps_detector* detector) { delete detector; }

int maps_detector_num_keypoints(const maps_detector* detector) {
  return detector ? detector->model.arch.num_keypoints : 0;
}

maps_status maps_detector_predict(const maps_detector* detector, const maps_dataset* dataset, size_t index,
                                  double* xy, double* confidence, size_t k) {
  return guarded([&] {
    require(detector && dataset, "detector and dataset must not be null");
    require(index < dataset->data.size(), "sample index out of range");
    require(k == static_cast<size_t>(detector->model.arch.num_keypoints), "keypoint count mismatch");
    const auto out = maps::forward(detector->model, std::span<const maps::Image>(&dataset->data.images[index], 1));
    const auto decoded = maps::decode_heatmaps(out.front());
    for (size_t i = 0; i < k; ++i) {
      if (xy) {
        xy[2 * i] = decoded.keypoints.points[i].x;
        xy[2 * i + 1] = decoded.keypoints.points[i].y;
      }
      if (confidence) confidence[i] = decoded.confidence[i];
    }
  });
}

maps_status maps_detector_evaluate(const maps_detector* detector, const maps_dataset* dataset, double fraction,
                                   char** report_json) {
  return guarded([&] {
    require(detector && dataset && report_json, "detector, dataset and report_json must not be null");
    const auto& d = dataset->data;
    const auto report =
        maps::evaluate(detector->model, d.images, d.labels, d.image_size(), maps::stick_figure_groups(), fraction);
    *report_json = copy_out(maps::pck_to_json(report).dump());
  });
}

}  // extern "C"
