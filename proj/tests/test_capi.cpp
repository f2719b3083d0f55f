#include <doctest.h>

#include <string>

#include <json.hpp>

#include "maps/maps.h"
#include "test_dirs.hpp"

using nlohmann::json;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  maps_string_free(s);
  return out;
}

json run(const char* command, const json& config, maps_status* status) {
  char* summary = nullptr;
  *status = maps_run(command, config.dump().c_str(), 0, &summary);
  return *status == MAPS_OK ? json::parse(take(summary)) : json();
}

json merged(const char* command, const json& overrides) {
  char* out = nullptr;
  REQUIRE(maps_config_resolve(command, nullptr, overrides.dump().c_str(), &out) == MAPS_OK);
  return json::parse(take(out));
}

}  // namespace

TEST_CASE("exit code mapping") {
  CHECK(maps_exit_code(MAPS_OK) == 0);
  CHECK(maps_exit_code(MAPS_ERR_CONFIG) == 2);
  CHECK(maps_exit_code(MAPS_ERR_INVALID_ARGUMENT) == 2);
  CHECK(maps_exit_code(MAPS_ERR_DIVERGENCE) == 3);
  CHECK(maps_exit_code(MAPS_ERR_MISSING_ARTIFACT) == 4);
  CHECK(maps_exit_code(MAPS_ERR_SEALED) == 4);
  CHECK(maps_exit_code(MAPS_ERR_CORRUPT) == 5);
  CHECK(maps_exit_code(MAPS_ERR_IO) == 1);
  CHECK(maps_exit_code(MAPS_ERR_INTERNAL) == 1);
  CHECK(std::string(maps_version()).size() > 0);
}

TEST_CASE("config resolution through the C boundary") {
  char* keys = nullptr;
  REQUIRE(maps_config_keys(&keys) == MAPS_OK);
  CHECK(json::parse(take(keys)).size() > 20);

  const json c = merged("adapt", {{"seed", 4}});
  CHECK(c["seed"] == 4);
  CHECK(c["steps"] == 1500);

  char* out = nullptr;
  CHECK(maps_config_resolve("adapt", nullptr, R"({"bogus": 1})", &out) == MAPS_ERR_CONFIG);
  CHECK(std::string(maps_last_error()).find("bogus") != std::string::npos);
  CHECK(maps_config_resolve("adapt", nullptr, "{not json", &out) == MAPS_ERR_CONFIG);
  CHECK(maps_config_resolve("dance", nullptr, nullptr, &out) == MAPS_ERR_CONFIG);
  CHECK(maps_config_resolve("adapt", "/no/such/file.json", nullptr, &out) == MAPS_ERR_MISSING_ARTIFACT);
  CHECK(maps_config_resolve(nullptr, nullptr, nullptr, &out) == MAPS_ERR_INVALID_ARGUMENT);
  CHECK(maps_config_resolve("adapt", nullptr, nullptr, nullptr) == MAPS_ERR_INVALID_ARGUMENT);
}

TEST_CASE("datasets, detectors and sealing") {
  TempDir dir("capi");
  const std::string root = dir.path.string();
  maps_status st;

  json gen = merged("generate", {{"output_dir", root + "/data"}, {"n_source", 6}, {"n_target", 12}, {"n_test", 4},
                                 {"image_size", 32}, {"plots", false}});
  const json g = run("generate", gen, &st);
  REQUIRE(st == MAPS_OK);
  CHECK(g["source"]["count"] == 6);

  maps_dataset* ds = nullptr;
  REQUIRE(maps_dataset_open((root + "/data/target_test").c_str(), &ds) == MAPS_OK);
  CHECK(maps_dataset_size(ds) == 4);
  CHECK(maps_dataset_image_size(ds) == 32);
  const int k = maps_dataset_num_keypoints(ds);
  CHECK(k == 6);
  double xy[12];
  unsigned char vis[6];
  CHECK(maps_dataset_keypoints(ds, 0, xy, vis, 6) == MAPS_OK);
  CHECK(maps_dataset_keypoints(ds, 4, xy, vis, 6) == MAPS_ERR_INVALID_ARGUMENT);
  CHECK(maps_dataset_keypoints(ds, 0, xy, vis, 5) == MAPS_ERR_INVALID_ARGUMENT);

  maps_dataset* missing = nullptr;
  CHECK(maps_dataset_open((root + "/nothing").c_str(), &missing) == MAPS_ERR_MISSING_ARTIFACT);
  CHECK(missing == nullptr);

  json tr = merged("train-source", {{"output_dir", root + "/src"}, {"source_data", root + "/data/source"},
                                    {"steps", 3}, {"batch_size", 2}, {"plots", false}});
  run("train-source", tr, &st);
  REQUIRE(st == MAPS_OK);

  REQUIRE(maps_dataset_seal((root + "/data/source").c_str()) == MAPS_OK);
  maps_dataset* sealed = nullptr;
  CHECK(maps_dataset_open((root + "/data/source").c_str(), &sealed) == MAPS_ERR_SEALED);

  json ad = merged("adapt", {{"output_dir", root + "/ad"}, {"source_checkpoint", root + "/src/source.ckpt"},
                             {"target_data", root + "/data/target"}, {"steps", 3}, {"batch_size", 2},
                             {"plots", false}});
  const json a = run("adapt", ad, &st);
  REQUIRE_MESSAGE(st == MAPS_OK, maps_last_error());
  CHECK(a["method"] == "maps");
  maps_dataset_unseal_all();

  maps_detector* det = nullptr;
  CHECK(maps_detector_load((root + "/nope.ckpt").c_str(), 1, &det) == MAPS_ERR_MISSING_ARTIFACT);
  REQUIRE(maps_detector_load((root + "/ad/maps.ckpt").c_str(), 1, &det) == MAPS_OK);
  CHECK(maps_detector_num_keypoints(det) == 6);
  double conf[6];
  CHECK(maps_detector_predict(det, ds, 1, xy, conf, 6) == MAPS_OK);
  CHECK(maps_detector_predict(det, ds, 1, xy, conf, 2) == MAPS_ERR_INVALID_ARGUMENT);
  char* report = nullptr;
  REQUIRE(maps_detector_evaluate(det, ds, 0.05, &report) == MAPS_OK);
  const json r = json::parse(take(report));
  CHECK(r["evaluated"].get<int>() > 0);
  CHECK(maps_detector_evaluate(det, ds, -1.0, &report) == MAPS_ERR_INVALID_ARGUMENT);

  maps_detector_free(det);
  maps_dataset_close(ds);
  maps_detector_free(nullptr);
  maps_dataset_close(nullptr);
}

TEST_CASE("run errors surface as status codes") {
  TempDir dir("capi_err");
  const std::string root = dir.path.string();
  maps_status st;
  run("adapt", merged("adapt", {{"output_dir", root + "/o"}, {"source_checkpoint", root + "/x.ckpt"},
                                {"target_data", root}}),
      &st);
  CHECK(st == MAPS_ERR_MISSING_ARTIFACT);
  CHECK(std::string(maps_last_error()).find("x.ckpt") != std::string::npos);
  run("generate", merged("generate", {{"output_dir", root + "/g"}, {"gap", 3.0}}), &st);
  CHECK(st == MAPS_ERR_CONFIG);
  char* s = nullptr;
  CHECK(maps_run("generate", "[]", 0, &s) == MAPS_ERR_CONFIG);
}
