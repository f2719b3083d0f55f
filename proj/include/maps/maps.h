/* C interface to the keypoint adaptation library. All functions are
 * thread-compatible; maps_last_error is per thread. Strings returned through
 * char** must be released with maps_string_free. */
#ifndef MAPS_MAPS_H
#define MAPS_MAPS_H

#include <stddef.h>

#if defined(MAPS_BUILDING_LIBRARY)
#define MAPS_API __attribute__((visibility("default")))
#else
#define MAPS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum maps_status {
  MAPS_OK = 0,
  MAPS_ERR_INVALID_ARGUMENT = 1,
  MAPS_ERR_CONFIG = 2,
  MAPS_ERR_DIVERGENCE = 3,
  MAPS_ERR_MISSING_ARTIFACT = 4,
  MAPS_ERR_CORRUPT = 5,
  MAPS_ERR_STATE = 6,
  MAPS_ERR_SEALED = 7,
  MAPS_ERR_IO = 8,
  MAPS_ERR_INTERNAL = 9
} maps_status;

typedef struct maps_dataset maps_dataset;
typedef struct maps_detector maps_detector;

MAPS_API const char* maps_version(void);
MAPS_API const char* maps_last_error(void);
MAPS_API void maps_string_free(char* text);

/* Process exit code for a status: 0 ok, 2 config, 3 divergence,
 * 4 missing artifact, 5 corrupt dataset, 1 anything else. */
MAPS_API int maps_exit_code(maps_status status);

/* JSON array of the accepted configuration keys. */
MAPS_API maps_status maps_config_keys(char** keys_json);

/* Defaults for `command`, then the JSON file at `config_path` (may be NULL
 * or empty), then `overrides_json` (may be NULL). Returns the merged config. */
MAPS_API maps_status maps_config_resolve(const char* command, const char* config_path, const char* overrides_json,
                                         char** merged_json);

/* Runs generate, train-source, adapt or evaluate with a merged config.
 * Progress lines go to stdout when `progress` is non-zero. */
MAPS_API maps_status maps_run(const char* command, const char* config_json, int progress, char** summary_json);

MAPS_API maps_status maps_dataset_open(const char* path, maps_dataset** out);
MAPS_API void maps_dataset_close(maps_dataset* dataset);
MAPS_API size_t maps_dataset_size(const maps_dataset* dataset);
MAPS_API int maps_dataset_image_size(const maps_dataset* dataset);
MAPS_API int maps_dataset_num_keypoints(const maps_dataset* dataset);
/* xy receives 2*k doubles, visible k bytes (either may be NULL). */
MAPS_API maps_status maps_dataset_keypoints(const maps_dataset* dataset, size_t index, double* xy,
                                            unsigned char* visible, size_t k);

/* After sealing, opening any dataset under `path` fails with MAPS_ERR_SEALED. */
MAPS_API maps_status maps_dataset_seal(const char* path);
MAPS_API void maps_dataset_unseal_all(void);

/* use_teacher selects the EMA teacher when the checkpoint carries one. */
MAPS_API maps_status maps_detector_load(const char* checkpoint_path, int use_teacher, maps_detector** out);
MAPS_API void maps_detector_free(maps_detector* detector);
MAPS_API int maps_detector_num_keypoints(const maps_detector* detector);
MAPS_API maps_status maps_detector_predict(const maps_detector* detector, const maps_dataset* dataset, size_t index,
                                           double* xy, double* confidence, size_t k);
MAPS_API maps_status maps_detector_evaluate(const maps_detector* detector, const maps_dataset* dataset,
                                            double fraction, char** report_json);

#ifdef __cplusplus
}
#endif

#endif
