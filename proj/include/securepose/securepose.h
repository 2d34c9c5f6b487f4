#ifndef SECUREPOSE_H
#define SECUREPOSE_H

/* C interface to the securepose library.
 *
 * Every function returns an sp_status. On failure a message describing the
 * error is available from sp_last_error_message() on the same thread until the
 * next call. Strings returned through char** out-parameters are heap allocated
 * and must be released with sp_free_string(). Structured inputs and outputs
 * are UTF-8 JSON documents. */

#include <stdint.h>

#if defined(SECUREPOSE_BUILDING)
#define SP_API __attribute__((visibility("default")))
#else
#define SP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sp_status {
  SP_OK = 0,
  SP_ERR_INPUT = 1,
  SP_ERR_PARSE = 2,
  SP_ERR_SCHEMA = 3,
  SP_ERR_GEOMETRY = 4,
  SP_ERR_GAP = 5,
  SP_ERR_IO = 6,
  SP_ERR_CONTRACT = 7,
  SP_ERR_NOT_FOUND = 8,
  SP_ERR_CONFLICT = 9,
  SP_ERR_VALIDATION = 10,
  SP_ERR_NOT_READY = 11,
  SP_ERR_NO_PATIENT = 12,
  SP_ERR_STEP = 13,
  SP_ERR_PRIVACY = 14,
  SP_ERR_ALIGNMENT = 15,
  SP_ERR_UNDEFINED_AP = 16,
  SP_ERR_UNRECOVERABLE = 17,
  SP_ERR_STARTUP = 18,
  SP_ERR_INTERNAL = 19,
  SP_ERR_ARGUMENT = 20 /* null handle or pointer */
} sp_status;

typedef struct sp_project sp_project;
typedef struct sp_review_server sp_review_server;

SP_API const char* sp_version(void);
SP_API const char* sp_status_name(sp_status status);
/* Process exit code for a status: 0 ok, 2 input error, 3 step failure,
 * 4 privacy refusal. */
SP_API int sp_status_exit_code(sp_status status);
SP_API const char* sp_last_error_message(void);
SP_API void sp_free_string(char* s);

/* Projects. options_json for create:
 *   {"name", "input_dir", "output_dir", "metadata_dir"?, "stems"?: [...], "settings"?: {...}}
 * Settings keys: track_threshold, conf_threshold, presence_threshold,
 * scope ("face"|"body"), targets ("patient"|"all"), style ("solid"|"gaussian"),
 * allow_gaps, fps, transcoder. */
SP_API sp_status sp_project_create(const char* options_json, sp_project** out);
SP_API sp_status sp_project_load(const char* config_path, sp_project** out);
SP_API void sp_project_close(sp_project* project);

SP_API sp_status sp_project_config_json(const sp_project* project, char** out_json);
SP_API sp_status sp_project_config_path(const sp_project* project, char** out_path);
/* Merges the given keys into the current settings; affected steps are
 * invalidated. */
SP_API sp_status sp_project_update_settings(sp_project* project, const char* settings_json);

/* stem and stop_after may be NULL. The run report lists each step with a
 * summary. On a step failure the report is not produced and the status is
 * SP_ERR_STEP; sp_project_failure_cause() gives the underlying status. */
SP_API sp_status sp_project_run(sp_project* project, const char* stem, const char* stop_after,
                                char** out_report_json);
SP_API sp_status sp_project_failure_cause(void);

/* request_json: {"dest", "stem"?, "blurred_video"?, "backup"?, "keypoints"?,
 * "format"?: "csv"|"json", "variants"?: ["raw","interpolated"], "detections"?,
 * "skip_quality_check"?}. out_written_json lists written paths. */
SP_API sp_status sp_project_export(sp_project* project, const char* request_json, char** out_written_json);

SP_API sp_status sp_project_signoff(sp_project* project, const char* stem);
/* patient_id < 0 clears the override. Invalidates identify and later steps. */
SP_API sp_status sp_project_set_patient(sp_project* project, const char* stem, int64_t patient_id);

/* Standalone operations on directories. Each writes its outputs and returns a
 * JSON report. Geometry is given either as "frames_dir" or as "width",
 * "height" and "frame_count" (frame_count defaults to the pose files).
 *
 * track:       {"pose_dir", "out_dir", "threshold"?, geometry}
 * interpolate: {"pose_dir", "out_dir", "scope"?, "threshold"?}
 * identify:    {"pose_dir", "presence"?, geometry}
 * blur:        {"pose_dir", "frames_dir", "out_dir", "targets"?, "style"?,
 *               "patient"?, "presence"?, "conf_threshold"?, "overrides"?}
 * eval:        {"gt", "det", "iou"?, "pr_curve"?} */
SP_API sp_status sp_track(const char* options_json, char** out_report_json);
SP_API sp_status sp_interpolate(const char* options_json, char** out_report_json);
SP_API sp_status sp_identify(const char* options_json, char** out_report_json);
SP_API sp_status sp_blur(const char* options_json, char** out_report_json);
SP_API sp_status sp_evaluate(const char* options_json, char** out_report_json);

/* Review service. port 0 picks a free port; static_dir may be NULL. */
SP_API sp_status sp_review_start(sp_project* project, const char* bind_address, int port, const char* static_dir,
                                 sp_review_server** out);
SP_API int sp_review_port(const sp_review_server* server);
SP_API void sp_review_wait(sp_review_server* server);
SP_API void sp_review_stop(sp_review_server* server);
SP_API void sp_review_close(sp_review_server* server);

#ifdef __cplusplus
}
#endif

#endif
