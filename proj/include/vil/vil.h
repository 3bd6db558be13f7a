/* SPDX-License-Identifier: Apache-2.0 */
#ifndef VIL_VIL_H
#define VIL_VIL_H

/*
 * C interface to the vision-in-the-loop simulator. Every call returns a
 * vil_status; on failure vil_last_error() describes the cause (per thread,
 * valid until the next failing call on that thread). Objects are opaque and
 * released with the matching *_free function.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(VIL_BUILDING_SHARED)
#    define VIL_API __declspec(dllexport)
#  else
#    define VIL_API __declspec(dllimport)
#  endif
#else
#  define VIL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vil_status {
  VIL_OK = 0,
  VIL_ERR_INVALID_ARGUMENT = 1,
  VIL_ERR_CONFIG = 2,
  VIL_ERR_IO = 3,
  VIL_ERR_PROTOCOL = 4,
  VIL_ERR_DEGENERATE = 5,
  VIL_ERR_RUNTIME = 6
} vil_status;

VIL_API const char* vil_last_error(void);
VIL_API const char* vil_status_name(vil_status s);
VIL_API const char* vil_version(void);

typedef struct vil_intrinsics {
  int width;
  int height;
  double fx, fy, cx, cy;
} vil_intrinsics;

/* position in meters, quaternion (w, x, y, z); need not be normalized */
typedef struct vil_pose {
  double position[3];
  double quaternion[4];
} vil_pose;

VIL_API void vil_intrinsics_default(vil_intrinsics* out);

/* --- scenes and rendering ------------------------------------------------ */

typedef struct vil_scene vil_scene;
typedef struct vil_frame vil_frame;

VIL_API vil_status vil_scene_load(const char* ply_path, vil_scene** out);
VIL_API vil_status vil_scene_synthetic_ship(double spacing_m, int with_sea, uint64_t seed, vil_scene** out);
VIL_API vil_status vil_scene_random(size_t count, uint64_t seed, const double region_min[3],
                                    const double region_max[3], vil_scene** out);
VIL_API size_t vil_scene_size(const vil_scene* scene);
VIL_API void vil_scene_free(vil_scene* scene);

/* camera_to_world: optical axis +z, image x right, y down. threads 0 = all cores. */
VIL_API vil_status vil_render(const vil_scene* scene, const vil_intrinsics* k, const vil_pose* camera_to_world,
                              int threads, vil_frame** out);
/* body_pose: z-up vehicle pose; the camera looks along body +x pitched down by pitch_deg. */
VIL_API vil_status vil_render_body(const vil_scene* scene, const vil_intrinsics* k, const vil_pose* body_pose,
                                   double pitch_deg, int threads, vil_frame** out);
VIL_API int vil_frame_width(const vil_frame* f);
VIL_API int vil_frame_height(const vil_frame* f);
/* width * height * 3 bytes, row-major RGB8 */
VIL_API const uint8_t* vil_frame_pixels(const vil_frame* f);
VIL_API vil_status vil_frame_save_png(const vil_frame* f, const char* path);
VIL_API void vil_frame_free(vil_frame* f);

/* --- pose estimation ----------------------------------------------------- */

/* model_xyz: n x 3, pixels_uv: n x 2. Writes the model-to-camera pose. */
VIL_API vil_status vil_epnp_solve(const double* model_xyz, const double* pixels_uv, size_t n, const vil_intrinsics* k,
                                  vil_pose* model_to_camera, double* reprojection_rms);

/* --- experiment harness -------------------------------------------------- */

typedef struct vil_run_summary {
  double simulated_seconds;
  uint64_t vision_frames;
  uint64_t fixes;
  uint64_t dropped_measurements;
  uint64_t detector_timeouts;
  int degraded;
  double wall_seconds;
} vil_run_summary;

typedef struct vil_metrics {
  double max_range;
  double mae_position;
  double std_position;
  double mae_over_l_percent;
  double mae_rotation_deg;
  double fix_rate_percent;
  uint64_t vision_frames;
  uint64_t fixes;
} vil_metrics;

/* Validates a scenario file without running it. */
VIL_API vil_status vil_config_check(const char* config_path);
/* output_dir may be NULL to use the one in the config. */
VIL_API vil_status vil_run_scenario(const char* config_path, const char* output_dir, vil_run_summary* out);
VIL_API vil_status vil_compute_metrics(const char* run_dir, vil_metrics* out);
VIL_API vil_status vil_mae_over_l_percent(double mae, double max_range, double* out);
/* remote_endpoint "host:port" or NULL to reuse the run's detector. */
VIL_API vil_status vil_replay(const char* run_dir, const char* remote_endpoint, int timeout_ms, vil_metrics* out,
                              uint64_t* frames, uint64_t* detector_timeouts);
/* Writes report.txt; partial (may be NULL) is set when the run has no completion marker. */
VIL_API vil_status vil_report(const char* run_dir, int* partial, double* band_coverage);

typedef struct vil_fuzz_stats {
  uint64_t cases;
  uint64_t malformed;
  uint64_t malformed_rejected;
  uint64_t valid;
  uint64_t valid_accepted;
  uint64_t unlabeled;
  uint64_t unexpected_exceptions;
} vil_fuzz_stats;

VIL_API vil_status vil_protocol_fuzz(uint64_t cases, uint64_t seed, vil_fuzz_stats* out);

#ifdef __cplusplus
}
#endif

#endif /* VIL_VIL_H */
