// SPDX-License-Identifier: Apache-2.0
#include "vil/vil.h"

#include <new>
#include <string>

#include "vil/error.hpp"
#include "vil/harness.hpp"
#include "vil/netlink.hpp"
#include "vil/posepipe.hpp"
#include "vil/splat.hpp"

struct vil_scene {
  vil::splat::SceneModel model;
};

struct vil_frame {
  vil::splat::Frame frame;
};

namespace {

thread_local std::string g_last_error;

vil_status fail(vil_status s, const char* what) {
  g_last_error = what;
  return s;
}

/// Runs `f`, translating exceptions into status codes.
template <typename F>
vil_status guarded(F&& f) {
  try {
    f();
    return VIL_OK;
  } catch (const vil::ConfigError& e) {
    return fail(VIL_ERR_CONFIG, e.what());
  } catch (const vil::InvalidArgument& e) {
    return fail(VIL_ERR_INVALID_ARGUMENT, e.what());
  } catch (const vil::IoError& e) {
    return fail(VIL_ERR_IO, e.what());
  } catch (const vil::ProtocolError& e) {
    return fail(VIL_ERR_PROTOCOL, e.what());
  } catch (const vil::DegenerateError& e) {
    return fail(VIL_ERR_DEGENERATE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(VIL_ERR_RUNTIME, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(VIL_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(VIL_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(VIL_ERR_RUNTIME, "unknown error");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw vil::InvalidArgument(what);
}

vil::Intrinsics to_intrinsics(const vil_intrinsics* k) {
  vil::Intrinsics out;
  if (k) out = {k->width, k->height, k->fx, k->fy, k->cx, k->cy};
  out.validate();
  return out;
}

vil::Pose to_pose(const vil_pose* p) {
  vil::Pose out;
  out.position = vil::Vec3(p->position[0], p->position[1], p->position[2]);
  require(out.position.allFinite(), "pose position must be finite");
  out.rotation = vil::Rotation::from_quaternion(p->quaternion[0], p->quaternion[1], p->quaternion[2], p->quaternion[3]);
  return out;
}

void from_pose(const vil::Pose& p, vil_pose* out) {
  for (int i = 0; i < 3; ++i) out->position[i] = p.position[i];
  const auto q = p.rotation.wxyz();
  for (int i = 0; i < 4; ++i) out->quaternion[i] = q[i];
}

void from_metrics(const vil::harness::MetricsReport& m, vil_metrics* out) {
  out->max_range = m.max_range;
  out->mae_position = m.mae_position;
  out->std_position = m.std_position;
  out->mae_over_l_percent = m.mae_over_l_percent;
  out->mae_rotation_deg = m.mae_rotation_deg;
  out->fix_rate_percent = m.fix_rate_percent;
  out->vision_frames = m.vision_frames;
  out->fixes = m.fixes;
}

}  // namespace

extern "C" {

const char* vil_last_error(void) { return g_last_error.c_str(); }

const char* vil_status_name(vil_status s) {
  switch (s) {
    case VIL_OK: return "ok";
    case VIL_ERR_INVALID_ARGUMENT: return "invalid argument";
    case VIL_ERR_CONFIG: return "config error";
    case VIL_ERR_IO: return "i/o error";
    case VIL_ERR_PROTOCOL: return "protocol error";
    case VIL_ERR_DEGENERATE: return "degenerate input";
    case VIL_ERR_RUNTIME: return "runtime error";
  }
  return "unknown status";
}

const char* vil_version(void) { return "0.1.0"; }

void vil_intrinsics_default(vil_intrinsics* out) {
  if (!out) return;
  const vil::Intrinsics k;
  *out = {k.width, k.height, k.fx, k.fy, k.cx, k.cy};
}

vil_status vil_scene_load(const char* ply_path, vil_scene** out) {
  return guarded([&] {
    require(ply_path && out, "null argument");
    *out = new vil_scene{vil::splat::load_scene(ply_path)};
  });
}

vil_status vil_scene_synthetic_ship(double spacing_m, int with_sea, uint64_t seed, vil_scene** out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    require(spacing_m >= 0.02, "spacing must be at least 0.02 m");
    vil::harness::SceneSpec spec;
    spec.synthetic_spacing = spacing_m;
    spec.synthetic_sea = with_sea != 0;
    spec.seed = seed;
    *out = new vil_scene{vil::harness::synthetic_ship_scene(spec)};
  });
}

vil_status vil_scene_random(size_t count, uint64_t seed, const double region_min[3], const double region_max[3],
                            vil_scene** out) {
  return guarded([&] {
    require(region_min && region_max && out, "null argument");
    vil::splat::Aabb box{vil::Vec3(region_min[0], region_min[1], region_min[2]),
                         vil::Vec3(region_max[0], region_max[1], region_max[2])};
    *out = new vil_scene{vil::splat::random_scene(count, seed, box)};
  });
}

size_t vil_scene_size(const vil_scene* scene) { return scene ? scene->model.gaussians.size() : 0; }

void vil_scene_free(vil_scene* scene) { delete scene; }

vil_status vil_render(const vil_scene* scene, const vil_intrinsics* k, const vil_pose* camera_to_world, int threads,
                      vil_frame** out) {
  return guarded([&] {
    require(scene && camera_to_world && out, "null argument");
    require(threads >= 0, "threads must be >= 0");
    vil::splat::RenderOptions opts;
    opts.threads = threads;
    const vil::CameraModel cam{to_intrinsics(k), to_pose(camera_to_world)};
    *out = new vil_frame{vil::splat::rasterize(scene->model, cam, opts)};
  });
}

vil_status vil_render_body(const vil_scene* scene, const vil_intrinsics* k, const vil_pose* body_pose, double pitch_deg,
                           int threads, vil_frame** out) {
  return guarded([&] {
    require(scene && body_pose && out, "null argument");
    require(threads >= 0, "threads must be >= 0");
    vil::splat::RenderOptions opts;
    opts.threads = threads;
    *out = new vil_frame{vil::splat::render_at(scene->model, to_pose(body_pose), to_intrinsics(k),
                                               vil::forward_camera_extrinsic(vil::deg2rad(pitch_deg)), opts)};
  });
}

int vil_frame_width(const vil_frame* f) { return f ? f->frame.width : 0; }
int vil_frame_height(const vil_frame* f) { return f ? f->frame.height : 0; }
const uint8_t* vil_frame_pixels(const vil_frame* f) { return f ? f->frame.rgb.data() : nullptr; }

vil_status vil_frame_save_png(const vil_frame* f, const char* path) {
  return guarded([&] {
    require(f && path, "null argument");
    vil::splat::write_png(f->frame, path);
  });
}

void vil_frame_free(vil_frame* f) { delete f; }

vil_status vil_epnp_solve(const double* model_xyz, const double* pixels_uv, size_t n, const vil_intrinsics* k,
                          vil_pose* model_to_camera, double* reprojection_rms) {
  return guarded([&] {
    require(model_xyz && pixels_uv && model_to_camera, "null argument");
    std::vector<vil::pose::Correspondence> corr(n);
    for (size_t i = 0; i < n; ++i) {
      corr[i].model = vil::Vec3(model_xyz[3 * i], model_xyz[3 * i + 1], model_xyz[3 * i + 2]);
      corr[i].pixel = vil::Vec2(pixels_uv[2 * i], pixels_uv[2 * i + 1]);
    }
    const auto sol = vil::pose::epnp_solve(corr, to_intrinsics(k));
    from_pose(sol.pose, model_to_camera);
    if (reprojection_rms) *reprojection_rms = sol.reprojection_rms;
  });
}

vil_status vil_config_check(const char* config_path) {
  return guarded([&] {
    require(config_path != nullptr, "null argument");
    vil::harness::load_config(config_path);
  });
}

vil_status vil_run_scenario(const char* config_path, const char* output_dir, vil_run_summary* out) {
  return guarded([&] {
    require(config_path != nullptr, "null argument");
    auto cfg = vil::harness::load_config(config_path);
    if (output_dir) cfg.output_dir = output_dir;
    const auto s = vil::harness::run_scenario(cfg);
    if (out) {
      out->simulated_seconds = s.simulated_seconds;
      out->vision_frames = s.vision_frames;
      out->fixes = s.fixes;
      out->dropped_measurements = s.dropped_measurements;
      out->detector_timeouts = s.detector_timeouts;
      out->degraded = s.degraded ? 1 : 0;
      out->wall_seconds = s.wall_seconds;
    }
  });
}

vil_status vil_compute_metrics(const char* run_dir, vil_metrics* out) {
  return guarded([&] {
    require(run_dir && out, "null argument");
    from_metrics(vil::harness::metrics_for_run(run_dir), out);
  });
}

vil_status vil_mae_over_l_percent(double mae, double max_range, double* out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    *out = vil::harness::mae_over_l_percent(mae, max_range);
  });
}

vil_status vil_replay(const char* run_dir, const char* remote_endpoint, int timeout_ms, vil_metrics* out,
                      uint64_t* frames, uint64_t* detector_timeouts) {
  return guarded([&] {
    require(run_dir != nullptr, "null argument");
    vil::harness::ReplayOptions opts;
    if (remote_endpoint) opts.remote_endpoint = remote_endpoint;
    if (timeout_ms > 0) opts.timeout_ms = timeout_ms;
    const auto s = vil::harness::replay_offline(run_dir, opts);
    if (out) from_metrics(s.metrics, out);
    if (frames) *frames = s.frames;
    if (detector_timeouts) *detector_timeouts = s.detector_timeouts;
  });
}

vil_status vil_report(const char* run_dir, int* partial, double* band_coverage) {
  return guarded([&] {
    require(run_dir != nullptr, "null argument");
    const auto r = vil::harness::write_report(run_dir);
    if (partial) *partial = r.partial ? 1 : 0;
    if (band_coverage) *band_coverage = r.band_coverage;
  });
}

vil_status vil_protocol_fuzz(uint64_t cases, uint64_t seed, vil_fuzz_stats* out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    const auto s = vil::net::run_protocol_fuzz(cases, seed);
    *out = {s.cases, s.malformed, s.malformed_rejected, s.valid, s.valid_accepted, s.unlabeled, s.unexpected_exceptions};
  });
}

}  // extern "C"
