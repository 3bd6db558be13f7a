// SPDX-License-Identifier: Apache-2.0
// Command-line front end; talks to the simulator only through the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vil/vil.h"

namespace {

enum Exit { kOk = 0, kConfigError = 1, kRuntimeAbort = 2, kDegraded = 3 };

int report_failure(vil_status s) {
  std::fprintf(stderr, "error (%s): %s\n", vil_status_name(s), vil_last_error());
  return s == VIL_ERR_CONFIG ? kConfigError : kRuntimeAbort;
}

void print_metrics(const vil_metrics& m) {
  std::printf("%-22s %.3f\n", "Max range L (m)", m.max_range);
  if (m.fixes == 0) {
    std::printf("%-22s N/A\n%-22s N/A\n%-22s N/A\n", "MAE / std pos. (m)", "MAE/L (%)", "MAE rot. (deg)");
  } else {
    std::printf("%-22s %.3f / %.3f\n", "MAE / std pos. (m)", m.mae_position, m.std_position);
    std::printf("%-22s %.2f\n", "MAE/L (%)", m.mae_over_l_percent);
    std::printf("%-22s %.2f\n", "MAE rot. (deg)", m.mae_rotation_deg);
  }
  std::printf("%-22s %.1f (%llu of %llu frames)\n", "Fix rate (%)", m.fix_rate_percent,
              static_cast<unsigned long long>(m.fixes), static_cast<unsigned long long>(m.vision_frames));
}

void print_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::fputs(ss.str().c_str(), stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vision-in-the-loop UAV simulator"};
  app.require_subcommand(1);

  std::string config, out_dir;
  auto* run = app.add_subcommand("run", "Run a scenario and write its run directory");
  run->add_option("config", config, "Scenario file")->required();
  run->add_option("--out", out_dir, "Override the output directory");

  auto* check = app.add_subcommand("check", "Validate a scenario file");
  check->add_option("config", config, "Scenario file")->required();

  std::string run_dir;
  auto* metrics = app.add_subcommand("metrics", "Pose accuracy metrics of a run");
  metrics->add_option("run-dir", run_dir)->required();

  std::string endpoint;
  int timeout_ms = 500;
  auto* replay = app.add_subcommand("replay", "Re-run detection and pose estimation on a run's frames");
  replay->add_option("run-dir", run_dir)->required();
  replay->add_option("--detector", endpoint, "Remote detector host:port (default: the run's detector)");
  replay->add_option("--timeout-ms", timeout_ms, "Remote detector timeout")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Write and print report.txt for a run");
  report->add_option("run-dir", run_dir)->required();

  std::string scene_arg, png_out = "frame.png";
  std::vector<double> pose_values;
  bool camera_pose = false;
  double pitch_deg = 10.0, spacing = 0.2;
  int threads = 0;
  auto* render = app.add_subcommand("render", "Render one frame (debug)");
  render->add_option("scene", scene_arg, "PLY file or 'synthetic'")->required();
  render->add_option("pose", pose_values, "x y z qw qx qy qz")->expected(7)->required();
  render->add_flag("--camera", camera_pose, "Pose is camera-to-world instead of the vehicle body pose");
  render->add_option("--pitch", pitch_deg, "Camera pitch-down for body poses (deg)");
  render->add_option("--spacing", spacing, "Splat spacing of the synthetic scene (m)");
  render->add_option("--threads", threads, "Render threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  render->add_option("-o,--out", png_out, "Output PNG");

  std::uint64_t cases = 1000000, seed = 1;
  auto* fuzz = app.add_subcommand("protocol-fuzz", "Feed generated malformed input to every decoder");
  fuzz->add_option("--cases", cases, "Number of generated inputs");
  fuzz->add_option("--seed", seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage errors count as configuration errors; --help still exits 0.
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  if (*run) {
    vil_run_summary s{};
    const vil_status st = vil_run_scenario(config.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(), &s);
    if (st != VIL_OK) return report_failure(st);
    std::printf("simulated %.2f s in %.1f s wall; %llu vision frames, %llu fixes, %llu dropped measurements\n",
                s.simulated_seconds, s.wall_seconds, static_cast<unsigned long long>(s.vision_frames),
                static_cast<unsigned long long>(s.fixes), static_cast<unsigned long long>(s.dropped_measurements));
    if (s.degraded) {
      std::printf("run completed degraded (vision outage or detector timeouts: %llu)\n",
                  static_cast<unsigned long long>(s.detector_timeouts));
      return kDegraded;
    }
    return kOk;
  }
  if (*check) {
    const vil_status st = vil_config_check(config.c_str());
    if (st != VIL_OK) return report_failure(st);
    std::printf("%s: ok\n", config.c_str());
    return kOk;
  }
  if (*metrics) {
    vil_metrics m{};
    const vil_status st = vil_compute_metrics(run_dir.c_str(), &m);
    if (st != VIL_OK) return report_failure(st);
    print_metrics(m);
    return kOk;
  }
  if (*replay) {
    vil_metrics m{};
    std::uint64_t frames = 0, timeouts = 0;
    const vil_status st = vil_replay(run_dir.c_str(), endpoint.empty() ? nullptr : endpoint.c_str(), timeout_ms, &m,
                                     &frames, &timeouts);
    if (st != VIL_OK) return report_failure(st);
    std::printf("replayed %llu frames (%llu detector timeouts); log: %s/replay/vision.csv\n",
                static_cast<unsigned long long>(frames), static_cast<unsigned long long>(timeouts), run_dir.c_str());
    print_metrics(m);
    return timeouts > 0 ? kDegraded : kOk;
  }
  if (*report) {
    int partial = 0;
    const vil_status st = vil_report(run_dir.c_str(), &partial, nullptr);
    if (st != VIL_OK) return report_failure(st);
    print_file(run_dir + "/report.txt");
    return partial ? kDegraded : kOk;
  }
  if (*render) {
    vil_scene* scene = nullptr;
    vil_status st = scene_arg == "synthetic" ? vil_scene_synthetic_ship(spacing, 1, 1, &scene)
                                             : vil_scene_load(scene_arg.c_str(), &scene);
    if (st != VIL_OK) return report_failure(st);
    vil_intrinsics k;
    vil_intrinsics_default(&k);
    vil_pose pose{{pose_values[0], pose_values[1], pose_values[2]},
                  {pose_values[3], pose_values[4], pose_values[5], pose_values[6]}};
    vil_frame* frame = nullptr;
    st = camera_pose ? vil_render(scene, &k, &pose, threads, &frame)
                     : vil_render_body(scene, &k, &pose, pitch_deg, threads, &frame);
    if (st == VIL_OK) st = vil_frame_save_png(frame, png_out.c_str());
    vil_frame_free(frame);
    const std::size_t n = vil_scene_size(scene);
    vil_scene_free(scene);
    if (st != VIL_OK) return report_failure(st);
    std::printf("rendered %zu splats to %s\n", n, png_out.c_str());
    return kOk;
  }
  if (*fuzz) {
    vil_fuzz_stats s{};
    const vil_status st = vil_protocol_fuzz(cases, seed, &s);
    if (st != VIL_OK) return report_failure(st);
    std::printf("cases %llu: malformed rejected %llu/%llu, valid accepted %llu/%llu, unlabeled %llu, crashes %llu\n",
                static_cast<unsigned long long>(s.cases), static_cast<unsigned long long>(s.malformed_rejected),
                static_cast<unsigned long long>(s.malformed), static_cast<unsigned long long>(s.valid_accepted),
                static_cast<unsigned long long>(s.valid), static_cast<unsigned long long>(s.unlabeled),
                static_cast<unsigned long long>(s.unexpected_exceptions));
    const bool ok = s.malformed_rejected == s.malformed && s.valid_accepted == s.valid && s.unexpected_exceptions == 0;
    return ok ? kOk : kRuntimeAbort;
  }
  return kOk;
}
