// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "vil/error.hpp"
#include "vil/harness.hpp"
#include "vision_log.hpp"

namespace vil::harness {

ReplaySummary replay_offline(const std::filesystem::path& run_dir, const ReplayOptions& opts) {
  namespace fs = std::filesystem;
  const fs::path snapshot = run_dir / "config.snapshot";
  const fs::path sidecar_path = run_dir / "frames" / "truth.csv";
  if (!fs::exists(snapshot)) throw IoError(fmt::format("'{}' has no config.snapshot", run_dir.string()));
  if (!fs::exists(sidecar_path)) throw IoError(fmt::format("'{}' has no frame sidecar (frames/truth.csv)", run_dir.string()));

  std::ifstream in(snapshot);
  std::stringstream ss;
  ss << in.rdbuf();
  const ScenarioConfig cfg = parse_config(ss.str());

  const CsvTable side = read_csv(sidecar_path);
  const std::size_t ct = side.column("timestamp"), ci = side.column("frame_index"), cv = side.column("vision"),
                    cx = side.column("x"), cqw = side.column("qw");
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(run_dir / "frames")) {
    if (e.path().extension() == ".png") ++pngs;
  }
  if (pngs != side.rows.size()) {
    throw IoError(fmt::format("frame dump has {} images but the sidecar lists {}", pngs, side.rows.size()));
  }

  const pose::ShipModel ship =
      cfg.ship_model_path.empty() ? pose::default_ship_model() : pose::load_ship_model(cfg.ship_model_path);
  std::unique_ptr<pose::Detector> detector;
  net::RemoteDetector* remote = nullptr;
  if (opts.remote_endpoint || cfg.detector.kind == DetectorKind::remote) {
    const auto [host, port] = net::parse_endpoint(opts.remote_endpoint ? *opts.remote_endpoint : cfg.detector.endpoint);
    const int timeout = opts.remote_endpoint ? opts.timeout_ms : cfg.detector.timeout_ms;
    auto r = std::make_unique<net::RemoteDetector>(host, port, std::chrono::milliseconds(timeout), cfg.detector.format);
    remote = r.get();
    detector = std::move(r);
  } else {
    detector = std::make_unique<pose::OracleDetector>(ship, cfg.intrinsics, cfg.detector.oracle);
  }

  const Pose extrinsic = cfg.camera_extrinsic();
  const Pose extrinsic_inv = inverse(extrinsic);
  fs::create_directories(run_dir / "replay");
  ReplaySummary summary;
  summary.output = run_dir / "replay" / "vision.csv";
  CsvWriter log(summary.output, detail::kVisionHeader);

  std::vector<PoseSample> truth;
  std::vector<VisionSample> vision;
  for (const auto& r : side.rows) {
    PoseSample ts;
    ts.t = r[ct];
    ts.position = Vec3(r[cx], r[cx + 1], r[cx + 2]);
    ts.rotation = Rotation::from_quaternion(r[cqw], r[cqw + 1], r[cqw + 2], r[cqw + 3]);
    truth.push_back(ts);
    if (r[cv] == 0.0) continue;

    const auto index = static_cast<std::size_t>(r[ci]);
    const fs::path png = run_dir / "frames" / fmt::format("{:06d}.png", index);
    if (!fs::exists(png)) throw IoError(fmt::format("frame {} listed in the sidecar is missing", png.string()));
    splat::Frame frame = splat::read_png(png);
    if (frame.width != cfg.intrinsics.width || frame.height != cfg.intrinsics.height) {
      throw IoError(fmt::format("frame {} size does not match the camera", png.string()));
    }
    frame.timestamp = ts.t;
    frame.camera_pose = compose(Pose{ts.position, ts.rotation}, extrinsic);

    const pose::PipelineResult res = pose::estimate_from_frame(frame, *detector, ship, cfg.intrinsics, cfg.estimator.fusion);
    const auto row = detail::vision_row(ts.t, res, extrinsic_inv);
    log.row(row);
    ++summary.frames;
    VisionSample v;
    v.t = ts.t;
    v.fix = res.estimate.has_value();
    if (v.fix) {
      ++summary.fixes;
      v.pose.t = ts.t;
      v.pose.position = Vec3(row[3], row[4], row[5]);
      v.pose.rotation = Rotation::from_quaternion(row[6], row[7], row[8], row[9]);
    }
    vision.push_back(v);
  }
  log.flush();
  if (vision.empty()) throw IoError("frame dump holds no vision frames");
  if (remote) summary.detector_timeouts = remote->counters().timeouts;
  summary.metrics = compute_metrics(truth, vision);
  return summary;
}

}  // namespace vil::harness
