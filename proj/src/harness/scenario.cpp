// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <random>

#include <fmt/format.h>

#include "vil/error.hpp"
#include "vil/harness.hpp"
#include "vision_log.hpp"

namespace vil::harness {
namespace {

/// Part colors, loosely navy greys so neighbouring parts stay distinguishable.
const Vec3 kPartRgb[] = {{0.45, 0.47, 0.50}, {0.30, 0.32, 0.30}, {0.62, 0.63, 0.66},
                         {0.72, 0.73, 0.75}, {0.20, 0.20, 0.22}, {0.52, 0.54, 0.58}};

void add_face(std::vector<splat::BlobSpec>& out, const Vec3& lo, const Vec3& hi, int axis, double at,
              double spacing, const Vec3& rgb, std::mt19937_64& rng) {
  const int a = (axis + 1) % 3, b = (axis + 2) % 3;
  const int na = std::max(1, static_cast<int>(std::ceil((hi[a] - lo[a]) / spacing)));
  const int nb = std::max(1, static_cast<int>(std::ceil((hi[b] - lo[b]) / spacing)));
  const double da = (hi[a] - lo[a]) / na, db = (hi[b] - lo[b]) / nb;
  Rotation orient;  // local z along the face normal
  if (axis == 0) orient = Rotation::about_y(kPi / 2);
  else if (axis == 1) orient = Rotation::about_x(-kPi / 2);
  std::uniform_real_distribution<double> jitter(-0.04, 0.04);
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < nb; ++j) {
      splat::BlobSpec s;
      s.position[axis] = at;
      s.position[a] = lo[a] + (i + 0.5) * da;
      s.position[b] = lo[b] + (j + 0.5) * db;
      s.orientation = orient;
      s.scale = Vec3(0.6 * std::max(da, db), 0.6 * std::max(da, db), 0.01);
      s.opacity = 0.95;
      const double shade = jitter(rng);
      s.rgb = (rgb + Vec3::Constant(shade)).cwiseMax(0.0).cwiseMin(1.0);
      out.push_back(s);
    }
  }
}

Pose renormalized(const Pose& p) {
  const auto q = p.rotation.wxyz();
  return {p.position, Rotation::from_quaternion(q[0], q[1], q[2], q[3])};
}

}  // namespace

splat::SceneModel synthetic_ship_scene(const SceneSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::vector<splat::BlobSpec> blobs;
  const auto boxes = pose::default_part_boxes();
  for (std::size_t p = 0; p < boxes.size(); ++p) {
    const auto& [lo, hi] = boxes[p];
    const Vec3 rgb = kPartRgb[p % 6];
    for (int axis = 0; axis < 3; ++axis) {
      add_face(blobs, lo, hi, axis, hi[axis], spec.synthetic_spacing, rgb, rng);
      if (axis != 2) add_face(blobs, lo, hi, axis, lo[axis], spec.synthetic_spacing, rgb, rng);
    }
  }
  if (spec.synthetic_sea) {
    add_face(blobs, Vec3(-25.0, -15.0, -1.5), Vec3(25.0, 15.0, -1.5), 2, -1.5, 1.0, Vec3(0.12, 0.24, 0.38), rng);
  }
  splat::SceneModel scene = splat::generate_test_scene(blobs);
  scene.source = fmt::format("synthetic ship ({} splats, spacing {} m)", blobs.size(), spec.synthetic_spacing);
  return scene;
}

RunSummary run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto wall0 = std::chrono::steady_clock::now();

  const splat::SceneModel scene = cfg.scene.path.empty() ? synthetic_ship_scene(cfg.scene) : splat::load_scene(cfg.scene.path);
  const pose::ShipModel ship = cfg.ship_model_path.empty() ? pose::default_ship_model() : pose::load_ship_model(cfg.ship_model_path);
  ship.validate();
  std::unique_ptr<pose::Detector> detector;
  if (cfg.detector.kind == DetectorKind::oracle) {
    detector = std::make_unique<pose::OracleDetector>(ship, cfg.intrinsics, cfg.detector.oracle);
  } else {
    const auto [host, port] = net::parse_endpoint(cfg.detector.endpoint);
    detector = std::make_unique<net::RemoteDetector>(host, port, std::chrono::milliseconds(cfg.detector.timeout_ms),
                                                     cfg.detector.format);
  }

  namespace fs = std::filesystem;
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  fs::remove(out / "run.status");
  fs::remove(out / "report.txt");
  fs::remove_all(out / "frames");
  fs::remove_all(out / "replay");
  if (cfg.rates.frame_log_fps > 0) fs::create_directories(out / "frames");
  {
    std::ofstream snap(out / "config.snapshot");
    snap << config_to_text(cfg);
    if (!snap) throw IoError("cannot write config.snapshot");
  }

  const vehicle::ReferenceTrajectory traj = vehicle::make_trajectory(cfg.trajectory);
  const double duration = cfg.effective_duration();
  const int hz = cfg.rates.dynamics_hz;
  const double dt = 1.0 / hz;
  const long long steps = std::llround(duration * hz);
  const int pose_div = hz / cfg.rates.pose_stream_hz;
  const int vision_div = hz / cfg.rates.vision_hz;
  const int frame_div = cfg.rates.frame_log_fps > 0 ? hz / cfg.rates.frame_log_fps : 0;

  StateVector truth;
  truth.pose = {traj.at(0.0).position, Rotation::about_z(cfg.trajectory.yaw)};
  truth.timestamp = 0.0;

  vehicle::ImuModel imu(cfg.imu, cfg.imu_seed, cfg.vehicle.gravity);
  est::FilterState init;
  init.nominal.position = truth.pose.position;
  init.nominal.attitude = truth.pose.rotation;
  init.timestamp = 0.0;
  const auto& ec = cfg.estimator;
  est::Vec15 var;
  var << Vec3::Constant(ec.init_position_sigma * ec.init_position_sigma),
      Vec3::Constant(ec.init_velocity_sigma * ec.init_velocity_sigma),
      Vec3::Constant(ec.init_attitude_sigma * ec.init_attitude_sigma),
      Vec3::Constant(ec.init_gyro_bias_sigma * ec.init_gyro_bias_sigma),
      Vec3::Constant(ec.init_accel_bias_sigma * ec.init_accel_bias_sigma);
  init.P = var.asDiagonal();
  est::DelayedFilter filter(init, ec.filter);

  net::LoopbackLink link;
  net::PoseStreamSender sender(link);
  net::PoseStreamReceiver receiver(link);
  // `received` is logged; `streamed` is what a reader of that log reconstructs,
  // so offline replay sees bit-identical poses.
  Pose received = truth.pose;
  Pose streamed = renormalized(received);

  CsvWriter truth_log(out / "truth.csv", {"t", "x", "y", "z", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz"});
  CsvWriter est_log(out / "estimate.csv", {"t", "x", "y", "z", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "sx", "sy", "sz"});
  CsvWriter vision_log(out / "vision.csv", detail::kVisionHeader);
  std::optional<CsvWriter> sidecar;
  if (frame_div) sidecar.emplace(out / "frames" / "truth.csv",
                                 std::vector<std::string>{"timestamp", "frame_index", "x", "y", "z", "qw", "qx", "qy", "qz", "vision"});

  const Pose extrinsic = cfg.camera_extrinsic();
  const Pose extrinsic_inv = inverse(extrinsic);
  splat::RenderOptions ropts;
  ropts.threads = cfg.render_threads;

  RunSummary summary;
  summary.run_dir = out;
  std::deque<est::PoseMeasurement> pending;
  std::size_t frame_index = 0;

  for (long long k = 0;; ++k) {
    const double t = static_cast<double>(k) * dt;

    if (k % pose_div == 0) {
      sender.send(truth, static_cast<std::uint32_t>(frame_index));
      while (auto m = receiver.receive()) {
        received = m->pose;
        streamed = renormalized(received);
      }
      const auto q = truth.pose.rotation.wxyz();
      const Vec3& p = truth.pose.position;
      truth_log.row({t, p.x(), p.y(), p.z(), q[0], q[1], q[2], q[3], truth.velocity.x(), truth.velocity.y(),
                     truth.velocity.z(), truth.angular_velocity.x(), truth.angular_velocity.y(),
                     truth.angular_velocity.z()});
    }

    const bool vision_tick = k % vision_div == 0;
    const bool frame_tick = frame_div && k % frame_div == 0;
    if (vision_tick || frame_tick) {
      const splat::Frame frame = splat::render_at(scene, streamed, cfg.intrinsics, extrinsic, ropts, t);
      if (frame_tick) {
        splat::write_png(frame, out / "frames" / fmt::format("{:06d}.png", frame_index));
        const auto q = received.rotation.wxyz();
        sidecar->row({t, static_cast<double>(frame_index), received.position.x(), received.position.y(),
                      received.position.z(), q[0], q[1], q[2], q[3], vision_tick ? 1.0 : 0.0});
        ++frame_index;
      }
      if (vision_tick) {
        ++summary.vision_frames;
        const pose::PipelineResult res =
            pose::estimate_from_frame(frame, *detector, ship, cfg.intrinsics, ec.fusion);
        vision_log.row(detail::vision_row(t, res, extrinsic_inv));
        if (res.estimate) {
          ++summary.fixes;
          est::PoseMeasurement m;
          m.pose = detail::body_from_fix(*res.estimate, extrinsic_inv);
          m.position_cov = res.estimate->position_cov;
          m.rotation_sigma = ec.rotation_sigma0 / std::max(res.estimate->rotation_conf, 1e-3);
          m.capture_timestamp = filter.state().timestamp;
          m.arrival_timestamp = t + ec.latency;
          pending.push_back(m);
        } else {
          filter.handle_no_fix(filter.state().timestamp);
        }
      }
    }

    while (!pending.empty() && pending.front().arrival_timestamp <= t + 0.5 * dt) {
      try {
        filter.update_delayed(pending.front());
      } catch (const DegenerateError& e) {
        fmt::print(stderr, "warning: vision measurement at {:.3f}s skipped: {}\n", pending.front().capture_timestamp, e.what());
      }
      pending.pop_front();
    }

    if (k % pose_div == 0) {
      const auto& fs = filter.state();
      const auto q = fs.nominal.attitude.wxyz();
      const Vec3& p = fs.nominal.position;
      const Vec3& v = fs.nominal.velocity;
      est_log.row({t, p.x(), p.y(), p.z(), q[0], q[1], q[2], q[3], v.x(), v.y(), v.z(), std::sqrt(fs.P(0, 0)),
                   std::sqrt(fs.P(1, 1)), std::sqrt(fs.P(2, 2))});
    }

    if (k == steps) break;

    StateVector input = cfg.control == ControlSource::truth ? truth : filter.state_vector();
    input.timestamp = t;
    const vehicle::ControlOutput ctl = vehicle::geometric_control(input, traj.at(t), cfg.vehicle);
    const Vec3 accel = vehicle::state_derivative(truth, ctl.command, cfg.vehicle).acceleration;
    vehicle::ImuSample sample = imu.sample(truth, accel, dt);
    sample.timestamp = t;
    filter.predict(sample, dt);
    truth = vehicle::dynamics_step(truth, ctl.command, dt, cfg.vehicle);
    truth.timestamp = static_cast<double>(k + 1) * dt;
    if (!truth.finite()) throw Error(fmt::format("vehicle state diverged at t = {:.3f}s", t));
  }

  truth_log.flush();
  est_log.flush();
  vision_log.flush();
  if (sidecar) sidecar->flush();

  summary.simulated_seconds = static_cast<double>(steps) * dt;
  summary.dropped_measurements = filter.dropped_measurements();
  summary.stream_malformed = receiver.counters().malformed;
  if (auto* remote = dynamic_cast<net::RemoteDetector*>(detector.get())) summary.detector_timeouts = remote->counters().timeouts;
  summary.degraded = filter.ever_degraded() || summary.detector_timeouts > 0;
  {
    std::ofstream status(out / "run.status");
    status << (summary.degraded ? "degraded\n" : "complete\n");
  }
  write_report(out);
  summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return summary;
}

}  // namespace vil::harness
