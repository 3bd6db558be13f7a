// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vil/camera.hpp"
#include "vil/estimator.hpp"
#include "vil/netlink.hpp"
#include "vil/posepipe.hpp"
#include "vil/splat.hpp"
#include "vil/vehicle.hpp"

namespace vil::harness {

enum class ControlSource { truth, vision };
enum class DetectorKind { oracle, remote };

struct SceneSpec {
  /// PLY file; empty selects the built-in synthetic ship.
  std::filesystem::path path;
  double synthetic_spacing = 0.2;  // m between surface splats
  bool synthetic_sea = true;
  std::uint64_t seed = 1;
};

struct RateConfig {
  int dynamics_hz = 1000;
  int pose_stream_hz = 200;
  int vision_hz = 10;
  /// Frames written to frames/; 0 disables the dump.
  int frame_log_fps = 10;
};

struct DetectorConfig {
  DetectorKind kind = DetectorKind::oracle;
  pose::OracleNoise oracle;
  std::string endpoint;  // host:port
  int timeout_ms = 500;
  net::PixelFormat format = net::PixelFormat::raw_rgb8;
};

struct EstimatorConfig {
  est::DelayedFilterConfig filter;
  pose::FusionConfig fusion;
  /// Capture-to-arrival delay of vision measurements (s).
  double latency = 0.1;
  /// Attitude std. dev. of a confidence-1 vision fix (rad).
  double rotation_sigma0 = 0.02;
  double init_position_sigma = 0.05;
  double init_velocity_sigma = 0.05;
  double init_attitude_sigma = 0.02;
  double init_gyro_bias_sigma = 1e-3;
  double init_accel_bias_sigma = 1e-2;
};

struct ScenarioConfig {
  std::string name = "scenario";
  SceneSpec scene;
  /// JSON ship keypoint model; empty selects the built-in model.
  std::filesystem::path ship_model_path;
  Intrinsics intrinsics;
  double camera_pitch_deg = 10.0;
  Vec3 camera_offset = Vec3(0.1, 0.0, 0.0);
  vehicle::VehicleParams vehicle;
  vehicle::TrajectorySpec trajectory;
  RateConfig rates;
  DetectorConfig detector;
  EstimatorConfig estimator;
  vehicle::ImuNoise imu;
  std::uint64_t imu_seed = 7;
  /// Simulated seconds; 0 in the file is an error, "auto" runs the trajectory to its end.
  double duration = 10.0;
  bool duration_auto = false;
  std::filesystem::path output_dir = "runs/scenario";
  ControlSource control = ControlSource::truth;
  int render_threads = 0;

  /// Throws ConfigError.
  void validate() const;
  Pose camera_extrinsic() const;
  double effective_duration() const;
};

/// Relative paths inside the file resolve against `base_dir`. Throws ConfigError.
ScenarioConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ScenarioConfig load_config(const std::filesystem::path& path);
/// Every field, in a form parse_config reads back to the same values.
std::string config_to_text(const ScenarioConfig& cfg);

// ---------------------------------------------------------------------------
// Columnar logs.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Throws IoError for an unknown column.
  std::size_t column(const std::string& name) const;
};

/// Throws IoError on a missing file or unparsable cell.
CsvTable read_csv(const std::filesystem::path& path);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  /// Shortest round-trip formatting for every value.
  void row(std::span<const double> values);
  void row(std::initializer_list<double> values) { row(std::span<const double>(values.begin(), values.size())); }
  void flush();

 private:
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> f_;
  std::size_t columns_;
  std::string line_;
};

// ---------------------------------------------------------------------------

struct PoseSample {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Rotation rotation;
};

struct VisionSample {
  double t = 0.0;
  bool fix = false;
  PoseSample pose;
};

struct MetricsReport {
  double max_range = 0.0;  // L (m)
  double mae_position = 0.0;
  double std_position = 0.0;
  double mae_over_l_percent = 0.0;
  double mae_rotation_deg = 0.0;
  double fix_rate_percent = 0.0;
  Vec3 mae_axis = Vec3::Zero();
  std::size_t vision_frames = 0;
  std::size_t fixes = 0;
  bool has_fixes() const { return fixes > 0; }
};

double mae_over_l_percent(double mae, double max_range);

/// Truth linearly interpolated (slerp for attitude) at `t`; throws InvalidArgument outside the log.
PoseSample interpolate(std::span<const PoseSample> truth, double t);

/// Throws InvalidArgument when no fix falls inside the truth log's time span
/// (or the logs are empty) unless `allow_no_fixes`, which reports zeros with fixes = 0.
MetricsReport compute_metrics(std::span<const PoseSample> truth, std::span<const VisionSample> vision,
                              bool allow_no_fixes = true);

std::vector<PoseSample> read_truth_log(const std::filesystem::path& path);
std::vector<VisionSample> read_vision_log(const std::filesystem::path& path);
/// truth.csv + vision.csv of a run directory.
MetricsReport metrics_for_run(const std::filesystem::path& run_dir);

// ---------------------------------------------------------------------------

/// Splat scene of the default ship parts (box surfaces) with an optional sea plane.
splat::SceneModel synthetic_ship_scene(const SceneSpec& spec);

struct RunSummary {
  std::filesystem::path run_dir;
  double simulated_seconds = 0.0;
  std::size_t vision_frames = 0;
  std::size_t fixes = 0;
  std::size_t dropped_measurements = 0;
  std::uint64_t detector_timeouts = 0;
  std::uint64_t stream_malformed = 0;
  bool degraded = false;
  double wall_seconds = 0.0;
};

/// The closed loop: dynamics, truth stream, render -> detect -> pose pipeline ->
/// delayed filter -> controller. Writes the run directory.
RunSummary run_scenario(const ScenarioConfig& cfg);

struct ReplaySummary {
  std::filesystem::path output;  // replay vision log
  std::size_t frames = 0;
  std::size_t fixes = 0;
  std::uint64_t detector_timeouts = 0;
  MetricsReport metrics;
};

struct ReplayOptions {
  /// Overrides the run's detector with a remote endpoint when set.
  std::optional<std::string> remote_endpoint;
  int timeout_ms = 500;
};

/// Re-runs detection and pose estimation over the dumped frames of a run and
/// writes replay/vision.csv.
ReplaySummary replay_offline(const std::filesystem::path& run_dir, const ReplayOptions& opts = {});

struct ReportSummary {
  std::string text;
  bool partial = false;
  double band_coverage = 0.0;  // fraction of samples with every axis inside +-2 sigma
  Vec3 band_coverage_axis = Vec3::Zero();
};

/// Writes report.txt and plot_position.csv (truth, estimate and 2-sigma band).
ReportSummary write_report(const std::filesystem::path& run_dir);

}  // namespace vil::harness
