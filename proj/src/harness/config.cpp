// SPDX-License-Identifier: Apache-2.0
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "vil/error.hpp"
#include "vil/harness.hpp"

namespace vil::harness {
namespace {

namespace pt = boost::property_tree;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, raw));
  }
  if (!std::isfinite(v)) throw ConfigError(fmt::format("{}: value must be finite", key));
  return v;
}

/// Reads typed keys from the tree and remembers which were consumed.
class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    return trim(*v);
  }
  void str(const std::string& key, std::string& out) {
    if (auto v = raw(key)) out = *v;
  }
  void num(const std::string& key, double& out) {
    if (auto v = raw(key)) out = parse_double(key, *v);
  }
  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (auto v = raw(key)) {
      const double d = parse_double(key, *v);
      if (d != std::floor(d) || d < 0 || d > 1.8e19) throw ConfigError(fmt::format("{}: expected a non-negative integer", key));
      out = static_cast<Int>(d);
    }
  }
  void seed(const std::string& key, std::uint64_t& out) {
    if (auto v = raw(key)) {
      std::uint64_t s = 0;
      auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), s);
      if (ec != std::errc{} || p != v->data() + v->size()) throw ConfigError(fmt::format("{}: expected an unsigned integer", key));
      out = s;
    }
  }
  void flag(const std::string& key, bool& out) {
    if (auto v = raw(key)) {
      if (*v == "true" || *v == "1" || *v == "yes") out = true;
      else if (*v == "false" || *v == "0" || *v == "no") out = false;
      else throw ConfigError(fmt::format("{}: expected true or false", key));
    }
  }
  void vec3(const std::string& key, Vec3& out) {
    if (auto v = raw(key)) {
      std::vector<double> parts;
      std::stringstream ss(*v);
      std::string item;
      while (std::getline(ss, item, ',')) parts.push_back(parse_double(key, item));
      if (parts.size() != 3) throw ConfigError(fmt::format("{}: expected three comma-separated numbers", key));
      out = Vec3(parts[0], parts[1], parts[2]);
    }
  }
  void path(const std::string& key, std::filesystem::path& out, const std::filesystem::path& base) {
    if (auto v = raw(key)) {
      if (v->empty()) {
        out.clear();
        return;
      }
      std::filesystem::path p(*v);
      out = p.is_absolute() || base.empty() ? p : (base / p).lexically_normal();
    }
  }

  void reject_unknown() const {
    for (const auto& [section, sub] : tree_) {
      if (sub.empty() && !sub.data().empty()) {
        throw ConfigError(fmt::format("key '{}' is outside any section", section));
      }
      for (const auto& [key, _] : sub) {
        const std::string full = section + "." + key;
        if (!used_.count(full)) throw ConfigError(fmt::format("unknown key '{}'", full));
      }
    }
  }

 private:
  const pt::ptree& tree_;
  std::set<std::string> used_;
};

std::string fmt_vec(const Vec3& v) { return fmt::format("{}, {}, {}", v.x(), v.y(), v.z()); }

const char* kind_name(vehicle::TrajectoryKind k) {
  switch (k) {
    case vehicle::TrajectoryKind::hover: return "hover";
    case vehicle::TrajectoryKind::straight: return "straight";
    case vehicle::TrajectoryKind::zigzag: return "zigzag";
  }
  return "hover";
}

}  // namespace

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (name.empty()) fail("scenario.name must not be empty");
  if (!duration_auto && !(duration > 0.0)) fail("scenario.duration must be positive");
  if (output_dir.empty()) fail("scenario.output_dir must be set");
  if (render_threads < 0) fail("scenario.render_threads must be >= 0");
  if (!(scene.synthetic_spacing >= 0.02)) fail("scene.synthetic_spacing must be at least 0.02 m");

  const auto& r = rates;
  if (r.dynamics_hz <= 0 || r.pose_stream_hz <= 0 || r.vision_hz <= 0) fail("rates must be positive");
  if (r.frame_log_fps < 0 || r.frame_log_fps > 60) fail("rates.frame_log_fps must be in [0, 60]");
  if (r.vision_hz > r.pose_stream_hz) fail("rates.vision_hz must not exceed rates.pose_stream_hz");
  if (r.pose_stream_hz > r.dynamics_hz) fail("rates.pose_stream_hz must not exceed rates.dynamics_hz");
  if (r.dynamics_hz < 100) fail("rates.dynamics_hz must be at least 100");
  for (int hz : {r.pose_stream_hz, r.vision_hz}) {
    if (r.dynamics_hz % hz != 0) fail(fmt::format("rate {} Hz does not divide rates.dynamics_hz", hz));
  }
  if (r.frame_log_fps > 0 && r.dynamics_hz % r.frame_log_fps != 0) fail("rates.frame_log_fps does not divide rates.dynamics_hz");

  try {
    intrinsics.validate();
    vehicle.validate();
    make_trajectory(trajectory);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (!(std::abs(camera_pitch_deg) < 90.0)) fail("camera.pitch_deg must be within (-90, 90)");
  if (!camera_offset.allFinite()) fail("camera.offset must be finite");

  const auto& d = detector;
  if (d.kind == DetectorKind::oracle) {
    if (d.oracle.pixel_sigma < 0.0) fail("detector.pixel_sigma must be >= 0");
    if (!(d.oracle.dropout_prob >= 0.0 && d.oracle.dropout_prob <= 1.0)) fail("detector.dropout must be in [0, 1]");
  } else {
    try {
      net::parse_endpoint(d.endpoint);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  if (d.timeout_ms <= 0) fail("detector.timeout_ms must be positive");

  const auto& e = estimator;
  if (e.latency < 0.0) fail("estimator.latency must be >= 0");
  if (e.latency >= e.filter.window) fail("estimator.latency must be shorter than estimator.window");
  if (!(e.filter.window > 0.0) || !(e.filter.inflation > 0.0) || !(e.filter.outage_limit > 0.0)) {
    fail("estimator.window, inflation and outage_limit must be positive");
  }
  if (!(e.fusion.sigma0 > 0.0) || !(e.rotation_sigma0 > 0.0)) fail("estimator sigmas must be positive");
  for (double s : {e.init_position_sigma, e.init_velocity_sigma, e.init_attitude_sigma, e.init_gyro_bias_sigma,
                   e.init_accel_bias_sigma}) {
    if (!(s > 0.0)) fail("estimator.init_* sigmas must be positive");
  }
  for (double s : {imu.gyro_density, imu.accel_density, imu.gyro_bias_walk, imu.accel_bias_walk}) {
    if (s < 0.0) fail("imu noise densities must be >= 0");
  }
}

Pose ScenarioConfig::camera_extrinsic() const {
  return forward_camera_extrinsic(deg2rad(camera_pitch_deg), camera_offset);
}

double ScenarioConfig::effective_duration() const {
  return duration_auto ? make_trajectory(trajectory).duration() : duration;
}

ScenarioConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config parse error: {}", e.what()));
  }
  Reader rd(tree);
  ScenarioConfig c;

  rd.str("scenario.name", c.name);
  if (auto d = rd.raw("scenario.duration")) {
    if (*d == "auto") {
      c.duration_auto = true;
    } else {
      c.duration = parse_double("scenario.duration", *d);
      c.duration_auto = false;
    }
  }
  if (auto v = rd.raw("scenario.control")) {
    if (*v == "truth") c.control = ControlSource::truth;
    else if (*v == "vision") c.control = ControlSource::vision;
    else throw ConfigError("scenario.control must be truth or vision");
  }
  if (auto v = rd.raw("scenario.output_dir")) c.output_dir = *v;
  rd.integer("scenario.render_threads", c.render_threads);

  rd.path("scene.path", c.scene.path, base_dir);
  rd.num("scene.synthetic_spacing", c.scene.synthetic_spacing);
  rd.flag("scene.synthetic_sea", c.scene.synthetic_sea);
  rd.seed("scene.seed", c.scene.seed);

  rd.path("ship.model", c.ship_model_path, base_dir);

  rd.integer("camera.width", c.intrinsics.width);
  rd.integer("camera.height", c.intrinsics.height);
  rd.num("camera.fx", c.intrinsics.fx);
  rd.num("camera.fy", c.intrinsics.fy);
  rd.num("camera.cx", c.intrinsics.cx);
  rd.num("camera.cy", c.intrinsics.cy);
  rd.num("camera.pitch_deg", c.camera_pitch_deg);
  rd.vec3("camera.offset", c.camera_offset);

  rd.num("vehicle.mass", c.vehicle.mass);
  Vec3 inertia = c.vehicle.inertia.diagonal();
  rd.vec3("vehicle.inertia", inertia);
  c.vehicle.inertia = inertia.asDiagonal();
  rd.num("vehicle.gravity", c.vehicle.gravity);
  rd.num("vehicle.max_thrust", c.vehicle.max_thrust);
  rd.num("vehicle.kx", c.vehicle.kx);
  rd.num("vehicle.kv", c.vehicle.kv);
  rd.num("vehicle.kR", c.vehicle.kR);
  rd.num("vehicle.kOmega", c.vehicle.kOmega);

  auto& tr = c.trajectory;
  if (auto v = rd.raw("trajectory.kind")) {
    if (*v == "hover") tr.kind = vehicle::TrajectoryKind::hover;
    else if (*v == "straight") tr.kind = vehicle::TrajectoryKind::straight;
    else if (*v == "zigzag") tr.kind = vehicle::TrajectoryKind::zigzag;
    else throw ConfigError("trajectory.kind must be hover, straight or zigzag");
  }
  rd.vec3("trajectory.start", tr.start);
  rd.vec3("trajectory.end", tr.end);
  rd.num("trajectory.cruise_altitude", tr.cruise_altitude);
  rd.integer("trajectory.legs", tr.legs);
  rd.num("trajectory.lateral_amplitude", tr.lateral_amplitude);
  rd.num("trajectory.cruise_speed", tr.cruise_speed);
  rd.num("trajectory.blend_duration", tr.blend_duration);
  rd.num("trajectory.hold", tr.hold);
  rd.flag("trajectory.takeoff_landing", tr.takeoff_landing);
  double yaw_deg = rad2deg(tr.yaw);
  rd.num("trajectory.yaw_deg", yaw_deg);
  tr.yaw = deg2rad(yaw_deg);
  rd.num("trajectory.max_range", tr.max_range);

  rd.integer("rates.dynamics_hz", c.rates.dynamics_hz);
  rd.integer("rates.pose_stream_hz", c.rates.pose_stream_hz);
  rd.integer("rates.vision_hz", c.rates.vision_hz);
  rd.integer("rates.frame_log_fps", c.rates.frame_log_fps);

  auto& d = c.detector;
  if (auto v = rd.raw("detector.kind")) {
    if (*v == "oracle") d.kind = DetectorKind::oracle;
    else if (*v == "remote") d.kind = DetectorKind::remote;
    else throw ConfigError("detector.kind must be oracle or remote");
  }
  rd.num("detector.pixel_sigma", d.oracle.pixel_sigma);
  rd.num("detector.dropout", d.oracle.dropout_prob);
  rd.seed("detector.seed", d.oracle.seed);
  rd.num("detector.visibility_penalty", d.oracle.visibility_penalty);
  rd.num("detector.noise_penalty", d.oracle.noise_penalty);
  rd.str("detector.endpoint", d.endpoint);
  rd.integer("detector.timeout_ms", d.timeout_ms);
  if (auto v = rd.raw("detector.format")) {
    if (*v == "raw") d.format = net::PixelFormat::raw_rgb8;
    else if (*v == "png") d.format = net::PixelFormat::png;
    else throw ConfigError("detector.format must be raw or png");
  }

  auto& e = c.estimator;
  rd.num("estimator.latency", e.latency);
  rd.num("estimator.window", e.filter.window);
  rd.num("estimator.inflation", e.filter.inflation);
  rd.num("estimator.outage_limit", e.filter.outage_limit);
  rd.num("estimator.min_confidence", e.fusion.min_confidence);
  rd.num("estimator.max_reprojection_rms", e.fusion.max_reprojection_rms);
  rd.num("estimator.sigma0", e.fusion.sigma0);
  rd.num("estimator.outlier_sigmas", e.fusion.outlier_sigmas);
  rd.num("estimator.rotation_sigma0", e.rotation_sigma0);
  rd.num("estimator.init_position_sigma", e.init_position_sigma);
  rd.num("estimator.init_velocity_sigma", e.init_velocity_sigma);
  rd.num("estimator.init_attitude_sigma", e.init_attitude_sigma);
  rd.num("estimator.init_gyro_bias_sigma", e.init_gyro_bias_sigma);
  rd.num("estimator.init_accel_bias_sigma", e.init_accel_bias_sigma);

  rd.num("imu.gyro_density", c.imu.gyro_density);
  rd.num("imu.accel_density", c.imu.accel_density);
  rd.num("imu.gyro_bias_walk", c.imu.gyro_bias_walk);
  rd.num("imu.accel_bias_walk", c.imu.accel_bias_walk);
  rd.vec3("imu.initial_gyro_bias", c.imu.initial_gyro_bias);
  rd.vec3("imu.initial_accel_bias", c.imu.initial_accel_bias);
  rd.seed("imu.seed", c.imu_seed);

  rd.reject_unknown();

  e.filter.gravity = c.vehicle.gravity;
  e.filter.noise = {c.imu.gyro_density, c.imu.accel_density, c.imu.gyro_bias_walk, c.imu.accel_bias_walk};
  if (tr.kind == vehicle::TrajectoryKind::hover && !c.duration_auto) tr.duration = c.duration;
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::filesystem::absolute(path).parent_path());
}

std::string config_to_text(const ScenarioConfig& c) {
  std::string o;
  auto line = [&](std::string_view key, const std::string& value) { o += fmt::format("{} = {}\n", key, value); };
  auto num = [&](std::string_view key, double v) { line(key, fmt::format("{}", v)); };

  o += "[scenario]\n";
  line("name", c.name);
  line("duration", c.duration_auto ? std::string("auto") : fmt::format("{}", c.duration));
  line("control", c.control == ControlSource::truth ? "truth" : "vision");
  line("output_dir", c.output_dir.string());
  num("render_threads", c.render_threads);

  o += "\n[scene]\n";
  line("path", c.scene.path.string());
  num("synthetic_spacing", c.scene.synthetic_spacing);
  line("synthetic_sea", c.scene.synthetic_sea ? "true" : "false");
  line("seed", std::to_string(c.scene.seed));

  o += "\n[ship]\n";
  line("model", c.ship_model_path.string());

  o += "\n[camera]\n";
  num("width", c.intrinsics.width);
  num("height", c.intrinsics.height);
  num("fx", c.intrinsics.fx);
  num("fy", c.intrinsics.fy);
  num("cx", c.intrinsics.cx);
  num("cy", c.intrinsics.cy);
  num("pitch_deg", c.camera_pitch_deg);
  line("offset", fmt_vec(c.camera_offset));

  o += "\n[vehicle]\n";
  num("mass", c.vehicle.mass);
  line("inertia", fmt_vec(c.vehicle.inertia.diagonal()));
  num("gravity", c.vehicle.gravity);
  num("max_thrust", c.vehicle.max_thrust);
  num("kx", c.vehicle.kx);
  num("kv", c.vehicle.kv);
  num("kR", c.vehicle.kR);
  num("kOmega", c.vehicle.kOmega);

  const auto& tr = c.trajectory;
  o += "\n[trajectory]\n";
  line("kind", kind_name(tr.kind));
  line("start", fmt_vec(tr.start));
  line("end", fmt_vec(tr.end));
  num("cruise_altitude", tr.cruise_altitude);
  num("legs", tr.legs);
  num("lateral_amplitude", tr.lateral_amplitude);
  num("cruise_speed", tr.cruise_speed);
  num("blend_duration", tr.blend_duration);
  num("hold", tr.hold);
  line("takeoff_landing", tr.takeoff_landing ? "true" : "false");
  num("yaw_deg", rad2deg(tr.yaw));
  num("max_range", tr.max_range);

  o += "\n[rates]\n";
  num("dynamics_hz", c.rates.dynamics_hz);
  num("pose_stream_hz", c.rates.pose_stream_hz);
  num("vision_hz", c.rates.vision_hz);
  num("frame_log_fps", c.rates.frame_log_fps);

  const auto& d = c.detector;
  o += "\n[detector]\n";
  line("kind", d.kind == DetectorKind::oracle ? "oracle" : "remote");
  num("pixel_sigma", d.oracle.pixel_sigma);
  num("dropout", d.oracle.dropout_prob);
  line("seed", std::to_string(d.oracle.seed));
  num("visibility_penalty", d.oracle.visibility_penalty);
  num("noise_penalty", d.oracle.noise_penalty);
  line("endpoint", d.endpoint);
  num("timeout_ms", d.timeout_ms);
  line("format", d.format == net::PixelFormat::png ? "png" : "raw");

  const auto& e = c.estimator;
  o += "\n[estimator]\n";
  num("latency", e.latency);
  num("window", e.filter.window);
  num("inflation", e.filter.inflation);
  num("outage_limit", e.filter.outage_limit);
  num("min_confidence", e.fusion.min_confidence);
  num("max_reprojection_rms", e.fusion.max_reprojection_rms);
  num("sigma0", e.fusion.sigma0);
  num("outlier_sigmas", e.fusion.outlier_sigmas);
  num("rotation_sigma0", e.rotation_sigma0);
  num("init_position_sigma", e.init_position_sigma);
  num("init_velocity_sigma", e.init_velocity_sigma);
  num("init_attitude_sigma", e.init_attitude_sigma);
  num("init_gyro_bias_sigma", e.init_gyro_bias_sigma);
  num("init_accel_bias_sigma", e.init_accel_bias_sigma);

  o += "\n[imu]\n";
  num("gyro_density", c.imu.gyro_density);
  num("accel_density", c.imu.accel_density);
  num("gyro_bias_walk", c.imu.gyro_bias_walk);
  num("accel_bias_walk", c.imu.accel_bias_walk);
  line("initial_gyro_bias", fmt_vec(c.imu.initial_gyro_bias));
  line("initial_accel_bias", fmt_vec(c.imu.initial_accel_bias));
  line("seed", std::to_string(c.imu_seed));
  return o;
}

}  // namespace vil::harness
