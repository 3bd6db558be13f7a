// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "vil/error.hpp"
#include "vil/vehicle.hpp"

namespace vil::vehicle {
namespace {

// Peak speed of the quintic rest-to-rest profile is 1.875 * length / duration.
constexpr double kQuinticPeak = 1.875;

}  // namespace

ReferenceTrajectory::ReferenceTrajectory(std::vector<Segment> segments, double yaw)
    : segments_(std::move(segments)), yaw_(yaw) {
  if (segments_.empty()) throw InvalidArgument("trajectory needs at least one segment");
}

double ReferenceTrajectory::duration() const {
  const auto& last = segments_.back();
  return last.t0 + last.duration;
}

double ReferenceTrajectory::path_length() const {
  double len = 0.0;
  for (const auto& s : segments_) len += (s.to - s.from).norm();
  return len;
}

ReferencePoint ReferenceTrajectory::at(double t) const {
  ReferencePoint ref;
  ref.yaw = yaw_;
  auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                             [](double v, const Segment& s) { return v < s.t0; });
  if (it != segments_.begin()) --it;
  const Segment& seg = *it;
  if (seg.duration <= 0.0 || t >= seg.t0 + seg.duration) {
    ref.position = seg.to;
    return ref;
  }
  if (t <= seg.t0) {
    ref.position = seg.from;
    return ref;
  }
  const double tau = (t - seg.t0) / seg.duration;
  const double tau2 = tau * tau, tau3 = tau2 * tau;
  const double s = tau3 * (10.0 - 15.0 * tau + 6.0 * tau2);
  const double ds = 30.0 * tau2 * (1.0 - 2.0 * tau + tau2) / seg.duration;
  const double dds = 60.0 * tau * (1.0 - 3.0 * tau + 2.0 * tau2) / (seg.duration * seg.duration);
  const Vec3 delta = seg.to - seg.from;
  ref.position = seg.from + s * delta;
  ref.velocity = ds * delta;
  ref.acceleration = dds * delta;
  return ref;
}

ReferenceTrajectory make_trajectory(const TrajectorySpec& spec) {
  auto bad = [](const std::string& msg) { return InvalidArgument("trajectory spec: " + msg); };
  if (!spec.start.allFinite() || !spec.end.allFinite()) throw bad("non-finite waypoint");
  if (!(spec.max_range > 0.0)) throw bad("max_range must be positive");

  std::vector<ReferenceTrajectory::Segment> segs;
  double t = 0.0;
  auto check_range = [&](const Vec3& p) {
    if (p.norm() > spec.max_range) {
      throw bad(fmt::format("waypoint ({:.2f}, {:.2f}, {:.2f}) beyond max range {} m", p.x(), p.y(), p.z(),
                            spec.max_range));
    }
  };
  auto hold = [&](const Vec3& p, double d, const char* label) {
    if (d <= 0.0) return;
    segs.push_back({t, d, p, p, label});
    t += d;
  };
  auto move = [&](const Vec3& a, const Vec3& b, const char* label) {
    check_range(b);
    const double len = (b - a).norm();
    const double d = std::max(spec.blend_duration, kQuinticPeak * len / spec.cruise_speed);
    segs.push_back({t, d, a, b, label});
    t += d;
  };

  check_range(spec.start);
  if (spec.kind == TrajectoryKind::hover) {
    if (!(spec.duration > 0.0)) throw bad("hover duration must be positive");
    hold(spec.start, spec.duration, "hover");
    return ReferenceTrajectory(std::move(segs), spec.yaw);
  }
  if (!(spec.cruise_speed > 0.0)) throw bad("cruise_speed must be positive");
  if (!(spec.blend_duration > 0.0)) throw bad("blend_duration must be positive");
  if (spec.hold < 0.0) throw bad("hold must be non-negative");

  Vec3 a = spec.start, b = spec.end;
  if (spec.takeoff_landing) {
    if (!(spec.cruise_altitude > spec.start.z())) throw bad("cruise_altitude must be above the start point");
    a = {spec.start.x(), spec.start.y(), spec.cruise_altitude};
    b = {spec.end.x(), spec.end.y(), spec.cruise_altitude};
    hold(spec.start, spec.hold, "pre-takeoff");
    move(spec.start, a, "takeoff");
    hold(a, spec.hold, "hold");
  }

  std::vector<Vec3> waypoints{a};
  if (spec.kind == TrajectoryKind::zigzag) {
    if (spec.legs < 1) throw bad("zigzag needs at least one leg");
    const Vec3 dir = b - a;
    Vec3 lateral = Vec3::UnitZ().cross(dir);
    if (lateral.norm() < 1e-9) throw bad("zigzag direction must have a horizontal component");
    lateral.normalize();
    for (int i = 1; i < spec.legs; ++i) {
      const double side = (i % 2 == 1) ? 1.0 : -1.0;
      waypoints.push_back(a + dir * (static_cast<double>(i) / spec.legs) + side * spec.lateral_amplitude * lateral);
    }
  }
  waypoints.push_back(b);
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    move(waypoints[i - 1], waypoints[i], spec.kind == TrajectoryKind::zigzag ? "zigzag-leg" : "straight");
    if (i + 1 < waypoints.size()) hold(waypoints[i], spec.hold, "corner");
  }

  if (spec.takeoff_landing) {
    const Vec3 touchdown{spec.end.x(), spec.end.y(), spec.start.z()};
    hold(b, spec.hold, "hold");
    move(b, touchdown, "landing");
    hold(touchdown, spec.hold, "post-landing");
  }
  return ReferenceTrajectory(std::move(segs), spec.yaw);
}

}  // namespace vil::vehicle
