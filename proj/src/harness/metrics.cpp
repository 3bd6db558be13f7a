// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "vil/error.hpp"
#include "vil/harness.hpp"

namespace vil::harness {

double mae_over_l_percent(double mae, double max_range) {
  if (!(max_range > 0.0)) throw InvalidArgument("max range must be positive");
  return 100.0 * mae / max_range;
}

PoseSample interpolate(std::span<const PoseSample> truth, double t) {
  if (truth.empty() || t < truth.front().t || t > truth.back().t) {
    throw InvalidArgument(fmt::format("time {} is outside the truth log", t));
  }
  auto hi = std::lower_bound(truth.begin(), truth.end(), t, [](const PoseSample& s, double v) { return s.t < v; });
  if (hi->t == t || hi == truth.begin()) return *hi;
  const auto lo = hi - 1;
  const double s = (t - lo->t) / (hi->t - lo->t);
  PoseSample out;
  out.t = t;
  out.position = (1.0 - s) * lo->position + s * hi->position;
  out.rotation = Rotation::from_quaternion(lo->rotation.quaternion().slerp(s, hi->rotation.quaternion()));
  return out;
}

MetricsReport compute_metrics(std::span<const PoseSample> truth, std::span<const VisionSample> vision,
                              bool allow_no_fixes) {
  if (truth.empty() || vision.empty()) throw InvalidArgument("metrics: empty log");
  MetricsReport m;
  for (const auto& s : truth) m.max_range = std::max(m.max_range, s.position.norm());
  m.vision_frames = vision.size();

  std::vector<double> err;
  double rot_sum = 0.0;
  Vec3 axis_sum = Vec3::Zero();
  std::size_t fixes_total = 0;
  for (const auto& v : vision) {
    if (!v.fix) continue;
    ++fixes_total;
    if (v.t < truth.front().t || v.t > truth.back().t) continue;
    const PoseSample ref = interpolate(truth, v.t);
    const Vec3 d = v.pose.position - ref.position;
    err.push_back(d.norm());
    axis_sum += d.cwiseAbs();
    rot_sum += geodesic_deg(v.pose.rotation, ref.rotation);
  }
  m.fix_rate_percent = 100.0 * static_cast<double>(fixes_total) / static_cast<double>(vision.size());
  if (err.empty()) {
    if (fixes_total > 0 || !allow_no_fixes) throw InvalidArgument("metrics: no fix overlaps the truth log");
    return m;
  }
  m.fixes = err.size();
  const double n = static_cast<double>(err.size());
  double sum = 0.0;
  for (double e : err) sum += e;
  m.mae_position = sum / n;
  double var = 0.0;
  for (double e : err) var += (e - m.mae_position) * (e - m.mae_position);
  m.std_position = std::sqrt(var / n);
  m.mae_rotation_deg = rot_sum / n;
  m.mae_axis = axis_sum / n;
  m.mae_over_l_percent = m.max_range > 0.0 ? mae_over_l_percent(m.mae_position, m.max_range) : 0.0;
  return m;
}

std::vector<PoseSample> read_truth_log(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t ct = t.column("t"), cx = t.column("x"), cqw = t.column("qw");
  std::vector<PoseSample> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    PoseSample s;
    s.t = r[ct];
    s.position = Vec3(r[cx], r[cx + 1], r[cx + 2]);
    s.rotation = Rotation::from_quaternion(r[cqw], r[cqw + 1], r[cqw + 2], r[cqw + 3]);
    out.push_back(s);
  }
  return out;
}

std::vector<VisionSample> read_vision_log(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t ct = t.column("t"), cf = t.column("fix"), cx = t.column("x"), cqw = t.column("qw");
  std::vector<VisionSample> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    VisionSample v;
    v.t = r[ct];
    v.fix = r[cf] != 0.0;
    v.pose.t = v.t;
    if (v.fix) {
      v.pose.position = Vec3(r[cx], r[cx + 1], r[cx + 2]);
      v.pose.rotation = Rotation::from_quaternion(r[cqw], r[cqw + 1], r[cqw + 2], r[cqw + 3]);
    }
    out.push_back(v);
  }
  return out;
}

MetricsReport metrics_for_run(const std::filesystem::path& run_dir) {
  const auto truth = read_truth_log(run_dir / "truth.csv");
  const auto vision = read_vision_log(run_dir / "vision.csv");
  return compute_metrics(truth, vision);
}

}  // namespace vil::harness
