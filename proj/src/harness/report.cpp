// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "vil/error.hpp"
#include "vil/harness.hpp"

namespace vil::harness {
namespace {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ReportSummary write_report(const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(run_dir / "truth.csv")) throw IoError(fmt::format("'{}' has no truth.csv", run_dir.string()));

  ReportSummary rep;
  std::string status = "unknown";
  if (fs::exists(run_dir / "run.status")) {
    status = read_text(run_dir / "run.status");
    while (!status.empty() && (status.back() == '\n' || status.back() == '\r')) status.pop_back();
  } else {
    rep.partial = true;
  }
  std::string name = run_dir.filename().string();
  if (fs::exists(run_dir / "config.snapshot")) {
    try {
      name = parse_config(read_text(run_dir / "config.snapshot")).name;
    } catch (const ConfigError&) {
    }
  }

  const auto truth = read_truth_log(run_dir / "truth.csv");
  std::string& o = rep.text;
  o += fmt::format("Run report: {}\n", name);
  if (rep.partial) {
    o += "WARNING: partial run (no completion marker); figures cover the logged samples only.\n";
  }
  o += fmt::format("status: {}\n", rep.partial ? "partial" : status);
  if (!truth.empty()) o += fmt::format("simulated time: {:.3f} s, {} truth samples\n", truth.back().t, truth.size());
  o += "\n";

  o += "Pose estimation accuracy (vision fixes vs truth)\n";
  o += fmt::format("  {:>15} | {:>21} | {:>9} | {:>17} | {:>12}\n", "Max Range L (m)", "MAE / std of Pos. (m)",
                   "MAE/L (%)", "MAE of Rot. (deg)", "Fix rate (%)");
  std::vector<VisionSample> vision;
  if (fs::exists(run_dir / "vision.csv")) vision = read_vision_log(run_dir / "vision.csv");
  if (!truth.empty() && !vision.empty()) {
    const MetricsReport m = compute_metrics(truth, vision);
    if (m.has_fixes()) {
      o += fmt::format("  {:>15.1f} | {:>21} | {:>9.2f} | {:>17.2f} | {:>12.1f}\n", m.max_range,
                       fmt::format("{:.3f} / {:.3f}", m.mae_position, m.std_position), m.mae_over_l_percent,
                       m.mae_rotation_deg, m.fix_rate_percent);
      o += fmt::format("  per-axis MAE (m): x {:.3f}, y {:.3f}, z {:.3f}; {} fixes of {} frames\n", m.mae_axis.x(),
                       m.mae_axis.y(), m.mae_axis.z(), m.fixes, m.vision_frames);
    } else {
      o += fmt::format("  {:>15.1f} | {:>21} | {:>9} | {:>17} | {:>12.1f}\n", m.max_range, "N/A", "N/A", "N/A",
                       m.fix_rate_percent);
    }
  } else {
    o += "  no vision frames logged\n";
  }

  // Filter estimate against truth on the shared timestamps, with the 2-sigma band.
  if (fs::exists(run_dir / "estimate.csv") && !truth.empty()) {
    const CsvTable est = read_csv(run_dir / "estimate.csv");
    const std::size_t ct = est.column("t"), cx = est.column("x"), cqw = est.column("qw"), csx = est.column("sx");
    CsvWriter plot(run_dir / "plot_position.csv",
                   {"t", "true_x", "true_y", "true_z", "est_x", "est_y", "est_z", "lo_x", "lo_y", "lo_z", "hi_x",
                    "hi_y", "hi_z"});
    CsvWriter att(run_dir / "plot_attitude.csv",
                  {"t", "true_yaw", "true_pitch", "true_roll", "est_yaw", "est_pitch", "est_roll"});
    std::size_t n = 0, inside_all = 0;
    Eigen::Vector3i inside_axis = Eigen::Vector3i::Zero();
    double pos_sum = 0.0, rot_sum = 0.0;
    for (const auto& r : est.rows) {
      const double t = r[ct];
      if (t < truth.front().t || t > truth.back().t) continue;
      const PoseSample ref = interpolate(truth, t);
      const Vec3 p(r[cx], r[cx + 1], r[cx + 2]);
      const Vec3 sig(r[csx], r[csx + 1], r[csx + 2]);
      const Rotation q = Rotation::from_quaternion(r[cqw], r[cqw + 1], r[cqw + 2], r[cqw + 3]);
      const Vec3 lo = p - 2.0 * sig, hi = p + 2.0 * sig;
      plot.row({t, ref.position.x(), ref.position.y(), ref.position.z(), p.x(), p.y(), p.z(), lo.x(), lo.y(), lo.z(),
                hi.x(), hi.y(), hi.z()});
      const Vec3 ty = ref.rotation.ypr() * (180.0 / kPi), ey = q.ypr() * (180.0 / kPi);
      att.row({t, ty.x(), ty.y(), ty.z(), ey.x(), ey.y(), ey.z()});
      bool all = true;
      for (int a = 0; a < 3; ++a) {
        const bool in = ref.position[a] >= lo[a] && ref.position[a] <= hi[a];
        inside_axis[a] += in;
        all = all && in;
      }
      inside_all += all;
      pos_sum += (p - ref.position).norm();
      rot_sum += geodesic_deg(q, ref.rotation);
      ++n;
    }
    if (n > 0) {
      const double dn = static_cast<double>(n);
      rep.band_coverage = static_cast<double>(inside_all) / dn;
      rep.band_coverage_axis = inside_axis.cast<double>() / dn;
      o += "\nFiltered estimate vs truth\n";
      o += fmt::format("  MAE position {:.3f} m, MAE rotation {:.2f} deg over {} samples\n", pos_sum / dn,
                       rot_sum / dn, n);
      o += fmt::format("  truth inside +-2 sigma band: x {:.1f}%, y {:.1f}%, z {:.1f}%, all axes {:.1f}%\n",
                       100.0 * rep.band_coverage_axis.x(), 100.0 * rep.band_coverage_axis.y(),
                       100.0 * rep.band_coverage_axis.z(), 100.0 * rep.band_coverage);
    }
  }
  o += "\nPlot data: plot_position.csv (truth, estimate, 2-sigma band), plot_attitude.csv (yaw/pitch/roll, deg)\n";

  std::ofstream out(run_dir / "report.txt");
  out << o;
  if (!out) throw IoError("cannot write report.txt");
  return rep;
}

}  // namespace vil::harness
