// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>

#include "vil/error.hpp"
#include "vil/posepipe.hpp"

namespace vil::pose {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<Correspondence> correspondences(const KeypointObservation& obs, const ObjectModel& model) {
  std::vector<Correspondence> out;
  const std::size_t n = std::min(obs.keypoints.size(), model.model_points.size());
  for (std::size_t i = 0; i < n; ++i)
    if (i < obs.visible.size() && obs.visible[i]) out.push_back({model.model_points[i], obs.keypoints[i]});
  return out;
}

}  // namespace

PipelineResult estimate_from_observations(std::vector<KeypointObservation> observations, const ShipModel& models,
                                          const Intrinsics& k, const FusionConfig& cfg) {
  PipelineResult res;
  res.observations = std::move(observations);

  auto t0 = Clock::now();
  std::vector<std::vector<Correspondence>> class_corr;
  for (const auto& obs : res.observations) {
    const ObjectModel* model = models.find(obs.class_id);
    if (!model) continue;
    auto corr = correspondences(obs, *model);
    if (corr.size() < 4) continue;
    try {
      const PnpSolution sol = epnp_solve(corr, k);
      ClassEstimate ce;
      ce.confidence = obs.confidence;
      ce.estimate.pose = sol.pose;
      ce.estimate.reprojection_rms = sol.reprojection_rms;
      ce.estimate.rotation_conf = obs.confidence;
      ce.estimate.classes = {obs.class_id};
      const double sigma = cfg.sigma0 / std::max(obs.confidence, 1e-6);
      ce.estimate.position_cov = Mat3::Identity() * sigma * sigma;
      res.per_class.push_back(std::move(ce));
      class_corr.push_back(std::move(corr));
    } catch (const DegenerateError&) {
      continue;
    }
  }
  res.timings.pnp_ms = ms_since(t0);

  t0 = Clock::now();
  res.estimate = fuse_poses(res.per_class, cfg);
  if (res.estimate) {
    // Report the fused pose's reprojection error over every contributing class.
    std::vector<Correspondence> all;
    for (std::size_t i = 0; i < res.per_class.size(); ++i) {
      const int id = res.per_class[i].estimate.classes.front();
      if (std::find(res.estimate->classes.begin(), res.estimate->classes.end(), id) != res.estimate->classes.end()) {
        all.insert(all.end(), class_corr[i].begin(), class_corr[i].end());
      }
    }
    res.estimate->reprojection_rms = reprojection_rms(res.estimate->pose, all, k);
  }
  res.timings.fuse_ms = ms_since(t0);
  return res;
}

PipelineResult estimate_from_frame(const splat::Frame& frame, const Detector& detector, const ShipModel& models,
                                   const Intrinsics& k, const FusionConfig& cfg) {
  const auto t0 = Clock::now();
  auto obs = detector.detect(frame);
  const double detect_ms = ms_since(t0);
  PipelineResult res = estimate_from_observations(std::move(obs), models, k, cfg);
  res.timings.detect_ms = detect_ms;
  return res;
}

}  // namespace vil::pose
