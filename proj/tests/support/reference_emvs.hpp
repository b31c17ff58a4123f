#pragma once

// Straight-line reference reconstruction: per-frame batch distortion
// correction, direct per-event 3D back-projection onto every depth plane, and
// bilinear voting. No canonical plane, no proportional coefficients — this is
// the independent route the reformulated pipeline is checked against.

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "evsweep/detection.hpp"
#include "evsweep/dsi.hpp"
#include "evsweep/event_io.hpp"
#include "evsweep/geometry.hpp"
#include "evsweep/sweep.hpp"

namespace evsweep::testing {

struct ReferenceResult {
  std::vector<DepthMap> depth_maps;
  std::vector<Eigen::Vector3d> points;
};

inline ReferenceResult run_reference_emvs(std::span<const Event> raw_events,
                                          std::span<const TrajectorySample> trajectory,
                                          const Calibration& cal, const RunConfig& cfg) {
  const DepthPlanes planes = make_depth_planes(cfg.z_min, cfg.z_max, cfg.n_depth_planes);
  const DsiDims dims{cal.w, cal.h, cfg.n_depth_planes};
  DetectionParams det;
  det.filter_radius = cfg.filter_radius;
  det.threshold_offset = cfg.threshold_offset;
  det.median_window = cfg.median_window;
  det.depth_smoothing = cfg.depth_smoothing;

  ReferenceResult out;
  GlobalMap map;
  map.leaf = cfg.downsample_leaf;

  // Aggregate raw frames first; correction happens per frame, after the fact.
  const std::size_t n_frames = raw_events.size() / static_cast<std::size_t>(cfg.events_per_frame);
  Dsi<float> dsi(dims, planes, Pose::identity());
  bool have_ref = false;
  bool have_votes = false;
  double last_median = -1.0;

  auto close_reference = [&] {
    if (!have_votes) return;
    DepthMap dm = detect(dsi, det);
    const double med = dm.median_depth();
    if (!std::isnan(med)) last_median = med;
    map.merge(depth_map_to_points(dm, cal));
    out.depth_maps.push_back(std::move(dm));
  };

  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t begin = f * static_cast<std::size_t>(cfg.events_per_frame);
    std::span<const Event> frame_raw(raw_events.data() + begin,
                                     static_cast<std::size_t>(cfg.events_per_frame));
    const double mid_t = frame_raw[frame_raw.size() / 2].t;
    Pose pose;
    try {
      pose = interpolate_pose(trajectory, mid_t);
    } catch (const OutOfRangeError&) {
      continue;
    }

    const double mean_depth =
        last_median > 0.0 ? last_median : 2.0 * cfg.z_min * cfg.z_max / (cfg.z_min + cfg.z_max);
    const bool is_key =
        !have_ref || select_keyframe(pose, dsi.ref_pose(), mean_depth, cfg.keyframe_dist_frac);
    if (is_key) {
      close_reference();
      dsi.reset(pose);
      have_ref = true;
      have_votes = false;
    }

    // Per-frame batch correction.
    std::vector<Event> corrected;
    corrected.reserve(frame_raw.size());
    for (const Event& e : frame_raw) corrected.push_back(undistort_event(e, cal));

    // Direct back-projection: one world ray per event, intersected with every
    // plane of the reference view.
    const Eigen::Matrix3d r_ref_t = dsi.ref_pose().rotation.transpose();
    const Eigen::Vector3d c_ref =
        r_ref_t * (pose.translation - dsi.ref_pose().translation);  // event center, ref frame
    const Eigen::Matrix3d r_rel = r_ref_t * pose.rotation;
    for (const Event& e : corrected) {
      const Eigen::Vector3d dir =
          r_rel * Eigen::Vector3d((e.x - cal.cx) / cal.fx, (e.y - cal.cy) / cal.fy, 1.0);
      if (std::abs(dir.z()) < 1e-15) continue;
      for (int i = 0; i < dims.nz; ++i) {
        const double zi = planes.depths[i];
        const double lambda = (zi - c_ref.z()) / dir.z();
        const double px = cal.fx * (c_ref.x() + lambda * dir.x()) / zi + cal.cx;
        const double py = cal.fy * (c_ref.y() + lambda * dir.y()) / zi + cal.cy;
        if (vote_bilinear(dsi, px, py, i, static_cast<float>(cfg.vote_value))) have_votes = true;
      }
    }
  }
  close_reference();
  out.points = map.points;
  return out;
}

}  // namespace evsweep::testing
