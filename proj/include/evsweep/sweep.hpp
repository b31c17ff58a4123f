#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evsweep/dsi.hpp"
#include "evsweep/event_io.hpp"
#include "evsweep/geometry.hpp"
#include "evsweep/parallel.hpp"

namespace evsweep {

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

/// A packet of consecutive undistorted events sharing one camera pose.
struct EventFrame {
  std::vector<Event> events;
  Pose pose;
  double mid_t = 0.0;
  bool is_keyframe = false;
};

using WarnFn = std::function<void(const std::string&)>;

struct AggregateResult {
  std::vector<EventFrame> frames;
  std::size_t dropped_frames = 0;  // mid-timestamp outside the trajectory
};

/// Groups the stream into frames of exactly n events; the trailing partial
/// group is discarded. The frame pose is interpolated at the timestamp of
/// event floor(n/2). Frames whose mid-timestamp falls outside the trajectory
/// are dropped with a warning.
inline AggregateResult aggregate(std::span<const Event> events, int n,
                                 std::span<const TrajectorySample> traj,
                                 const WarnFn& warn = {}) {
  if (n < 1) throw ValidationError("aggregate: events_per_frame must be >= 1");
  AggregateResult out;
  const std::size_t n_frames = events.size() / static_cast<std::size_t>(n);
  out.frames.reserve(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t begin = f * static_cast<std::size_t>(n);
    EventFrame frame;
    frame.events.assign(events.begin() + begin, events.begin() + begin + n);
    frame.mid_t = frame.events[static_cast<std::size_t>(n) / 2].t;
    try {
      frame.pose = interpolate_pose(traj, frame.mid_t);
    } catch (const OutOfRangeError&) {
      ++out.dropped_frames;
      if (warn) warn("frame " + std::to_string(f) + " dropped: mid-timestamp outside trajectory");
      continue;
    }
    out.frames.push_back(std::move(frame));
  }
  return out;
}

/// True iff the frame has moved strictly farther from the key reference view
/// than frac * mean_depth.
inline bool select_keyframe(const Pose& frame_pose, const Pose& key_pose, double mean_depth,
                            double frac) {
  if (!(mean_depth > 0.0) || !(frac > 0.0))
    throw ValidationError("keyframe selection: mean_depth and frac must be positive");
  const double dist = (frame_pose.translation - key_pose.translation).norm();
  return dist > frac * mean_depth;
}

// ---------------------------------------------------------------------------
// Canonical back-projection
// ---------------------------------------------------------------------------

/// Event coordinates on the canonical plane of the virtual camera. Events
/// whose homogeneous w vanishes are flagged invalid and take no part in
/// voting.
struct CanonicalPoints {
  struct Point {
    double x = 0.0;
    double y = 0.0;
    bool valid = true;
  };
  std::vector<Point> pts;

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (const auto& p : pts) n += p.valid ? 1 : 0;
    return n;
  }
};

inline CanonicalPoints canonical_backproject(const EventFrame& frame, const Homography& h) {
  CanonicalPoints out;
  out.pts.resize(frame.events.size());
  const Eigen::Matrix3d& m = h.m;
  for (std::size_t k = 0; k < frame.events.size(); ++k) {
    const Event& e = frame.events[k];
    const double u = m(0, 0) * e.x + m(0, 1) * e.y + m(0, 2);
    const double v = m(1, 0) * e.x + m(1, 1) * e.y + m(1, 2);
    const double w = m(2, 0) * e.x + m(2, 1) * e.y + m(2, 2);
    if (std::abs(w) < 1e-9) {
      out.pts[k].valid = false;
      continue;
    }
    out.pts[k].x = u / w;
    out.pts[k].y = v / w;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vote generation
// ---------------------------------------------------------------------------

/// Nearest-voxel vote addresses, plane-major then event-order, plus the
/// projection-miss count.
struct VoteBatch {
  std::vector<VoteAddress> addrs;
  std::vector<std::uint32_t> per_plane;  // addresses emitted on each plane
  std::uint64_t misses = 0;

  std::pair<std::size_t, std::size_t> plane_span(int plane) const {
    std::size_t begin = 0;
    for (int i = 0; i < plane; ++i) begin += per_plane[i];
    return {begin, begin + per_plane[plane]};
  }
};

/// Applies the per-plane affine map to every valid canonical point, rounds
/// half-away-from-zero to the nearest voxel and bounds-checks afterwards.
inline VoteBatch generate_votes(const CanonicalPoints& pts, const PropCoeffs& phi,
                                const DsiDims& dims) {
  VoteBatch out;
  const int nz = static_cast<int>(phi.planes.size());
  out.per_plane.assign(nz, 0);
  out.addrs.reserve(pts.pts.size() * static_cast<std::size_t>(nz));
  for (int i = 0; i < nz; ++i) {
    const auto& c = phi.planes[i];
    std::uint32_t emitted = 0;
    for (const auto& p : pts.pts) {
      if (!p.valid) continue;
      const double xi = c.a * (p.x - phi.cx) + c.bx + phi.cx;
      const double yi = c.a * (p.y - phi.cy) + c.by + phi.cy;
      const long px = std::lround(xi);  // llround/lround round half away from zero
      const long py = std::lround(yi);
      if (px < 0 || px >= dims.w || py < 0 || py >= dims.h) {
        ++out.misses;
        continue;
      }
      out.addrs.push_back(vote_address(static_cast<int>(px), static_cast<int>(py), i, dims));
      ++emitted;
    }
    out.per_plane[i] = emitted;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-frame statistics
// ---------------------------------------------------------------------------

struct FrameStats {
  std::uint64_t frame_index = 0;
  double mid_t = 0.0;
  bool is_keyframe = false;
  std::uint32_t events = 0;
  std::uint32_t valid_events = 0;
  std::uint64_t votes = 0;
  std::uint64_t misses = 0;
};

// ---------------------------------------------------------------------------
// Float datapath
// ---------------------------------------------------------------------------

/// Full-precision voting stage: canonical back-projection, per-plane affine
/// remap, nearest or bilinear vote execution. Planes are processed by
/// independent workers; each plane's votes land in event order, so results do
/// not depend on the worker count.
struct FloatDatapath {
  using Score = float;

  Calibration cal;
  VoteMode vote_mode = VoteMode::kNearest;
  int vote_value = 1;
  int workers = 1;

  void prepare_frame(const EventFrame& frame, const Pose& ref_pose, const DepthPlanes& planes) {
    homography_ = compute_homography(frame.pose, ref_pose, cal, planes.canonical_depth());
    phi_ = compute_prop_coeffs(frame.pose, ref_pose, cal, planes);
  }

  void vote_frame(Dsi<float>& dsi, const EventFrame& frame, FrameStats& stats) {
    const CanonicalPoints pts = canonical_backproject(frame, homography_);
    stats.valid_events = static_cast<std::uint32_t>(pts.valid_count());
    const DsiDims& dims = dsi.dims();
    if (vote_mode == VoteMode::kNearest) {
      VoteBatch batch = generate_votes(pts, phi_, dims);
      stats.votes += batch.addrs.size();
      stats.misses += batch.misses;
      parallel_chunks(workers, static_cast<std::size_t>(dims.nz), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
          auto [s0, s1] = batch.plane_span(static_cast<int>(i));
          execute_votes(dsi, std::span<const VoteAddress>(batch.addrs.data() + s0, s1 - s0),
                        static_cast<float>(vote_value));
        }
      });
    } else {
      std::vector<std::uint64_t> votes(dims.nz, 0), misses(dims.nz, 0);
      parallel_chunks(workers, static_cast<std::size_t>(dims.nz), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
          const auto& c = phi_.planes[i];
          for (const auto& p : pts.pts) {
            if (!p.valid) continue;
            const double xi = c.a * (p.x - phi_.cx) + c.bx + phi_.cx;
            const double yi = c.a * (p.y - phi_.cy) + c.by + phi_.cy;
            if (vote_bilinear(dsi, xi, yi, static_cast<int>(i), static_cast<float>(vote_value)))
              ++votes[i];
            else
              ++misses[i];
          }
        }
      });
      for (int i = 0; i < dims.nz; ++i) {
        stats.votes += votes[i];
        stats.misses += misses[i];
      }
    }
  }

  const Homography& homography() const { return homography_; }
  const PropCoeffs& prop_coeffs() const { return phi_; }

 private:
  Homography homography_;
  PropCoeffs phi_;
};

}  // namespace evsweep
