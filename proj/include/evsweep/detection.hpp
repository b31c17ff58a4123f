#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "evsweep/dsi.hpp"
#include "evsweep/event_io.hpp"
#include "evsweep/geometry.hpp"
#include "evsweep/parallel.hpp"

namespace evsweep {

// ---------------------------------------------------------------------------
// Depth map
// ---------------------------------------------------------------------------

/// Semi-dense depth at the reference viewpoint. Empty cells hold NaN; every
/// present depth is one of the sweep plane depths.
struct DepthMap {
  int w = 0;
  int h = 0;
  std::vector<double> depth;       // NaN = empty
  std::vector<double> confidence;  // smoothed ray-density maximum, all pixels
  Pose ref_pose;

  bool present(int x, int y) const { return !std::isnan(depth[static_cast<std::size_t>(y) * w + x]); }
  double at(int x, int y) const { return depth[static_cast<std::size_t>(y) * w + x]; }

  std::size_t present_count() const {
    std::size_t n = 0;
    for (double d : depth) n += std::isnan(d) ? 0 : 1;
    return n;
  }

  /// Median of the present depths; NaN when the map is empty.
  double median_depth() const {
    std::vector<double> ds;
    ds.reserve(depth.size());
    for (double d : depth)
      if (!std::isnan(d)) ds.push_back(d);
    if (ds.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t mid = (ds.size() - 1) / 2;
    std::nth_element(ds.begin(), ds.begin() + mid, ds.end());
    return ds[mid];
  }
};

struct DetectionParams {
  int filter_radius = 5;          // adaptive-threshold neighborhood radius
  double threshold_offset = 6.0;  // required margin over the local mean
  int median_window = 3;          // 0 or 1 disables the median pass
  bool depth_smoothing = true;    // 3-tap (1/4, 1/2, 1/4) along the depth axis
};

namespace detail {

/// Box mean over the (2r+1)^2 neighborhood clipped to the image, via a
/// summed-area table.
inline std::vector<double> local_mean(const std::vector<double>& img, int w, int h, int r) {
  std::vector<double> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      sat[static_cast<std::size_t>(y + 1) * (w + 1) + (x + 1)] =
          img[static_cast<std::size_t>(y) * w + x] +
          sat[static_cast<std::size_t>(y) * (w + 1) + (x + 1)] +
          sat[static_cast<std::size_t>(y + 1) * (w + 1) + x] -
          sat[static_cast<std::size_t>(y) * (w + 1) + x];
  std::vector<double> mean(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
      const double sum = sat[static_cast<std::size_t>(y1 + 1) * (w + 1) + (x1 + 1)] -
                         sat[static_cast<std::size_t>(y0) * (w + 1) + (x1 + 1)] -
                         sat[static_cast<std::size_t>(y1 + 1) * (w + 1) + x0] +
                         sat[static_cast<std::size_t>(y0) * (w + 1) + x0];
      mean[static_cast<std::size_t>(y) * w + x] = sum / ((y1 - y0 + 1) * (x1 - x0 + 1));
    }
  }
  return mean;
}

}  // namespace detail

/// Extracts the semi-dense depth map from a quiescent DSI:
///  1. per pixel, argmax of the (optionally depth-smoothed) score column;
///     ties break toward the nearer plane;
///  2. a pixel is kept iff its maximum exceeds the local mean of maxima by
///     threshold_offset;
///  3. kept depths pass a median filter over present neighbors (lower median).
template <class Score>
inline DepthMap detect(const Dsi<Score>& dsi, const DetectionParams& params, int workers = 1) {
  const DsiDims& dims = dsi.dims();
  const auto& depths = dsi.planes().depths;
  DepthMap map;
  map.w = dims.w;
  map.h = dims.h;
  map.ref_pose = dsi.ref_pose();
  map.depth.assign(dims.plane_size(), std::numeric_limits<double>::quiet_NaN());
  map.confidence.assign(dims.plane_size(), 0.0);

  std::vector<int> best_plane(dims.plane_size(), 0);
  const std::span<const Score> scores = dsi.scores();
  const std::size_t ps = dims.plane_size();

  parallel_chunks(workers, static_cast<std::size_t>(dims.h), [&](std::size_t yb, std::size_t ye) {
    for (std::size_t y = yb; y < ye; ++y) {
      for (int x = 0; x < dims.w; ++x) {
        const std::size_t px = y * dims.w + x;
        double best = -1.0;
        int best_i = 0;
        for (int i = 0; i < dims.nz; ++i) {
          const double cur = static_cast<double>(scores[static_cast<std::size_t>(i) * ps + px]);
          double v = cur;
          if (params.depth_smoothing) {
            const double prev =
                i > 0 ? static_cast<double>(scores[static_cast<std::size_t>(i - 1) * ps + px]) : 0.0;
            const double next = i + 1 < dims.nz
                                    ? static_cast<double>(scores[static_cast<std::size_t>(i + 1) * ps + px])
                                    : 0.0;
            v = 0.25 * prev + 0.5 * cur + 0.25 * next;
          }
          if (v > best) {
            best = v;
            best_i = i;
          }
        }
        map.confidence[px] = best;
        best_plane[px] = best_i;
      }
    }
  });

  const std::vector<double> mean =
      detail::local_mean(map.confidence, dims.w, dims.h, params.filter_radius);
  std::vector<double> selected(dims.plane_size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t px = 0; px < selected.size(); ++px)
    if (map.confidence[px] > mean[px] + params.threshold_offset)
      selected[px] = depths[best_plane[px]];

  if (params.median_window >= 3) {
    const int r = params.median_window / 2;
    parallel_chunks(workers, static_cast<std::size_t>(dims.h), [&](std::size_t yb, std::size_t ye) {
      std::vector<double> window;
      for (std::size_t y = yb; y < ye; ++y) {
        for (int x = 0; x < dims.w; ++x) {
          const std::size_t px = y * dims.w + x;
          if (std::isnan(selected[px])) continue;
          window.clear();
          for (int dy = -r; dy <= r; ++dy) {
            const int ny = static_cast<int>(y) + dy;
            if (ny < 0 || ny >= dims.h) continue;
            for (int dx = -r; dx <= r; ++dx) {
              const int nx = x + dx;
              if (nx < 0 || nx >= dims.w) continue;
              const double d = selected[static_cast<std::size_t>(ny) * dims.w + nx];
              if (!std::isnan(d)) window.push_back(d);
            }
          }
          std::sort(window.begin(), window.end());
          map.depth[px] = window[(window.size() - 1) / 2];  // lower median: tie -> nearer depth
        }
      }
    });
  } else {
    map.depth = std::move(selected);
  }
  return map;
}

// ---------------------------------------------------------------------------
// Point cloud conversion and merging
// ---------------------------------------------------------------------------

/// Back-projects every present pixel: P_world = R_ref * (Z * K^-1 * (x,y,1)) + t_ref.
inline std::vector<Eigen::Vector3d> depth_map_to_points(const DepthMap& dm, const Calibration& cal) {
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(dm.present_count());
  for (int y = 0; y < dm.h; ++y) {
    for (int x = 0; x < dm.w; ++x) {
      if (!dm.present(x, y)) continue;
      const double z = dm.at(x, y);
      const Eigen::Vector3d p_cam(z * (x - cal.cx) / cal.fx, z * (y - cal.cy) / cal.fy, z);
      pts.push_back(dm.ref_pose.rotation * p_cam + dm.ref_pose.translation);
    }
  }
  return pts;
}

/// Growable world-frame point cloud with optional voxel-grid thinning: with a
/// positive leaf size, only the first point falling in each grid cell is kept.
struct GlobalMap {
  std::vector<Eigen::Vector3d> points;
  double leaf = 0.0;

  void merge(std::span<const Eigen::Vector3d> pts) {
    if (leaf <= 0.0) {
      points.insert(points.end(), pts.begin(), pts.end());
      return;
    }
    for (const auto& p : pts) {
      const auto key = cell_key(p);
      if (occupied_.insert(key).second) points.push_back(p);
    }
  }

 private:
  std::int64_t cell_key(const Eigen::Vector3d& p) const {
    const auto qx = static_cast<std::int64_t>(std::floor(p.x() / leaf));
    const auto qy = static_cast<std::int64_t>(std::floor(p.y() / leaf));
    const auto qz = static_cast<std::int64_t>(std::floor(p.z() / leaf));
    // pack three 21-bit signed cells into one key
    const std::int64_t mask = (std::int64_t{1} << 21) - 1;
    return ((qx & mask) << 42) | ((qy & mask) << 21) | (qz & mask);
  }
  std::unordered_set<std::int64_t> occupied_;
};

}  // namespace evsweep
