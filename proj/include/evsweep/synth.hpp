#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "evsweep/detection.hpp"
#include "evsweep/errors.hpp"
#include "evsweep/event_io.hpp"
#include "evsweep/geometry.hpp"

namespace evsweep {

// ---------------------------------------------------------------------------
// Scene description
// ---------------------------------------------------------------------------

/// A planar convex quad in the world, textured along its edges with points at
/// the given density (points per meter).
struct PlaneSpec {
  std::array<Eigen::Vector3d, 4> corners;
  double edge_point_density = 400.0;
};

struct TrajectorySpec {
  enum class Kind { kLinear, kCircular };
  Kind kind = Kind::kLinear;
  Eigen::Vector3d start = Eigen::Vector3d::Zero();   // linear
  Eigen::Vector3d end = Eigen::Vector3d::Zero();     // linear
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  // circular, in the xy plane
  double radius = 0.0;                               // circular
  double angle_span = 0.0;                           // circular, radians
  double duration = 1.0;                             // seconds
  double sample_rate = 1000.0;                       // poses per second
};

struct SceneSpec {
  std::vector<PlaneSpec> planes;
  TrajectorySpec trajectory;
  double z_min = 0.5;  // depth envelope every plane must respect
  double z_max = 5.0;
  double noise_rate = 0.0;  // spurious events per second, uniform over the sensor
  std::uint64_t seed = 7;
};

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

namespace detail {

struct QuadGeometry {
  std::array<Eigen::Vector3d, 4> corners;
  Eigen::Vector3d normal;  // unit

  static QuadGeometry from(const PlaneSpec& spec) {
    QuadGeometry q;
    q.corners = spec.corners;
    const Eigen::Vector3d n =
        (spec.corners[1] - spec.corners[0]).cross(spec.corners[2] - spec.corners[0]);
    if (n.norm() < 1e-12) throw ValidationError("scene plane is degenerate");
    q.normal = n.normalized();
    return q;
  }

  /// Membership with an in-plane tolerance band (meters) around the border.
  bool contains(const Eigen::Vector3d& p, double tol_m = 1e-9) const {
    for (int i = 0; i < 4; ++i) {
      const Eigen::Vector3d& a = corners[i];
      const Eigen::Vector3d& b = corners[(i + 1) % 4];
      if ((b - a).cross(p - a).dot(normal) < -tol_m * (b - a).norm()) return false;
    }
    return true;
  }

  /// Ray-quad intersection; returns the ray parameter (depth along dir).
  std::optional<double> intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                  double tol_m = 1e-9) const {
    const double denom = normal.dot(dir);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    const double lambda = normal.dot(corners[0] - origin) / denom;
    if (lambda <= 0.0) return std::nullopt;
    if (!contains(origin + lambda * dir, tol_m)) return std::nullopt;
    return lambda;
  }
};

}  // namespace detail

/// Exact analytic depth of the scene as seen from any camera pose.
class GroundTruth {
 public:
  GroundTruth() = default;
  explicit GroundTruth(const std::vector<PlaneSpec>& planes) {
    quads_.reserve(planes.size());
    for (const auto& p : planes) quads_.push_back(detail::QuadGeometry::from(p));
  }

  /// Depth (camera-frame z) of the nearest scene surface under pixel (x, y) of
  /// an ideal pinhole at `pose`, or nullopt where the ray misses every plane.
  /// The footprint check allows tol_px of slack at the surface's depth, since
  /// detected structure lands on the nearest pixel center of a border curve.
  std::optional<double> depth(const Pose& pose, const Calibration& cal, double x, double y,
                              double tol_px = 1.0) const {
    const Eigen::Vector3d dir_cam((x - cal.cx) / cal.fx, (y - cal.cy) / cal.fy, 1.0);
    const Eigen::Vector3d dir_world = pose.rotation * dir_cam;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : quads_) {
      const double plane_depth = q.normal.dot(q.corners[0] - pose.translation);
      const double tol_m = tol_px * std::abs(plane_depth) / std::max(cal.fx, cal.fy);
      if (auto lambda = q.intersect(pose.translation, dir_world, tol_m))
        best = std::min(best, *lambda);  // dir_cam.z == 1, so lambda is camera depth
    }
    if (!std::isfinite(best)) return std::nullopt;
    return best;
  }

  bool empty() const { return quads_.empty(); }

 private:
  std::vector<detail::QuadGeometry> quads_;
};

// ---------------------------------------------------------------------------
// Event generation
// ---------------------------------------------------------------------------

struct SyntheticDataset {
  std::vector<Event> events;
  std::vector<TrajectorySample> trajectory;
  GroundTruth ground_truth;
};

namespace detail {

inline Eigen::Vector3d trajectory_position(const TrajectorySpec& spec, double u) {
  if (spec.kind == TrajectorySpec::Kind::kLinear)
    return spec.start + u * (spec.end - spec.start);
  const double ang = u * spec.angle_span;
  return spec.center + Eigen::Vector3d(spec.radius * std::cos(ang), spec.radius * std::sin(ang), 0.0);
}

inline std::vector<Eigen::Vector3d> edge_points(const PlaneSpec& plane) {
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d& a = plane.corners[i];
    const Eigen::Vector3d& b = plane.corners[(i + 1) % 4];
    const double len = (b - a).norm();
    const int n = std::max(1, static_cast<int>(std::lround(len * plane.edge_point_density)));
    for (int k = 0; k < n; ++k) pts.push_back(a + (static_cast<double>(k) / n) * (b - a));
  }
  return pts;
}

}  // namespace detail

/// Projects every edge point at every trajectory sample and emits an event
/// (alternating polarity per point) whenever the point's nearest integer pixel
/// changes between consecutive samples. Events within one sample follow point
/// index order, so timestamps are non-decreasing by construction.
inline SyntheticDataset generate(const SceneSpec& scene, const Calibration& cal) {
  if (scene.planes.empty()) throw ValidationError("scene has no planes");
  if (!(scene.trajectory.duration > 0.0) || !(scene.trajectory.sample_rate > 0.0))
    throw ValidationError("scene trajectory must have positive duration and sample rate");

  SyntheticDataset out;
  out.ground_truth = GroundTruth(scene.planes);

  const auto n_samples =
      static_cast<std::size_t>(std::floor(scene.trajectory.duration * scene.trajectory.sample_rate)) + 1;
  out.trajectory.reserve(n_samples);
  for (std::size_t j = 0; j < n_samples; ++j) {
    TrajectorySample s;
    s.t = static_cast<double>(j) / scene.trajectory.sample_rate;
    s.position = detail::trajectory_position(
        scene.trajectory, n_samples > 1 ? static_cast<double>(j) / (n_samples - 1) : 0.0);
    out.trajectory.push_back(s);
  }

  // Depth-envelope validation: every plane corner must stay inside
  // [z_min, z_max] in front of every sample pose (identity orientation).
  for (const auto& plane : scene.planes)
    for (const auto& corner : plane.corners)
      for (const auto& s : out.trajectory) {
        const double z = corner.z() - s.position.z();
        if (!(z >= scene.z_min && z <= scene.z_max))
          throw ValidationError("scene plane leaves the depth envelope along the trajectory");
      }

  std::vector<Eigen::Vector3d> points;
  for (const auto& plane : scene.planes) {
    auto pts = detail::edge_points(plane);
    points.insert(points.end(), pts.begin(), pts.end());
  }

  struct PixelState {
    long px = std::numeric_limits<long>::min();
    long py = 0;
    int polarity = +1;
  };
  std::vector<PixelState> state(points.size());

  std::mt19937_64 rng(scene.seed);
  std::uniform_real_distribution<double> ux(0.0, 1.0);
  const double noise_per_sample = scene.noise_rate / scene.trajectory.sample_rate;
  std::poisson_distribution<int> noise_count(noise_per_sample > 0 ? noise_per_sample : 1e-300);

  for (std::size_t j = 0; j < out.trajectory.size(); ++j) {
    const TrajectorySample& s = out.trajectory[j];
    for (std::size_t k = 0; k < points.size(); ++k) {
      const Eigen::Vector3d p_cam = points[k] - s.position;  // identity orientation
      if (p_cam.z() <= 0.0) continue;
      double x_px = cal.fx * p_cam.x() / p_cam.z() + cal.cx;
      double y_px = cal.fy * p_cam.y() / p_cam.z() + cal.cy;
      if (cal.has_distortion()) distort_pixel(cal, x_px, y_px, x_px, y_px);
      const long px = std::lround(x_px);
      const long py = std::lround(y_px);
      if (px < 0 || px >= cal.w || py < 0 || py >= cal.h) {
        state[k].px = std::numeric_limits<long>::min();
        continue;
      }
      const bool first = state[k].px == std::numeric_limits<long>::min();
      if (!first && (px != state[k].px || py != state[k].py)) {
        out.events.push_back({static_cast<double>(px), static_cast<double>(py), s.t,
                              state[k].polarity});
        state[k].polarity = -state[k].polarity;
      }
      state[k].px = px;
      state[k].py = py;
    }
    if (noise_per_sample > 0.0) {
      const int n = noise_count(rng);
      for (int i = 0; i < n; ++i)
        out.events.push_back({std::floor(ux(rng) * cal.w), std::floor(ux(rng) * cal.h), s.t,
                              ux(rng) < 0.5 ? -1 : +1});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Accuracy metric
// ---------------------------------------------------------------------------

struct AbsRelResult {
  double value = 0.0;
  std::size_t used = 0;     // present pixels with ground truth
  std::size_t skipped = 0;  // present pixels whose ray misses the scene
};

/// Mean over present pixels of |d_est - d_gt| / d_gt. Present pixels without
/// ground truth are excluded from the mean.
inline AbsRelResult abs_rel_detailed(const DepthMap& est, const GroundTruth& gt,
                                     const Calibration& cal) {
  if (est.present_count() == 0) throw UndefinedMetricError("abs_rel of an empty depth map");
  AbsRelResult r;
  double sum = 0.0;
  for (int y = 0; y < est.h; ++y)
    for (int x = 0; x < est.w; ++x) {
      if (!est.present(x, y)) continue;
      const auto d_gt = gt.depth(est.ref_pose, cal, x, y);
      if (!d_gt) {
        ++r.skipped;
        continue;
      }
      sum += std::abs(est.at(x, y) - *d_gt) / *d_gt;
      ++r.used;
    }
  if (r.used == 0) throw UndefinedMetricError("abs_rel: no present pixel has ground truth");
  r.value = sum / static_cast<double>(r.used);
  return r;
}

inline double abs_rel(const DepthMap& est, const GroundTruth& gt, const Calibration& cal) {
  return abs_rel_detailed(est, gt, cal).value;
}

// ---------------------------------------------------------------------------
// Built-in scenes
// ---------------------------------------------------------------------------

inline Calibration davis_calibration() {
  Calibration cal;
  cal.w = 240;
  cal.h = 180;
  cal.fx = cal.fy = 200.0;
  cal.cx = 120.0;
  cal.cy = 90.0;
  return cal;
}

namespace detail {

inline PlaneSpec axis_aligned_quad(double x0, double x1, double y0, double y1, double z,
                                   double density) {
  PlaneSpec p;
  p.corners = {Eigen::Vector3d(x0, y0, z), Eigen::Vector3d(x1, y0, z), Eigen::Vector3d(x1, y1, z),
               Eigen::Vector3d(x0, y1, z)};
  p.edge_point_density = density;
  return p;
}

}  // namespace detail

/// Three fronto-parallel quads at 1.0, 1.5 and 2.0 m, swept by a 0.3 m lateral
/// path. The path is diagonal in the image plane so no edge stays parallel to
/// the epipolar direction, and the quad footprints neither touch nor share
/// edge rows/columns at the reference view. Roughly 2e5 events at the default
/// density.
inline SceneSpec three_planes_scene(double density = 550.0) {
  SceneSpec scene;
  scene.planes.push_back(detail::axis_aligned_quad(-0.22, 0.02, -0.26, 0.22, 1.0, density));
  scene.planes.push_back(detail::axis_aligned_quad(0.12, 0.50, -0.48, 0.40, 1.5, density));
  scene.planes.push_back(detail::axis_aligned_quad(0.72, 1.10, -0.60, 0.75, 2.0, density));
  scene.trajectory.kind = TrajectorySpec::Kind::kLinear;
  scene.trajectory.start = Eigen::Vector3d::Zero();
  scene.trajectory.end = Eigen::Vector3d(0.24, 0.18, 0.0);
  scene.trajectory.duration = 2.0;
  scene.trajectory.sample_rate = 1000.0;
  scene.z_min = 0.7;
  scene.z_max = 2.8;
  return scene;
}

/// Three slanted wall quads forming a shallow corner; exercises non-constant
/// ground-truth depth across each surface.
inline SceneSpec three_walls_scene(double density = 600.0) {
  SceneSpec scene;
  auto wall = [&](double xl, double xr, double zl, double zr, double yh) {
    PlaneSpec p;
    p.corners = {Eigen::Vector3d(xl, -yh, zl), Eigen::Vector3d(xr, -yh, zr),
                 Eigen::Vector3d(xr, yh, zr), Eigen::Vector3d(xl, yh, zl)};
    p.edge_point_density = density;
    return p;
  };
  scene.planes.push_back(wall(-0.45, -0.05, 1.0, 1.35, 0.40));
  scene.planes.push_back(wall(0.10, 0.55, 1.45, 1.15, 0.45));
  scene.planes.push_back(wall(0.70, 1.15, 1.6, 2.0, 0.65));
  scene.trajectory.kind = TrajectorySpec::Kind::kLinear;
  scene.trajectory.start = Eigen::Vector3d::Zero();
  scene.trajectory.end = Eigen::Vector3d(0.24, 0.18, 0.0);
  scene.trajectory.duration = 2.0;
  scene.trajectory.sample_rate = 1000.0;
  scene.z_min = 0.7;
  scene.z_max = 2.8;
  return scene;
}

}  // namespace evsweep
