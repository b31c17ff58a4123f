#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "evsweep/errors.hpp"
#include "evsweep/event_io.hpp"

namespace evsweep {

// ---------------------------------------------------------------------------
// Poses
// ---------------------------------------------------------------------------

/// Rigid transform world <- camera: x_world = rotation * x_cam + translation.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }
};

inline Eigen::Matrix3d intrinsic_matrix(const Calibration& cal) {
  Eigen::Matrix3d k;
  k << cal.fx, 0.0, cal.cx, 0.0, cal.fy, cal.cy, 0.0, 0.0, 1.0;
  return k;
}

/// Linear position / spherical orientation interpolation between the
/// bracketing samples; returns the stored pose exactly at a knot.
inline Pose interpolate_pose(std::span<const TrajectorySample> traj, double t) {
  if (traj.empty()) throw OutOfRangeError("pose lookup on empty trajectory");
  if (t < traj.front().t || t > traj.back().t)
    throw OutOfRangeError("pose lookup at t outside trajectory range");

  auto upper = std::upper_bound(traj.begin(), traj.end(), t,
                                [](double v, const TrajectorySample& s) { return v < s.t; });
  const TrajectorySample& hi = upper == traj.end() ? traj.back() : *upper;
  const TrajectorySample& lo = upper == traj.begin() ? traj.front() : *(upper - 1);

  Pose pose;
  if (lo.t == t || &lo == &hi) {
    pose.rotation = lo.orientation.toRotationMatrix();
    pose.translation = lo.position;
    return pose;
  }
  const double u = (t - lo.t) / (hi.t - lo.t);
  pose.translation = (1.0 - u) * lo.position + u * hi.position;
  pose.rotation = lo.orientation.slerp(u, hi.orientation).toRotationMatrix();
  return pose;
}

// ---------------------------------------------------------------------------
// Distortion correction
// ---------------------------------------------------------------------------

/// Inverts the radial-tangential model (k1,k2,p1,p2,k3) by 8 fixed-point
/// iterations. Output coordinates are clamped to [-255, 255] so that they
/// remain representable downstream.
inline Event undistort_event(const Event& e, const Calibration& cal) {
  Event out = e;
  if (!cal.has_distortion()) return out;

  const double k1 = cal.dist[0], k2 = cal.dist[1];
  const double p1 = cal.dist[2], p2 = cal.dist[3], k3 = cal.dist[4];
  const double xd = (e.x - cal.cx) / cal.fx;
  const double yd = (e.y - cal.cy) / cal.fy;

  double x = xd, y = yd;
  for (int it = 0; it < 8; ++it) {
    const double r2 = x * x + y * y;
    const double icdist = 1.0 / (1.0 + r2 * (k1 + r2 * (k2 + r2 * k3)));
    const double dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
    const double dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
    x = (xd - dx) * icdist;
    y = (yd - dy) * icdist;
  }
  out.x = std::clamp(cal.fx * x + cal.cx, -255.0, 255.0);
  out.y = std::clamp(cal.fy * y + cal.cy, -255.0, 255.0);
  return out;
}

/// Forward radial-tangential distortion of an ideal pixel. Used by the
/// synthetic generator to emit raw sensor coordinates.
inline void distort_pixel(const Calibration& cal, double x_px, double y_px,
                          double& xd_px, double& yd_px) {
  const double x = (x_px - cal.cx) / cal.fx;
  const double y = (y_px - cal.cy) / cal.fy;
  const double k1 = cal.dist[0], k2 = cal.dist[1];
  const double p1 = cal.dist[2], p2 = cal.dist[3], k3 = cal.dist[4];
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
  const double xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
  xd_px = cal.fx * xd + cal.cx;
  yd_px = cal.fy * yd + cal.cy;
}

// ---------------------------------------------------------------------------
// Depth planes
// ---------------------------------------------------------------------------

/// Sweep planes, fronto-parallel in the reference view. The nearest plane is
/// the canonical one (index 0).
struct DepthPlanes {
  std::vector<double> depths;  // strictly increasing, meters
  int canonical_index = 0;

  int count() const { return static_cast<int>(depths.size()); }
  double canonical_depth() const { return depths[canonical_index]; }
  /// Constant step of the inverse-depth grid.
  double inverse_depth_step() const {
    return (1.0 / depths.front() - 1.0 / depths.back()) / (depths.size() - 1);
  }
};

/// n depths uniformly spaced in inverse depth over [z_min, z_max].
inline DepthPlanes make_depth_planes(double z_min, double z_max, int n) {
  if (!(z_min > 0.0) || !(z_max > z_min)) throw ValidationError("depth planes: need 0 < z_min < z_max");
  if (n < 2) throw ValidationError("depth planes: need at least 2 planes");
  DepthPlanes planes;
  planes.depths.resize(n);
  const double inv_min = 1.0 / z_min;
  const double inv_max = 1.0 / z_max;
  for (int i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / (n - 1);
    planes.depths[i] = 1.0 / (inv_min + u * (inv_max - inv_min));
  }
  planes.depths.front() = z_min;
  planes.depths.back() = z_max;
  planes.canonical_index = 0;
  return planes;
}

// ---------------------------------------------------------------------------
// Plane-induced homography
// ---------------------------------------------------------------------------

/// Maps homogeneous event-camera pixels to virtual-camera pixels through the
/// canonical plane.
struct Homography {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
};

namespace detail {

/// x_event = R * x_virtual + t.
inline void relative_transform(const Pose& event_pose, const Pose& ref_pose,
                               Eigen::Matrix3d& r, Eigen::Vector3d& t) {
  r = event_pose.rotation.transpose() * ref_pose.rotation;
  t = event_pose.rotation.transpose() * (ref_pose.translation - event_pose.translation);
}

/// Event-camera center expressed in the virtual (reference) frame.
inline Eigen::Vector3d event_center_in_ref(const Pose& event_pose, const Pose& ref_pose) {
  return ref_pose.rotation.transpose() * (event_pose.translation - ref_pose.translation);
}

inline Eigen::Matrix3d normalize_homography(Eigen::Matrix3d m) {
  if (std::abs(m(2, 2)) > 1e-9) m /= m(2, 2);
  return m;
}

}  // namespace detail

/// Event pixel -> virtual pixel through the plane z = z0 of the virtual frame.
inline Homography compute_homography(const Pose& event_pose, const Pose& ref_pose,
                                     const Calibration& cal, double z0) {
  if (!(z0 > 0.0)) throw ValidationError("homography: canonical depth must be positive");
  Eigen::Matrix3d r;
  Eigen::Vector3d t;
  detail::relative_transform(event_pose, ref_pose, r, t);

  Eigen::Matrix3d plane_map = r;
  plane_map.col(2) += t / z0;  // r + t * n^T / z0 with n = (0,0,1)
  const Eigen::Matrix3d k = intrinsic_matrix(cal);
  const Eigen::Matrix3d h_virtual_to_event = k * plane_map * k.inverse();
  const double det = h_virtual_to_event.determinant();
  if (std::abs(det) < 1e-12)
    throw DegenerateGeometryError("canonical plane passes through the event camera center");

  Homography h;
  h.m = detail::normalize_homography(h_virtual_to_event.inverse());
  if (std::abs(h.m.determinant()) < 1e-12)
    throw DegenerateGeometryError("homography is numerically singular");
  return h;
}

// ---------------------------------------------------------------------------
// Proportional back-projection coefficients
// ---------------------------------------------------------------------------

/// Per depth plane, the affine map taking canonical-plane pixels to plane-i
/// pixels: x(Zi) = a*(x(Z0) - cx) + bx + cx (same shape for y).
struct PropCoeffs {
  struct PlaneCoeff {
    double a = 1.0;   // dimensionless
    double bx = 0.0;  // pixels
    double by = 0.0;  // pixels
  };
  std::vector<PlaneCoeff> planes;
  double cx = 0.0;
  double cy = 0.0;
};

inline PropCoeffs compute_prop_coeffs(const Pose& event_pose, const Pose& ref_pose,
                                      const Calibration& cal, const DepthPlanes& planes) {
  const Eigen::Vector3d c = detail::event_center_in_ref(event_pose, ref_pose);
  const double z0 = planes.canonical_depth();
  if (std::abs(z0 - c.z()) <= 1e-9)
    throw DegenerateGeometryError("event camera center lies on the canonical plane");

  PropCoeffs phi;
  phi.cx = cal.cx;
  phi.cy = cal.cy;
  phi.planes.resize(planes.depths.size());
  for (std::size_t i = 0; i < planes.depths.size(); ++i) {
    const double zi = planes.depths[i];
    const double mu = (zi - c.z()) / (z0 - c.z());
    phi.planes[i].a = mu * z0 / zi;
    phi.planes[i].bx = cal.fx * c.x() * (1.0 - mu) / zi;
    phi.planes[i].by = cal.fy * c.y() * (1.0 - mu) / zi;
  }
  // The canonical plane maps to itself without error.
  auto& canonical = phi.planes[planes.canonical_index];
  canonical.a = 1.0;
  canonical.bx = 0.0;
  canonical.by = 0.0;
  return phi;
}

}  // namespace evsweep
