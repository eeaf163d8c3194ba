#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Core>

namespace pairopt {

/// Rectified pinhole intrinsics in pixel units, the translation entries of a
/// 3x4 projection matrix (zero when the calibration has none), and the
/// feature-map downsampling factor s. Feature coordinates are image pixels
/// divided by s; all projective math below multiplies by s before applying
/// the intrinsics.
struct CameraModel {
  double fx = 1.0;  ///< focal length [px]
  double fy = 1.0;
  double ax = 0.0;  ///< principal point [px]
  double ay = 0.0;
  double tx = 0.0;  ///< projection-matrix fourth column [px*m]
  double ty = 0.0;
  int s = 1;        ///< pixels per feature cell

  bool valid() const { return fx > 0.0 && fy > 0.0 && s >= 1; }
};

/// Camera-frame point: x right, y down, z forward (meters).
struct WorldPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Continuous feature-map coordinates (feature cells).
struct FeaturePoint {
  double u = 0.0;
  double v = 0.0;
};

/// Lifts a feature-map location at a known depth back into the camera frame.
inline WorldPoint back_project(const CameraModel& cam, double u, double v, double z) {
  if (!std::isfinite(z) || z <= 0.0) {
    throw std::invalid_argument("back_project: depth must be finite and positive");
  }
  return {((u * cam.s - cam.ax) * z - cam.tx) / cam.fx,
          ((v * cam.s - cam.ay) * z - cam.ty) / cam.fy,
          z};
}

inline WorldPoint back_project(const CameraModel& cam, const FeaturePoint& p, double z) {
  return back_project(cam, p.u, p.v, z);
}

/// Exact algebraic inverse of back_project at depth p.z.
inline FeaturePoint project(const CameraModel& cam, const WorldPoint& p) {
  if (!std::isfinite(p.z) || p.z <= 0.0) {
    throw std::invalid_argument("project: point must lie in front of the camera");
  }
  const double px = (cam.fx * p.x + cam.tx) / p.z + cam.ax;
  const double py = (cam.fy * p.y + cam.ty) / p.z + cam.ay;
  return {px / cam.s, py / cam.s};
}

/// Depth head output is an unconstrained real; the decoded depth is
/// 1/sigmoid(t) - 1, which collapses to exp(-t).
inline double depth_decode(double z_hat) {
  if (!std::isfinite(z_hat)) {
    throw std::invalid_argument("depth_decode: non-finite input");
  }
  return std::exp(-z_hat);
}

inline double depth_encode(double z) {
  if (!std::isfinite(z) || z <= 0.0) {
    throw std::invalid_argument("depth_encode: depth must be positive");
  }
  return -std::log(z);
}

/// Viewing angle gamma = arctan(x/z) of a point in front of the camera.
inline double viewing_angle(double x, double z) {
  if (!std::isfinite(z) || z <= 0.0) {
    throw std::invalid_argument("viewing_angle: z must be positive");
  }
  return std::atan2(x, z);
}

/// Wraps an angle into (-pi, pi]; -pi maps to +pi.
inline double wrap_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  double r = std::fmod(a + kPi, 2.0 * kPi);
  if (r <= 0.0) r += 2.0 * kPi;
  return r - kPi;
}

/// Global yaw beta = alpha + gamma, matching the KITTI relation
/// alpha = ry - arctan(x/z).
inline double local_to_global_yaw(double alpha, double gamma) {
  return wrap_angle(alpha + gamma);
}

inline double global_to_local_yaw(double beta, double gamma) {
  return wrap_angle(beta - gamma);
}

/// World-to-local rotation about the Y axis: R(gamma) maps the viewing ray
/// (sin gamma, 0, cos gamma) onto the +z axis.
inline Eigen::Matrix3d rotation_about_y(double gamma) {
  const double c = std::cos(gamma);
  const double s = std::sin(gamma);
  Eigen::Matrix3d r;
  r << c, 0.0, -s,
       0.0, 1.0, 0.0,
       s, 0.0, c;
  return r;
}

}  // namespace pairopt
