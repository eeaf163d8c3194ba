#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "pairopt/camera.hpp"

namespace pairopt {

/// Gravity-aligned 3D box. `center` is the true geometric center (KITTI
/// labels anchor at the bottom face; kitti_io shifts before building one of
/// these). Dimensions follow the usual convention: h vertical, l along the
/// heading, w lateral. `yaw` rotates about Y.
struct Box3D {
  WorldPoint center;
  double w = 0.0;
  double h = 0.0;
  double l = 0.0;
  double yaw = 0.0;
};

/// Four ground-plane vertices (x, z), counter-clockwise.
using BevPolygon = std::array<Eigen::Vector2d, 4>;

namespace detail {

inline void require_valid_box(const Box3D& b, const char* who) {
  if (!(b.w > 0.0) || !(b.h > 0.0) || !(b.l > 0.0) ||
      !std::isfinite(b.w) || !std::isfinite(b.h) || !std::isfinite(b.l) ||
      !std::isfinite(b.yaw) || !std::isfinite(b.center.x) ||
      !std::isfinite(b.center.y) || !std::isfinite(b.center.z)) {
    throw std::invalid_argument(std::string(who) + ": degenerate box");
  }
}

inline double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

}  // namespace detail

/// Signed shoelace area; positive for counter-clockwise vertex order.
inline double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    twice += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * twice;
}

inline double polygon_area(const BevPolygon& poly) {
  return polygon_area(std::vector<Eigen::Vector2d>(poly.begin(), poly.end()));
}

/// Sutherland-Hodgman clip of a convex subject polygon against a convex
/// counter-clockwise clip polygon. Boundary points count as inside.
inline std::vector<Eigen::Vector2d> clip_convex(const std::vector<Eigen::Vector2d>& subject,
                                                const BevPolygon& clip) {
  std::vector<Eigen::Vector2d> out(subject);
  std::vector<Eigen::Vector2d> in;
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Eigen::Vector2d a = clip[e];
    const Eigen::Vector2d b = clip[(e + 1) % clip.size()];
    const Eigen::Vector2d dir = b - a;
    in.swap(out);
    out.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Eigen::Vector2d& p = in[i];
      const Eigen::Vector2d& q = in[(i + 1) % in.size()];
      const double side_p = detail::cross2(dir, p - a);
      const double side_q = detail::cross2(dir, q - a);
      if (side_p >= 0.0) out.push_back(p);
      if ((side_p > 0.0 && side_q < 0.0) || (side_p < 0.0 && side_q > 0.0)) {
        const double t = side_p / (side_p - side_q);
        out.push_back(p + t * (q - p));
      }
    }
  }
  return out;
}

/// Bird's-eye-view footprint, counter-clockwise in the x-z plane.
inline BevPolygon bev_footprint(const Box3D& b) {
  detail::require_valid_box(b, "bev_footprint");
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double hl = 0.5 * b.l;
  const double hw = 0.5 * b.w;
  // Local (x, z) corners ordered counter-clockwise; the local-to-camera
  // rotation [x; z] = [[c, s], [-s, c]] [xl; zl] preserves orientation.
  const std::array<Eigen::Vector2d, 4> local = {
      Eigen::Vector2d(hl, hw), Eigen::Vector2d(-hl, hw),
      Eigen::Vector2d(-hl, -hw), Eigen::Vector2d(hl, -hw)};
  BevPolygon out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = Eigen::Vector2d(b.center.x + c * local[i].x() + s * local[i].y(),
                             b.center.z - s * local[i].x() + c * local[i].y());
  }
  return out;
}

/// Eight box corners. Order: bottom face (y = center.y + h/2 in the y-down
/// frame) counter-clockwise in the x-z plane starting at local (+l/2, +w/2),
/// then the top face in the same order.
inline std::array<WorldPoint, 8> box_corners(const Box3D& b) {
  detail::require_valid_box(b, "box_corners");
  const BevPolygon foot = bev_footprint(b);
  std::array<WorldPoint, 8> out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {foot[i].x(), b.center.y + 0.5 * b.h, foot[i].y()};
    out[i + 4] = {foot[i].x(), b.center.y - 0.5 * b.h, foot[i].y()};
  }
  return out;
}

/// Raw BEV intersection area of two boxes, with sub-1e-12 slivers zeroed.
inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const BevPolygon fa = bev_footprint(a);
  const BevPolygon fb = bev_footprint(b);
  const auto inter = clip_convex(std::vector<Eigen::Vector2d>(fa.begin(), fa.end()), fb);
  const double area = polygon_area(inter);
  return area < 1e-12 ? 0.0 : area;
}

/// Rotated-rectangle IoU in the ground plane.
inline double bev_iou(const Box3D& a, const Box3D& b) {
  detail::require_valid_box(a, "bev_iou");
  detail::require_valid_box(b, "bev_iou");
  const double inter = bev_intersection_area(a, b);
  const double area_a = polygon_area(bev_footprint(a));
  const double area_b = polygon_area(bev_footprint(b));
  const double uni = area_a + area_b - inter;
  if (!(uni > 0.0)) throw std::invalid_argument("bev_iou: zero-area boxes");
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Volumetric IoU: BEV intersection times the overlap of the vertical
/// extents [center.y - h/2, center.y + h/2].
inline double iou_3d(const Box3D& a, const Box3D& b) {
  detail::require_valid_box(a, "iou_3d");
  detail::require_valid_box(b, "iou_3d");
  const double inter_area = bev_intersection_area(a, b);
  const double y_lo = std::max(a.center.y - 0.5 * a.h, b.center.y - 0.5 * b.h);
  const double y_hi = std::min(a.center.y + 0.5 * a.h, b.center.y + 0.5 * b.h);
  const double overlap = std::max(0.0, y_hi - y_lo);
  const double inter = inter_area * overlap;
  const double vol_a = polygon_area(bev_footprint(a)) * a.h;
  const double vol_b = polygon_area(bev_footprint(b)) * b.h;
  const double uni = vol_a + vol_b - inter;
  if (!(uni > 0.0)) throw std::invalid_argument("iou_3d: zero-volume boxes");
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace pairopt
