#pragma once

#include <string>

#include "pairopt/camera.hpp"

namespace pairopt {

/// One detected object's 2D/3D state with per-quantity uncertainties. All
/// 2D quantities are in feature-map coordinates; the location prior of the
/// post-optimization is (proj_u, proj_v, z).
struct ObjectHypothesis {
  std::string cls = "Car";
  FeaturePoint keypoint;     ///< heatmap cell c^g
  double offset_u = 0.0;     ///< offset from keypoint to projected 3D center
  double offset_v = 0.0;
  double z = 1.0;            ///< depth prior [m]
  double sigma_z = 1.0;
  double sigma_uv = 1.0;
  double width = 0.0;        ///< w, h, l [m]
  double height = 0.0;
  double length = 0.0;
  double alpha = 0.0;        ///< local yaw [rad]
  FeaturePoint bbox_center;  ///< 2D box center c^b
  double bbox_w = 0.0;
  double bbox_h = 0.0;
  double score = 1.0;
  // Carried through from KITTI-format lines so emitted files stay diffable.
  double truncated = -1.0;
  int occluded = -1;

  double proj_u() const { return keypoint.u + offset_u; }
  double proj_v() const { return keypoint.v + offset_v; }

  /// 3D center implied by the current (u, v, z) state.
  WorldPoint center(const CameraModel& cam) const {
    return back_project(cam, proj_u(), proj_v(), z);
  }
};

/// A predicted pairwise constraint between two hypotheses of one image.
struct PairConstraintRecord {
  int i = 0;  ///< indices into the image's hypothesis list, i < j
  int j = 0;
  double kx = 0.0;  ///< predicted local-frame absolute distance [m]
  double ky = 0.0;
  double kz = 0.0;
  double sigma_k = 1.0;
};

}  // namespace pairopt
