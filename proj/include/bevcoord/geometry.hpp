#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "bevcoord/types.hpp"

namespace bevcoord {

// Axis-aligned-to-heading rectangle in the BEV plane. `length` runs along the
// heading direction, `width` across it.
struct BevBox {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double length = 1.0;
  double width = 1.0;
  double heading = 0.0;
};

BevBox bev_box(const Eigen::Vector2d& center, const Eigen::Vector3d& size,
               double heading);

// Corners in counter-clockwise order for heading 0:
// front-left, rear-left, rear-right, front-right.
std::array<Eigen::Vector2d, 4> box_corners(const BevBox& box);

// Signed shoelace area; counter-clockwise polygons have positive area.
double polygon_area(const std::vector<Eigen::Vector2d>& polygon);

// Convex polygon intersection area (Sutherland-Hodgman clip).
double convex_intersection_area(const std::vector<Eigen::Vector2d>& subject,
                                const std::vector<Eigen::Vector2d>& clip);

// Intersection-over-union of two BEV rectangles. Symmetric by construction
// (operands are processed in a canonical order) and always in [0, 1].
double bev_iou(const BevBox& a, const BevBox& b);

// Axis-aligned IoU of two image-plane boxes [u_min, v_min, u_max, v_max].
double bbox_iou(const std::array<double, 4>& a, const std::array<double, 4>& b);

// Sensor-frame point into the ego frame: R * p + t.
Eigen::Vector3d to_ego(const SensorPose& pose, const Eigen::Vector3d& p_sensor);

// Ego-frame point into the sensor frame: R^T * (p - t).
Eigen::Vector3d to_sensor(const SensorPose& pose, const Eigen::Vector3d& p_ego);

// Pinhole projection of an ego-frame point. Returns pixel coordinates, or
// nullopt when the point sits at or behind the camera plane (z_cam <= z_min).
// The projection is scale invariant along the optical ray.
std::optional<Eigen::Vector2d> project_point(const CameraModel& camera,
                                             const Eigen::Vector3d& p_ego,
                                             double z_min = 1e-3);

// Image-plane bounding box of a 3D box footprint: min/max over the projected
// corners that lie in front of the camera, clamped to the image bounds.
// Returns nullopt when every corner is behind the camera or the clamped box
// is empty (object fully outside the frame).
std::optional<std::array<double, 4>> project_box_footprint(
    const CameraModel& camera, const Eigen::Vector3d& center_ego,
    const Eigen::Vector3d& size, double heading, double z_min = 1e-3);

// Radar measurement lifted into the ego frame.
struct RadarProjection {
  Eigen::Vector3d position_ego = Eigen::Vector3d::Zero();
  // BEV velocity reconstructed along the line of sight; absent when the
  // target sits on the radar origin in BEV (degenerate line of sight).
  std::optional<Eigen::Vector2d> velocity_bev;
  bool los_degenerate = false;
};

// Polar return [range, azimuth] to a Cartesian ego position, and the radial
// speed to a BEV velocity vector along the unit line of sight from the radar
// origin. The reconstructed velocity carries no cross-radial component.
RadarProjection radar_to_ego(const SensorPose& radar_pose, const RadarReturn& r,
                             double eps_los = 1e-6);

}  // namespace bevcoord
