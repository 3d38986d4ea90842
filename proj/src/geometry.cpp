#include "bevcoord/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "bevcoord/errors.hpp"

namespace bevcoord {
namespace {

// Clips `poly` against the half-plane on the left of edge a->b.
std::vector<Eigen::Vector2d> clip_to_edge(const std::vector<Eigen::Vector2d>& poly,
                                          const Eigen::Vector2d& a,
                                          const Eigen::Vector2d& b) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(poly.size() + 2);
  const Eigen::Vector2d edge = b - a;
  auto side = [&](const Eigen::Vector2d& p) {
    return edge.x() * (p.y() - a.y()) - edge.y() * (p.x() - a.x());
  };
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& cur = poly[i];
    const Eigen::Vector2d& nxt = poly[(i + 1) % n];
    double s_cur = side(cur);
    double s_nxt = side(nxt);
    if (s_cur >= 0.0) out.push_back(cur);
    if ((s_cur > 0.0 && s_nxt < 0.0) || (s_cur < 0.0 && s_nxt > 0.0)) {
      double t = s_cur / (s_cur - s_nxt);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return out;
}

bool box_order_before(const BevBox& a, const BevBox& b) {
  if (a.center.x() != b.center.x()) return a.center.x() < b.center.x();
  if (a.center.y() != b.center.y()) return a.center.y() < b.center.y();
  if (a.length != b.length) return a.length < b.length;
  if (a.width != b.width) return a.width < b.width;
  return a.heading < b.heading;
}

}  // namespace

BevBox bev_box(const Eigen::Vector2d& center, const Eigen::Vector3d& size,
               double heading) {
  BevBox box;
  box.center = center;
  box.length = size.x();
  box.width = size.y();
  box.heading = heading;
  return box;
}

std::array<Eigen::Vector2d, 4> box_corners(const BevBox& box) {
  const double c = std::cos(box.heading);
  const double s = std::sin(box.heading);
  const double hl = 0.5 * box.length;
  const double hw = 0.5 * box.width;
  auto corner = [&](double dx, double dy) {
    return Eigen::Vector2d(box.center.x() + c * dx - s * dy,
                           box.center.y() + s * dx + c * dy);
  };
  return {corner(hl, hw), corner(-hl, hw), corner(-hl, -hw), corner(hl, -hw)};
}

double polygon_area(const std::vector<Eigen::Vector2d>& polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& p = polygon[i];
    const Eigen::Vector2d& q = polygon[(i + 1) % n];
    twice += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * twice;
}

double convex_intersection_area(const std::vector<Eigen::Vector2d>& subject,
                                const std::vector<Eigen::Vector2d>& clip) {
  std::vector<Eigen::Vector2d> poly = subject;
  const std::size_t n = clip.size();
  for (std::size_t i = 0; i < n && !poly.empty(); ++i) {
    poly = clip_to_edge(poly, clip[i], clip[(i + 1) % n]);
  }
  return std::fabs(polygon_area(poly));
}

double bev_iou(const BevBox& a, const BevBox& b) {
  // Canonical operand order makes iou(a, b) bitwise equal to iou(b, a).
  if (box_order_before(b, a)) return bev_iou(b, a);
  auto ca = box_corners(a);
  auto cb = box_corners(b);
  std::vector<Eigen::Vector2d> pa(ca.begin(), ca.end());
  std::vector<Eigen::Vector2d> pb(cb.begin(), cb.end());
  const double inter = convex_intersection_area(pa, pb);
  const double area_a = a.length * a.width;
  const double area_b = b.length * b.width;
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  double iou = inter / uni;
  return std::clamp(iou, 0.0, 1.0);
}

double bbox_iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double iw = std::min(a[2], b[2]) - std::max(a[0], b[0]);
  const double ih = std::min(a[3], b[3]) - std::max(a[1], b[1]);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double area_a = (a[2] - a[0]) * (a[3] - a[1]);
  const double area_b = (b[2] - b[0]) * (b[3] - b[1]);
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

Eigen::Vector3d to_ego(const SensorPose& pose, const Eigen::Vector3d& p_sensor) {
  return pose.rotation * p_sensor + pose.translation;
}

Eigen::Vector3d to_sensor(const SensorPose& pose, const Eigen::Vector3d& p_ego) {
  return pose.rotation.transpose() * (p_ego - pose.translation);
}

std::optional<Eigen::Vector2d> project_point(const CameraModel& camera,
                                             const Eigen::Vector3d& p_ego,
                                             double z_min) {
  const Eigen::Vector3d p_cam = to_sensor(camera.pose, p_ego);
  if (p_cam.z() <= z_min) return std::nullopt;
  const double u = camera.fx * (p_cam.x() / p_cam.z()) + camera.cx;
  const double v = camera.fy * (p_cam.y() / p_cam.z()) + camera.cy;
  return Eigen::Vector2d(u, v);
}

std::optional<std::array<double, 4>> project_box_footprint(
    const CameraModel& camera, const Eigen::Vector3d& center_ego,
    const Eigen::Vector3d& size, double heading, double z_min) {
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  const double hl = 0.5 * size.x();
  const double hw = 0.5 * size.y();
  const double hh = 0.5 * size.z();
  double u_min = std::numeric_limits<double>::infinity();
  double v_min = std::numeric_limits<double>::infinity();
  double u_max = -std::numeric_limits<double>::infinity();
  double v_max = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (int dx = -1; dx <= 1; dx += 2) {
    for (int dy = -1; dy <= 1; dy += 2) {
      for (int dz = -1; dz <= 1; dz += 2) {
        const Eigen::Vector3d corner(
            center_ego.x() + c * dx * hl - s * dy * hw,
            center_ego.y() + s * dx * hl + c * dy * hw,
            center_ego.z() + dz * hh);
        auto px = project_point(camera, corner, z_min);
        if (!px) continue;
        any = true;
        u_min = std::min(u_min, px->x());
        v_min = std::min(v_min, px->y());
        u_max = std::max(u_max, px->x());
        v_max = std::max(v_max, px->y());
      }
    }
  }
  if (!any) return std::nullopt;
  u_min = std::clamp(u_min, 0.0, static_cast<double>(camera.width));
  u_max = std::clamp(u_max, 0.0, static_cast<double>(camera.width));
  v_min = std::clamp(v_min, 0.0, static_cast<double>(camera.height));
  v_max = std::clamp(v_max, 0.0, static_cast<double>(camera.height));
  if (u_max - u_min <= 0.0 || v_max - v_min <= 0.0) return std::nullopt;
  return std::array<double, 4>{u_min, v_min, u_max, v_max};
}

RadarProjection radar_to_ego(const SensorPose& radar_pose, const RadarReturn& r,
                             double eps_los) {
  RadarProjection out;
  const Eigen::Vector3d p_radar(r.range_m * std::cos(r.azimuth_rad),
                                r.range_m * std::sin(r.azimuth_rad), 0.0);
  out.position_ego = to_ego(radar_pose, p_radar);
  const Eigen::Vector2d los(out.position_ego.x() - radar_pose.translation.x(),
                            out.position_ego.y() - radar_pose.translation.y());
  const double norm = los.norm();
  if (norm <= eps_los) {
    out.los_degenerate = true;
    return out;
  }
  out.velocity_bev = (r.radial_speed_mps / norm) * los;
  return out;
}

}  // namespace bevcoord
