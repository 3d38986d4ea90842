#include "bevcoord/association.hpp"

#include <algorithm>
#include <cmath>

#include "bevcoord/errors.hpp"

namespace bevcoord {
namespace {

constexpr double kCovarianceEps = 1e-12;

// Rows assigned to kForbiddenCost-or-worse cells count as unmatched.
constexpr double kForbiddenThreshold = kForbiddenCost * 0.5;

}  // namespace

BevGridIndex::BevGridIndex(double cell_size) : cell_size_(cell_size) {
  if (!(cell_size > 0.0)) {
    throw InternalError("BevGridIndex: cell size must be positive");
  }
}

void BevGridIndex::insert(int id, const Eigen::Vector2d& position) {
  const long long cx = static_cast<long long>(std::floor(position.x() / cell_size_));
  const long long cy = static_cast<long long>(std::floor(position.y() / cell_size_));
  cells_[{cx, cy}].push_back(static_cast<int>(ids_.size()));
  ids_.push_back(id);
  positions_.push_back(position);
}

std::vector<int> BevGridIndex::query_radius(const Eigen::Vector2d& center,
                                            double radius) const {
  if (radius > cell_size_ + 1e-12) {
    throw InternalError("BevGridIndex: query radius exceeds cell size");
  }
  const long long cx = static_cast<long long>(std::floor(center.x() / cell_size_));
  const long long cy = static_cast<long long>(std::floor(center.y() / cell_size_));
  std::vector<int> out;
  for (long long dx = -1; dx <= 1; ++dx) {
    for (long long dy = -1; dy <= 1; ++dy) {
      auto it = cells_.find({cx + dx, cy + dy});
      if (it == cells_.end()) continue;
      for (int slot : it->second) {
        if ((positions_[slot] - center).norm() <= radius) {
          out.push_back(ids_[slot]);
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

PairDistance pair_distance(const Eigen::Vector2d& pa,
                           const std::optional<Eigen::Matrix2d>& cov_a,
                           const Eigen::Vector2d& pb,
                           const std::optional<Eigen::Matrix2d>& cov_b) {
  const Eigen::Vector2d dp = pa - pb;
  if (cov_a || cov_b) {
    Eigen::Matrix2d sum = Eigen::Matrix2d::Zero();
    if (cov_a) sum += *cov_a;
    if (cov_b) sum += *cov_b;
    if (std::fabs(sum.determinant()) > kCovarianceEps) {
      return {dp.dot(sum.inverse() * dp), DistanceMetric::kMahalanobisSq};
    }
  }
  return {dp.norm(), DistanceMetric::kEuclidean};
}

double composite_cost(const Detection3D& a, const Detection3D& b,
                      const AssociationConfig& config) {
  const PairDistance d = pair_distance(a.center_ego.head<2>(), a.position_cov,
                                       b.center_ego.head<2>(), b.position_cov);
  const double gate = d.metric == DistanceMetric::kMahalanobisSq
                          ? config.gate_mahalanobis_sq
                          : config.gate_euclidean_m;
  if (d.value > gate) return kForbiddenCost;
  double cost = d.value;
  if (argmax_class(a.class_probs) != argmax_class(b.class_probs)) {
    cost += config.lambda_class;
  }
  cost += config.lambda_size * (a.size - b.size).norm();
  return cost;
}

Assignment solve_assignment(const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  Assignment result;
  result.row_to_col.assign(rows, -1);
  result.col_to_row.assign(cols, -1);
  if (rows == 0 || cols == 0) return result;

  // Pad to square with the forbidden sentinel; padded cells never count as
  // matches. Potential-based O(n^3) shortest augmenting path method.
  const int n = std::max(rows, cols);
  auto cell = [&](int i, int j) -> double {
    if (i < rows && j < cols) {
      double v = cost(i, j);
      if (!std::isfinite(v)) return kForbiddenCost;
      return std::min(v, kForbiddenCost);
    }
    return kForbiddenCost;
  };

  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cell(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }

  for (int j = 1; j <= n; ++j) {
    const int i = match[j] - 1;
    const int col = j - 1;
    if (i < 0 || i >= rows || col >= cols) continue;
    if (cell(i, col) >= kForbiddenThreshold) continue;
    result.row_to_col[i] = col;
    result.col_to_row[col] = i;
  }
  for (int i = 0; i < rows; ++i) {
    if (result.row_to_col[i] >= 0) {
      result.total_cost += cost(i, result.row_to_col[i]);
    }
  }
  return result;
}

Eigen::Vector2d seed_position(const SeedEntity& seed) {
  if (seed.observations.empty()) {
    throw InternalError("seed_position: seed has no 3D observations");
  }
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  for (const auto& obs : seed.observations) {
    sum += obs.detection.center_ego.head<2>();
  }
  return sum / static_cast<double>(seed.observations.size());
}

std::string seed_class(const SeedEntity& seed) {
  std::map<std::string, double> merged;
  for (const auto& obs : seed.observations) {
    for (const auto& [name, p] : obs.detection.class_probs) {
      merged[name] += p;
    }
  }
  if (merged.empty()) {
    throw InternalError("seed_class: seed has no class evidence");
  }
  return argmax_class(merged);
}

namespace {

Eigen::Vector3d seed_size(const SeedEntity& seed) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (const auto& obs : seed.observations) sum += obs.detection.size;
  return sum / static_cast<double>(seed.observations.size());
}

double seed_heading(const SeedEntity& seed) {
  double sx = 0.0, sy = 0.0;
  for (const auto& obs : seed.observations) {
    sx += std::cos(obs.detection.heading_rad);
    sy += std::sin(obs.detection.heading_rad);
  }
  return std::atan2(sy, sx);
}

std::optional<Eigen::Vector2d> seed_velocity(const SeedEntity& seed) {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  int count = 0;
  for (const auto& obs : seed.observations) {
    if (obs.detection.velocity_bev) {
      sum += *obs.detection.velocity_bev;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return Eigen::Vector2d(sum / count);
}

const AgentFactSet* find_agent(const std::vector<AgentFactSet>& agents,
                               AgentKind kind) {
  for (const auto& a : agents) {
    if (a.agent_kind == kind) return &a;
  }
  return nullptr;
}

// Stage 1: one-to-one LiDAR / BEV-fusion pairing under the composite cost.
std::vector<SeedEntity> stage1_seeds(const AgentFactSet* lidar,
                                     const AgentFactSet* bev,
                                     const AssociationConfig& config) {
  std::vector<SeedEntity> seeds;
  const std::vector<Detection3D> empty;
  const std::vector<Detection3D>& dl = lidar ? lidar->detections_3d : empty;
  const std::vector<Detection3D>& db = bev ? bev->detections_3d : empty;

  // Neighborhood prefilter: only pairs inside the gate radius get a finite
  // cost. The grid keeps candidate generation linear in detection count.
  BevGridIndex grid(config.gate_radius_m);
  for (std::size_t j = 0; j < db.size(); ++j) {
    grid.insert(static_cast<int>(j), db[j].center_ego.head<2>());
  }
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(
      static_cast<Eigen::Index>(dl.size()), static_cast<Eigen::Index>(db.size()),
      kForbiddenCost);
  for (std::size_t i = 0; i < dl.size(); ++i) {
    for (int j : grid.query_radius(dl[i].center_ego.head<2>(),
                                   config.gate_radius_m)) {
      cost(static_cast<Eigen::Index>(i), j) =
          composite_cost(dl[i], db[static_cast<std::size_t>(j)], config);
    }
  }
  const Assignment assign = solve_assignment(cost);

  for (std::size_t i = 0; i < dl.size(); ++i) {
    SeedEntity seed;
    seed.observations.push_back({AgentKind::kLidar, dl[i]});
    const int j = assign.row_to_col.empty() ? -1 : assign.row_to_col[i];
    if (j >= 0) {
      seed.observations.push_back({AgentKind::kBevFusion,
                                   db[static_cast<std::size_t>(j)]});
    }
    seeds.push_back(std::move(seed));
  }
  for (std::size_t j = 0; j < db.size(); ++j) {
    if (!assign.col_to_row.empty() && assign.col_to_row[j] >= 0) continue;
    SeedEntity seed;
    seed.observations.push_back({AgentKind::kBevFusion, db[j]});
    seeds.push_back(std::move(seed));
  }
  return seeds;
}

// Stage 2: radar clusters onto seeds. The radar velocity holds only its
// radial component, so consistency compares radial projections: the gate is
// |v_radar - v_seed . los| along the line of sight. The comparison is
// invariant to the sign convention of the line of sight. Seeds without any
// velocity estimate pass the gate vacuously.
void stage2_attach_radar(std::vector<SeedEntity>& seeds,
                         const AgentFactSet* radar,
                         const Calibration& calibration,
                         const AssociationConfig& config) {
  if (!radar || radar->detections_3d.empty()) return;
  const auto& dr = radar->detections_3d;

  Eigen::Vector2d radar_origin = Eigen::Vector2d::Zero();
  if (auto it = calibration.sensors.find("radar"); it != calibration.sensors.end()) {
    radar_origin = it->second.translation.head<2>();
  }

  BevGridIndex grid(config.gate_radius_m);
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    grid.insert(static_cast<int>(s), seed_position(seeds[s]));
  }

  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(
      static_cast<Eigen::Index>(dr.size()),
      static_cast<Eigen::Index>(seeds.size()), kForbiddenCost);
  for (std::size_t i = 0; i < dr.size(); ++i) {
    const Eigen::Vector2d p_radar = dr[i].center_ego.head<2>();
    for (int s : grid.query_radius(p_radar, config.gate_radius_m)) {
      const SeedEntity& seed = seeds[static_cast<std::size_t>(s)];
      // Distance gate against the seed mean; the mean of k independent
      // observations carries covariance (sum of blocks) / k^2.
      std::optional<Eigen::Matrix2d> seed_cov;
      for (const auto& obs : seed.observations) {
        if (obs.detection.position_cov) {
          seed_cov = seed_cov ? Eigen::Matrix2d(*seed_cov + *obs.detection.position_cov)
                              : *obs.detection.position_cov;
        }
      }
      if (seed_cov) {
        const double k = static_cast<double>(seed.observations.size());
        seed_cov = Eigen::Matrix2d(*seed_cov / (k * k));
      }
      const PairDistance d = pair_distance(p_radar, dr[i].position_cov,
                                           seed_position(seed), seed_cov);
      const double gate = d.metric == DistanceMetric::kMahalanobisSq
                              ? config.gate_mahalanobis_sq
                              : config.gate_euclidean_m;
      if (d.value > gate) continue;

      // Radial velocity consistency.
      if (dr[i].velocity_bev) {
        const auto v_seed = seed_velocity(seed);
        if (v_seed) {
          const Eigen::Vector2d v_radar = *dr[i].velocity_bev;
          const double radial_radar = v_radar.norm();
          Eigen::Vector2d los;
          if (radial_radar > 1e-9) {
            los = v_radar / radial_radar;
          } else {
            // Zero radial speed measured: take the line of sight from the
            // radar origin to the cluster instead.
            const Eigen::Vector2d rel = p_radar - radar_origin;
            if (rel.norm() <= 1e-9) continue;
            los = rel.normalized();
          }
          const double radial_seed = v_seed->dot(los);
          if (std::fabs(radial_radar - radial_seed) > config.velocity_gate_mps) {
            continue;
          }
        }
      }
      cost(static_cast<Eigen::Index>(i), s) = d.value;
    }
  }
  const Assignment assign = solve_assignment(cost);
  for (std::size_t i = 0; i < dr.size(); ++i) {
    const int s = assign.row_to_col[i];
    if (s >= 0) {
      seeds[static_cast<std::size_t>(s)].observations.push_back(
          {AgentKind::kRadar, dr[i]});
    } else if (dr[i].confidence > config.radar_confidence_floor) {
      SeedEntity seed;
      seed.observations.push_back({AgentKind::kRadar, dr[i]});
      seeds.push_back(std::move(seed));
    }
  }
}

// Stage 3: per camera view, match 2D detections to projected seed footprints
// by image IoU; matches attach semantic evidence only.
void stage3_attach_cameras(std::vector<SeedEntity>& seeds,
                           const AgentFactSet* camera,
                           const Calibration& calibration,
                           const AssociationConfig& config) {
  if (!camera || camera->detections_2d.empty()) return;

  std::vector<std::string> camera_ids;
  for (const auto& det : camera->detections_2d) {
    if (std::find(camera_ids.begin(), camera_ids.end(), det.camera_id) ==
        camera_ids.end()) {
      camera_ids.push_back(det.camera_id);
    }
  }
  std::sort(camera_ids.begin(), camera_ids.end());

  for (const auto& camera_id : camera_ids) {
    auto cam_it = calibration.cameras.find(camera_id);
    if (cam_it == calibration.cameras.end()) {
      throw SchemaError("calibration.cameras." + camera_id,
                        "no calibration for camera named by a detection");
    }
    const CameraModel& model = cam_it->second;

    std::vector<std::size_t> det_idx;
    for (std::size_t i = 0; i < camera->detections_2d.size(); ++i) {
      if (camera->detections_2d[i].camera_id == camera_id) det_idx.push_back(i);
    }

    // Project every seed footprint into this view once. Boxes rest on the
    // ground plane, so the box center sits at half the box height; the
    // observed z is ignored (the radar reports in the z = 0 plane).
    std::vector<std::optional<std::array<double, 4>>> footprints(seeds.size());
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const Eigen::Vector3d size = seed_size(seeds[s]);
      const Eigen::Vector2d pos = seed_position(seeds[s]);
      const Eigen::Vector3d center(pos.x(), pos.y(), size.z() / 2.0);
      footprints[s] = project_box_footprint(model, center, size,
                                            seed_heading(seeds[s]), config.z_min);
    }

    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(
        static_cast<Eigen::Index>(det_idx.size()),
        static_cast<Eigen::Index>(seeds.size()), kForbiddenCost);
    for (std::size_t r = 0; r < det_idx.size(); ++r) {
      const Detection2D& det = camera->detections_2d[det_idx[r]];
      const std::string det_class = argmax_class(det.class_probs);
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        if (!footprints[s]) continue;
        if (!classes_compatible(det_class, seed_class(seeds[s]))) continue;
        const double iou = bbox_iou(det.bbox, *footprints[s]);
        if (iou < config.camera_iou_threshold) continue;
        cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) =
            1.0 - iou;
      }
    }
    const Assignment assign = solve_assignment(cost);
    for (std::size_t r = 0; r < det_idx.size(); ++r) {
      const int s = assign.row_to_col[r];
      if (s < 0) continue;
      seeds[static_cast<std::size_t>(s)].camera_evidence.push_back(
          {camera_id, camera->detections_2d[det_idx[r]]});
    }
  }
}

}  // namespace

std::vector<SeedEntity> associate_hierarchical(
    const std::vector<AgentFactSet>& agents, const Calibration& calibration,
    const AssociationConfig& config) {
  const AgentFactSet* lidar = find_agent(agents, AgentKind::kLidar);
  const AgentFactSet* bev = find_agent(agents, AgentKind::kBevFusion);
  const AgentFactSet* radar = find_agent(agents, AgentKind::kRadar);
  const AgentFactSet* camera = find_agent(agents, AgentKind::kCamera);

  std::vector<SeedEntity> seeds = stage1_seeds(lidar, bev, config);
  stage2_attach_radar(seeds, radar, calibration, config);
  stage3_attach_cameras(seeds, camera, calibration, config);

  // Canonical order decouples the output from input detection order.
  std::stable_sort(seeds.begin(), seeds.end(),
                   [](const SeedEntity& a, const SeedEntity& b) {
                     const Eigen::Vector2d pa = seed_position(a);
                     const Eigen::Vector2d pb = seed_position(b);
                     if (pa.x() != pb.x()) return pa.x() < pb.x();
                     if (pa.y() != pb.y()) return pa.y() < pb.y();
                     return seed_class(a) < seed_class(b);
                   });
  return seeds;
}

}  // namespace bevcoord
