#pragma once

#include <limits>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "bevcoord/geometry.hpp"
#include "bevcoord/types.hpp"

namespace bevcoord {

// Cost value marking an inadmissible pair. Finite so the assignment solver
// needs no special casing; any total containing it loses to any total that
// avoids it, because real pair costs are bounded far below it.
inline constexpr double kForbiddenCost = 1e9;

struct AssociationConfig {
  double gate_radius_m = 3.0;          // neighborhood prefilter radius
  double gate_euclidean_m = 2.0;       // distance gate when metric is Euclidean
  double gate_mahalanobis_sq = 9.21;   // gate when metric is Mahalanobis squared
  double lambda_class = 5.0;           // class mismatch penalty
  double lambda_size = 1.0;            // size difference penalty per meter
  double camera_iou_threshold = 0.3;   // Stage 3 image-box overlap floor
  double velocity_gate_mps = 3.0;      // Stage 2 radial speed consistency gate
  double radar_confidence_floor = 0.5; // below this, lone radar clusters drop
  double z_min = 1e-3;                 // camera near-plane for projections
};

// Uniform-cell spatial hash over BEV positions for radius queries.
class BevGridIndex {
 public:
  explicit BevGridIndex(double cell_size);

  void insert(int id, const Eigen::Vector2d& position);

  // Ids with ||position - center|| <= radius, ascending. radius must not
  // exceed the cell size (the scan covers one ring of neighbor cells).
  std::vector<int> query_radius(const Eigen::Vector2d& center,
                                double radius) const;

 private:
  double cell_size_;
  std::map<std::pair<long long, long long>, std::vector<int>> cells_;
  std::vector<Eigen::Vector2d> positions_;
  std::vector<int> ids_;
};

enum class DistanceMetric { kEuclidean, kMahalanobisSq };

struct PairDistance {
  double value = 0.0;
  DistanceMetric metric = DistanceMetric::kEuclidean;
};

// Distance between two BEV position estimates. Uses the Mahalanobis-squared
// form (dp)^T (Sa + Sb)^-1 (dp) when at least one covariance is declared and
// the summed covariance is invertible; otherwise falls back to the Euclidean
// norm, which the metric field records.
PairDistance pair_distance(const Eigen::Vector2d& pa,
                           const std::optional<Eigen::Matrix2d>& cov_a,
                           const Eigen::Vector2d& pb,
                           const std::optional<Eigen::Matrix2d>& cov_b);

// Composite pair cost: distance plus class-mismatch and size-difference
// penalties. Returns kForbiddenCost when the distance exceeds the gate for
// the metric in use.
double composite_cost(const Detection3D& a, const Detection3D& b,
                      const AssociationConfig& config);

struct Assignment {
  std::vector<int> row_to_col;  // -1 when the row stays unmatched
  std::vector<int> col_to_row;  // -1 when the column stays unmatched
  double total_cost = 0.0;      // sum over matched pairs, row order
};

// Minimum-cost one-to-one assignment on a rectangular cost matrix.
// Entries >= kForbiddenCost never produce a match. Among least-cost
// solutions the solver is deterministic for fixed input.
Assignment solve_assignment(const Eigen::MatrixXd& cost);

// One physical-object hypothesis assembled by hierarchical association.
struct SourceObservation {
  AgentKind agent = AgentKind::kLidar;
  Detection3D detection;
};

struct CameraEvidence {
  std::string camera_id;
  Detection2D detection;
};

struct SeedEntity {
  std::vector<SourceObservation> observations;
  std::vector<CameraEvidence> camera_evidence;
};

// Mean BEV position over the seed's 3D observations.
Eigen::Vector2d seed_position(const SeedEntity& seed);

// Argmax class of the averaged per-source class distributions.
std::string seed_class(const SeedEntity& seed);

// Three-stage hierarchical association across one scene's fact sets:
//   Stage 1 pairs LiDAR and BEV-fusion detections into seeds,
//   Stage 2 attaches radar clusters under a distance gate plus a radial
//           velocity consistency gate; lone radar clusters become seeds only
//           above the configured confidence floor,
//   Stage 3 matches each camera's 2D detections to projected seed footprints
//           by image IoU and attaches them as semantic evidence only.
// Seeds come back in canonical order (ascending mean x, then y, then class).
std::vector<SeedEntity> associate_hierarchical(
    const std::vector<AgentFactSet>& agents, const Calibration& calibration,
    const AssociationConfig& config);

}  // namespace bevcoord
