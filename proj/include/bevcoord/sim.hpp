#pragma once
// Seeded synthetic BEV world with per-agent observation models. The simulator
// produces ground truth plus the four agent fact sets (bevfusion, camera,
// lidar, radar) so the full pipeline runs without neural detectors, and emits
// oracle-only correspondence labels for evaluation.
//
// Conventions baked in here and relied on everywhere downstream:
//   - The world is the ego BEV frame: x forward, y left, ego at the origin.
//   - All velocity_bev fields are relative to the ego frame, so radar Doppler
//     and TTC-style kinematics need no separate ego-motion compensation.
//   - Boxes rest on the ground plane; a box center sits at half its height.
//   - Every random draw flows from (rng_seed, scene index, agent kind), so
//     any single artifact can be regenerated in isolation, byte for byte.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bevcoord/types.hpp"

namespace bevcoord {

// Nominal box size and speed cap per class; sizes jitter +-10% per entity.
struct ClassSpec {
  Eigen::Vector3d nominal_size = Eigen::Vector3d::Ones();  // l, w, h meters
  double max_speed_mps = 0.0;
};

const std::map<std::string, ClassSpec>& class_catalog();

// Fixed sensor rig: radar half a meter up at the ego origin, one forward and
// one rearward camera (1600x900, fx = fy = 1000, cx = 800, cy = 450).
Calibration default_calibration();

// Noise model for one 3D-detection agent (lidar / bevfusion).
struct AgentNoise {
  double sigma_pos_m = 0.0;
  double sigma_vel_mps = 0.0;
  double sigma_size_m = 0.0;
  double sigma_heading_rad = 0.0;
  double miss_prob = 0.0;
  double fp_rate = 0.0;  // expected false detections per scene (Poisson mean)
};

struct SimConfig {
  std::uint64_t rng_seed = 42;
  int min_entities = 3;
  int max_entities = 8;
  double extent_m = 40.0;      // entity centers drawn in [-extent, extent]^2
  double min_spacing_m = 3.5;  // center spacing; keeps radar clusters apart
  double ego_clear_m = 4.0;    // keep-out radius around the ego
  int placement_retries = 200;
  std::vector<std::string> allowed_classes;  // empty means full vocabulary

  AgentNoise lidar;
  AgentNoise bevfusion;

  // Probability that one entity gets a deliberately wrong class from either
  // the camera or the lidar agent (picked 50/50), reported at 0.8 mass on the
  // wrong class and 0.2 on the truth.
  double conflict_prob = 0.0;

  double radar_scatter_m = 0.0;         // return spread around the box center
  double radar_sigma_range_m = 0.0;
  double radar_sigma_azimuth_rad = 0.0;
  double radar_sigma_doppler_mps = 0.0;
  double radar_mean_returns = 3.0;      // Poisson mean per object
  double radar_miss_prob = 0.0;
  double radar_clutter_rate = 0.0;      // expected clutter returns per scene
  double dbscan_eps_m = 1.5;
  int dbscan_min_pts = 2;

  double camera_max_range_m = 60.0;
  double camera_sigma_px = 0.0;
  double camera_miss_prob = 0.0;
  double camera_fp_rate = 0.0;

  double base_class_prob = 0.9;  // mass on the reported class
};

void validate(const SimConfig& cfg, const std::string& path);

// Deterministic scene: rejection-sampled non-overlapping footprints, class
// speed caps, per-entity semantic color tags. Throws ConfigError when the
// extent cannot host the requested entity count within the retry budget.
GroundTruthScene generate_scene(const SimConfig& cfg, int scene_index);

struct Observation {
  AgentFactSet facts;
  std::vector<CorrespondenceRecord> correspondence;
};

// One agent's view of a scene. Conflict injection is coordinated across
// agents through a plan derived only from the scene seed, so calling this
// per agent, in any order, yields mutually consistent fact sets.
Observation observe(const GroundTruthScene& scene, AgentKind kind,
                    const SimConfig& cfg, const Calibration& calib);

// All four agents bundled in canonical order (bevfusion, camera, lidar,
// radar) with their correspondence rows concatenated in the same order.
struct SceneObservation {
  SceneFactBundle bundle;
  std::vector<CorrespondenceRecord> correspondence;
};

SceneObservation observe_scene(const GroundTruthScene& scene,
                               const SimConfig& cfg, const Calibration& calib);

// DBSCAN over BEV points: label -1 marks noise, clusters are numbered from 0
// in first-touch order over the input sequence.
std::vector<int> dbscan_labels(const std::vector<Eigen::Vector2d>& points,
                               double eps, int min_pts);

// Clusters raw radar returns into Detection3D candidates: centroid position,
// mean line-of-sight velocity, confidence n / (n + 1), nominal unit box.
// Output is sorted by centroid (x, y); local_id is the sorted rank.
std::vector<Detection3D> dbscan_cluster(const std::vector<RadarReturn>& returns,
                                        const SensorPose& radar_pose, double eps,
                                        int min_pts);

}  // namespace bevcoord
