#include "bevcoord/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "bevcoord/errors.hpp"
#include "bevcoord/geometry.hpp"
#include "bevcoord/stats.hpp"

namespace bevcoord {

namespace {

// Independent child-stream salts; the conflict plan gets its own stream so
// every agent derives the identical plan without coordination.
constexpr std::uint64_t kSaltLidar = 1;
constexpr std::uint64_t kSaltBevFusion = 2;
constexpr std::uint64_t kSaltCamera = 3;
constexpr std::uint64_t kSaltRadar = 4;
constexpr std::uint64_t kSaltConflict = 101;

std::uint64_t scene_seed(std::uint64_t base, int index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL *
                               (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z ? z : 1;
}

const std::vector<std::string>& color_tags() {
  static const std::vector<std::string> kColors = {"black", "blue", "red",
                                                   "silver", "white"};
  return kColors;
}

// Deliberate-misreport target per class; stays inside the visually plausible
// neighborhood so camera evidence still associates where classes must be
// compatible.
const std::string& confusable_class(const std::string& name) {
  static const std::map<std::string, std::string> kConfusable = {
      {"car", "truck"},        {"truck", "car"},
      {"van", "bus"},          {"bus", "van"},
      {"pedestrian", "bicycle"}, {"bicycle", "motorcycle"},
      {"motorcycle", "bicycle"}, {"barrier", "car"}};
  return kConfusable.at(name);
}

std::map<std::string, double> soft_probs(const std::string& label, double base) {
  std::map<std::string, double> probs;
  const auto& vocab = class_vocabulary();
  const double rest = (1.0 - base) / static_cast<double>(vocab.size() - 1);
  for (const auto& name : vocab) probs[name] = name == label ? base : rest;
  return probs;
}

std::map<std::string, double> conflict_probs(const std::string& wrong,
                                             const std::string& truth) {
  return {{wrong, 0.8}, {truth, 0.2}};
}

std::map<std::string, double> uniform_probs() {
  std::map<std::string, double> probs;
  for (const auto& name : class_vocabulary()) {
    probs[name] = 1.0 / static_cast<double>(class_vocabulary().size());
  }
  return probs;
}

// gt_id -> (misreporting agent, wrong class). Derived from the scene seed
// alone so every observe() call reconstructs the same plan.
std::map<int, std::pair<AgentKind, std::string>> conflict_plan(
    const GroundTruthScene& scene, const SimConfig& cfg) {
  std::map<int, std::pair<AgentKind, std::string>> plan;
  Rng rng = Rng(scene.rng_seed).fork(kSaltConflict);
  for (const auto& gt : scene.entities) {
    if (rng.uniform() >= cfg.conflict_prob) continue;
    const AgentKind agent =
        rng.uniform() < 0.5 ? AgentKind::kCamera : AgentKind::kLidar;
    plan[gt.gt_id] = {agent, confusable_class(gt.type)};
  }
  return plan;
}

Eigen::Vector3d clamped_size(const Eigen::Vector3d& size) {
  return size.cwiseMax(0.2);
}

bool footprints_overlap(const GtEntity& a, const Eigen::Vector2d& pos,
                        const Eigen::Vector3d& size, double heading,
                        double margin) {
  const Eigen::Vector3d grown_a = a.size + Eigen::Vector3d(margin, margin, 0);
  const Eigen::Vector3d grown_b = size + Eigen::Vector3d(margin, margin, 0);
  const BevBox box_a = bev_box(a.position_bev, grown_a, a.heading_rad);
  const BevBox box_b = bev_box(pos, grown_b, heading);
  return bev_iou(box_a, box_b) > 0.0;
}

}  // namespace

const std::map<std::string, ClassSpec>& class_catalog() {
  static const std::map<std::string, ClassSpec> kCatalog = {
      {"car", {{4.5, 1.9, 1.6}, 15.0}},
      {"truck", {{8.0, 2.5, 3.2}, 12.0}},
      {"van", {{5.5, 2.0, 2.2}, 13.0}},
      {"bus", {{11.0, 2.9, 3.4}, 10.0}},
      {"pedestrian", {{0.6, 0.6, 1.7}, 2.0}},
      {"bicycle", {{1.8, 0.6, 1.4}, 6.0}},
      {"motorcycle", {{2.2, 0.8, 1.4}, 15.0}},
      {"barrier", {{2.0, 0.4, 1.0}, 0.0}}};
  return kCatalog;
}

Calibration default_calibration() {
  Calibration calib;

  SensorPose lidar;
  lidar.translation = {0.0, 0.0, 1.8};
  calib.sensors["lidar"] = lidar;

  SensorPose radar;
  radar.translation = {0.0, 0.0, 0.5};
  calib.sensors["radar"] = radar;

  // Optical axis +x (forward); image right is -y (ego left is +y), image
  // down is -z.
  CameraModel front;
  front.pose.rotation << 0, 0, 1,
                        -1, 0, 0,
                         0, -1, 0;
  front.pose.translation = {1.5, 0.0, 1.6};
  calib.cameras["front"] = front;

  CameraModel rear;
  rear.pose.rotation << 0, 0, -1,
                        1, 0, 0,
                        0, -1, 0;
  rear.pose.translation = {-1.5, 0.0, 1.6};
  calib.cameras["rear"] = rear;
  return calib;
}

void validate(const SimConfig& cfg, const std::string& path) {
  auto prob = [&](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw SchemaError(path + "." + name, "probability outside [0,1]");
    }
  };
  auto nonneg = [&](double v, const char* name) {
    if (!(v >= 0.0)) throw SchemaError(path + "." + name, "must be >= 0");
  };
  if (cfg.min_entities < 0 || cfg.max_entities < cfg.min_entities) {
    throw SchemaError(path + ".max_entities",
                      "need 0 <= min_entities <= max_entities");
  }
  if (!(cfg.extent_m > 0.0)) throw SchemaError(path + ".extent_m", "must be > 0");
  if (!(cfg.min_spacing_m >= 0.0)) {
    throw SchemaError(path + ".min_spacing_m", "must be >= 0");
  }
  if (cfg.placement_retries < 1) {
    throw SchemaError(path + ".placement_retries", "must be >= 1");
  }
  for (const auto& name : cfg.allowed_classes) {
    if (std::find(class_vocabulary().begin(), class_vocabulary().end(), name) ==
        class_vocabulary().end()) {
      throw SchemaError(path + ".allowed_classes",
                        "unknown class '" + name + "'");
    }
  }
  for (const auto* agent : {&cfg.lidar, &cfg.bevfusion}) {
    nonneg(agent->sigma_pos_m, "sigma_pos_m");
    nonneg(agent->sigma_vel_mps, "sigma_vel_mps");
    nonneg(agent->sigma_size_m, "sigma_size_m");
    nonneg(agent->sigma_heading_rad, "sigma_heading_rad");
    prob(agent->miss_prob, "miss_prob");
    nonneg(agent->fp_rate, "fp_rate");
  }
  prob(cfg.conflict_prob, "conflict_prob");
  nonneg(cfg.radar_scatter_m, "radar_scatter_m");
  nonneg(cfg.radar_sigma_range_m, "radar_sigma_range_m");
  nonneg(cfg.radar_sigma_azimuth_rad, "radar_sigma_azimuth_rad");
  nonneg(cfg.radar_sigma_doppler_mps, "radar_sigma_doppler_mps");
  nonneg(cfg.radar_mean_returns, "radar_mean_returns");
  prob(cfg.radar_miss_prob, "radar_miss_prob");
  nonneg(cfg.radar_clutter_rate, "radar_clutter_rate");
  if (!(cfg.dbscan_eps_m > 0.0)) {
    throw SchemaError(path + ".dbscan_eps_m", "must be > 0");
  }
  if (cfg.dbscan_min_pts < 1) {
    throw SchemaError(path + ".dbscan_min_pts", "must be >= 1");
  }
  nonneg(cfg.camera_max_range_m, "camera_max_range_m");
  nonneg(cfg.camera_sigma_px, "camera_sigma_px");
  prob(cfg.camera_miss_prob, "camera_miss_prob");
  nonneg(cfg.camera_fp_rate, "camera_fp_rate");
  if (!(cfg.base_class_prob > 0.0 && cfg.base_class_prob <= 1.0)) {
    throw SchemaError(path + ".base_class_prob", "must lie in (0,1]");
  }
}

GroundTruthScene generate_scene(const SimConfig& cfg, int scene_index) {
  validate(cfg, "sim");
  GroundTruthScene scene;
  scene.rng_seed = scene_seed(cfg.rng_seed, scene_index);
  {
    std::ostringstream id;
    id << "scene_";
    id.width(6);
    id.fill('0');
    id << scene_index;
    scene.scene_id = id.str();
  }
  scene.timestamp_us = 1'600'000'000'000'000LL +
                       static_cast<std::int64_t>(scene_index) * 100'000LL;

  Rng rng(scene.rng_seed);
  scene.ego.position_bev = Eigen::Vector2d::Zero();
  scene.ego.heading_rad = 0.0;
  scene.ego.speed_mps = rng.uniform(0.0, 15.0);

  const std::vector<std::string>& allowed =
      cfg.allowed_classes.empty() ? class_vocabulary() : cfg.allowed_classes;
  const int span = cfg.max_entities - cfg.min_entities + 1;
  const int count = cfg.min_entities +
                    static_cast<int>(rng.uniform_index(
                        static_cast<std::uint64_t>(span)));

  for (int i = 0; i < count; ++i) {
    GtEntity gt;
    gt.gt_id = i + 1;
    gt.type = allowed[rng.uniform_index(allowed.size())];
    const ClassSpec& spec = class_catalog().at(gt.type);
    Eigen::Vector3d jitter;
    for (int a = 0; a < 3; ++a) jitter[a] = rng.uniform(0.9, 1.1);
    gt.size = clamped_size(spec.nominal_size.cwiseProduct(jitter));
    gt.heading_rad = wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));

    bool placed = false;
    for (int attempt = 0; attempt < cfg.placement_retries; ++attempt) {
      const Eigen::Vector2d pos(rng.uniform(-cfg.extent_m, cfg.extent_m),
                                rng.uniform(-cfg.extent_m, cfg.extent_m));
      if (pos.norm() < cfg.ego_clear_m) continue;
      bool ok = true;
      for (const auto& other : scene.entities) {
        if ((other.position_bev - pos).norm() < cfg.min_spacing_m ||
            footprints_overlap(other, pos, gt.size, gt.heading_rad, 0.25)) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      gt.position_bev = pos;
      placed = true;
      break;
    }
    if (!placed) {
      throw ConfigError("scene extent too small to place " +
                        std::to_string(count) + " entities without overlap");
    }

    const double speed = rng.uniform(0.0, spec.max_speed_mps);
    gt.velocity_bev = speed * Eigen::Vector2d(std::cos(gt.heading_rad),
                                              std::sin(gt.heading_rad));
    gt.attributes = {color_tags()[rng.uniform_index(color_tags().size())]};
    scene.entities.push_back(std::move(gt));
  }
  return scene;
}

namespace {

Observation observe_boxes(const GroundTruthScene& scene, AgentKind kind,
                          const AgentNoise& noise, const SimConfig& cfg,
                          std::uint64_t salt) {
  Observation out;
  out.facts.agent_kind = kind;
  out.facts.timestamp_us = scene.timestamp_us;
  out.facts.source_lineage =
      kind == AgentKind::kBevFusion ? std::vector<std::string>{"camera", "lidar"}
                                    : std::vector<std::string>{"lidar"};

  const auto plan = conflict_plan(scene, cfg);
  Rng rng = Rng(scene.rng_seed).fork(salt);
  int next_id = 0;
  for (const auto& gt : scene.entities) {
    if (rng.uniform() < noise.miss_prob) continue;
    Detection3D det;
    det.local_id = next_id++;
    det.size = clamped_size(
        gt.size + Eigen::Vector3d(rng.normal(0, noise.sigma_size_m),
                                  rng.normal(0, noise.sigma_size_m),
                                  rng.normal(0, noise.sigma_size_m)));
    det.center_ego = {gt.position_bev.x() + rng.normal(0, noise.sigma_pos_m),
                      gt.position_bev.y() + rng.normal(0, noise.sigma_pos_m),
                      det.size.z() / 2.0};
    det.velocity_bev =
        Eigen::Vector2d(gt.velocity_bev.x() + rng.normal(0, noise.sigma_vel_mps),
                        gt.velocity_bev.y() + rng.normal(0, noise.sigma_vel_mps));
    det.heading_rad =
        wrap_angle(gt.heading_rad + rng.normal(0, noise.sigma_heading_rad));

    bool injected = false;
    auto flip = plan.find(gt.gt_id);
    if (kind == AgentKind::kLidar && flip != plan.end() &&
        flip->second.first == AgentKind::kLidar) {
      det.class_probs = conflict_probs(flip->second.second, gt.type);
      injected = true;
    } else {
      det.class_probs = soft_probs(gt.type, cfg.base_class_prob);
    }
    det.confidence = kind == AgentKind::kLidar ? 0.9 : 0.88;
    if (noise.sigma_pos_m > 0.0) {
      det.position_cov =
          noise.sigma_pos_m * noise.sigma_pos_m * Eigen::Matrix2d::Identity();
    }
    if (noise.sigma_vel_mps > 0.0) {
      det.velocity_cov =
          noise.sigma_vel_mps * noise.sigma_vel_mps * Eigen::Matrix2d::Identity();
    }
    out.facts.detections_3d.push_back(std::move(det));
    out.correspondence.push_back(
        {scene.scene_id, to_string(kind), out.facts.detections_3d.back().local_id,
         gt.gt_id, injected});
  }

  const int fp_count = rng.poisson(noise.fp_rate);
  for (int f = 0; f < fp_count; ++f) {
    Detection3D det;
    det.local_id = next_id++;
    const std::string cls =
        class_vocabulary()[rng.uniform_index(class_vocabulary().size())];
    det.size = class_catalog().at(cls).nominal_size;
    det.center_ego = {rng.uniform(-cfg.extent_m, cfg.extent_m),
                      rng.uniform(-cfg.extent_m, cfg.extent_m),
                      det.size.z() / 2.0};
    det.velocity_bev = Eigen::Vector2d(rng.normal(0, 1.0), rng.normal(0, 1.0));
    det.heading_rad = wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
    det.class_probs = soft_probs(cls, cfg.base_class_prob);
    det.confidence = 0.55;
    if (noise.sigma_pos_m > 0.0) {
      det.position_cov =
          noise.sigma_pos_m * noise.sigma_pos_m * Eigen::Matrix2d::Identity();
    }
    out.facts.detections_3d.push_back(std::move(det));
    out.correspondence.push_back({scene.scene_id, to_string(kind),
                                  out.facts.detections_3d.back().local_id,
                                  std::nullopt, false});
  }

  std::ostringstream synopsis;
  synopsis << (kind == AgentKind::kLidar ? "LiDAR reports "
                                         : "Camera-LiDAR fusion reports ")
           << out.facts.detections_3d.size() << " boxes.";
  out.facts.synopsis = synopsis.str();
  return out;
}

Observation observe_camera(const GroundTruthScene& scene, const SimConfig& cfg,
                           const Calibration& calib) {
  Observation out;
  out.facts.agent_kind = AgentKind::kCamera;
  out.facts.timestamp_us = scene.timestamp_us;
  out.facts.source_lineage = {"camera"};

  const auto plan = conflict_plan(scene, cfg);
  Rng rng = Rng(scene.rng_seed).fork(kSaltCamera);
  int next_id = 0;
  for (const auto& [camera_id, model] : calib.cameras) {
    for (const auto& gt : scene.entities) {
      if (rng.uniform() < cfg.camera_miss_prob) continue;
      if (gt.position_bev.norm() > cfg.camera_max_range_m) continue;
      const Eigen::Vector3d center(gt.position_bev.x(), gt.position_bev.y(),
                                   gt.size.z() / 2.0);
      auto footprint =
          project_box_footprint(model, center, gt.size, gt.heading_rad);
      if (!footprint) continue;
      std::array<double, 4> bbox = *footprint;
      if (cfg.camera_sigma_px > 0.0) {
        for (double& edge : bbox) edge += rng.normal(0, cfg.camera_sigma_px);
        bbox[0] = std::clamp(bbox[0], 0.0, static_cast<double>(model.width));
        bbox[2] = std::clamp(bbox[2], 0.0, static_cast<double>(model.width));
        bbox[1] = std::clamp(bbox[1], 0.0, static_cast<double>(model.height));
        bbox[3] = std::clamp(bbox[3], 0.0, static_cast<double>(model.height));
      }
      if (bbox[2] - bbox[0] < 1.0 || bbox[3] - bbox[1] < 1.0) continue;

      Detection2D det;
      det.local_id = next_id++;
      det.camera_id = camera_id;
      det.bbox = bbox;
      bool injected = false;
      auto flip = plan.find(gt.gt_id);
      if (flip != plan.end() && flip->second.first == AgentKind::kCamera) {
        det.class_probs = conflict_probs(flip->second.second, gt.type);
        injected = true;
      } else {
        det.class_probs = soft_probs(gt.type, cfg.base_class_prob);
      }
      det.confidence = 0.92;
      det.semantic_attributes = gt.attributes;
      out.facts.detections_2d.push_back(std::move(det));
      out.correspondence.push_back(
          {scene.scene_id, "camera", out.facts.detections_2d.back().local_id,
           gt.gt_id, injected});
    }
  }

  const int fp_count = rng.poisson(cfg.camera_fp_rate);
  std::vector<std::string> camera_ids;
  for (const auto& [camera_id, model] : calib.cameras) {
    camera_ids.push_back(camera_id);
  }
  for (int f = 0; f < fp_count && !camera_ids.empty(); ++f) {
    const std::string& camera_id =
        camera_ids[rng.uniform_index(camera_ids.size())];
    const CameraModel& model = calib.cameras.at(camera_id);
    Detection2D det;
    det.local_id = next_id++;
    det.camera_id = camera_id;
    const double u0 = rng.uniform(0.0, model.width - 40.0);
    const double v0 = rng.uniform(0.0, model.height - 40.0);
    det.bbox = {u0, v0, u0 + rng.uniform(20.0, 40.0), v0 + rng.uniform(20.0, 40.0)};
    det.class_probs = soft_probs(
        class_vocabulary()[rng.uniform_index(class_vocabulary().size())],
        cfg.base_class_prob);
    det.confidence = 0.5;
    out.facts.detections_2d.push_back(std::move(det));
    out.correspondence.push_back({scene.scene_id, "camera",
                                  out.facts.detections_2d.back().local_id,
                                  std::nullopt, false});
  }

  std::map<std::string, int> counts;
  for (const auto& det : out.facts.detections_2d) {
    counts[argmax_class(det.class_probs)] += 1;
  }
  std::ostringstream synopsis;
  synopsis << "Cameras report " << out.facts.detections_2d.size() << " objects";
  bool first = true;
  for (const auto& name : class_vocabulary()) {
    auto it = counts.find(name);
    if (it == counts.end()) continue;
    synopsis << (first ? ": " : ", ") << it->second << " " << name;
    first = false;
  }
  synopsis << ".";
  out.facts.synopsis = synopsis.str();
  return out;
}

struct TaggedReturn {
  RadarReturn ret;
  std::optional<int> gt_id;
};

// Shared clustering core so the public dbscan_cluster and the simulator's
// correspondence-tagged path cannot drift apart.
std::vector<std::pair<Detection3D, std::optional<int>>> cluster_returns(
    const std::vector<TaggedReturn>& tagged, const SensorPose& radar_pose,
    double eps, int min_pts) {
  std::vector<Eigen::Vector2d> points;
  std::vector<RadarProjection> projections;
  for (const auto& t : tagged) {
    RadarProjection proj = radar_to_ego(radar_pose, t.ret);
    points.emplace_back(proj.position_ego.x(), proj.position_ego.y());
    projections.push_back(std::move(proj));
  }
  const std::vector<int> labels = dbscan_labels(points, eps, min_pts);
  int n_clusters = 0;
  for (int label : labels) n_clusters = std::max(n_clusters, label + 1);

  std::vector<std::pair<Detection3D, std::optional<int>>> clusters;
  for (int c = 0; c < n_clusters; ++c) {
    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
    int n = 0, n_vel = 0;
    std::map<int, int> votes;
    int clutter_votes = 0;
    for (std::size_t i = 0; i < tagged.size(); ++i) {
      if (labels[i] != c) continue;
      centroid += points[i];
      n += 1;
      if (projections[i].velocity_bev) {
        velocity += *projections[i].velocity_bev;
        n_vel += 1;
      }
      if (tagged[i].gt_id) {
        votes[*tagged[i].gt_id] += 1;
      } else {
        clutter_votes += 1;
      }
    }
    centroid /= n;

    Detection3D det;
    det.center_ego = {centroid.x(), centroid.y(), 0.0};
    if (n_vel > 0) det.velocity_bev = Eigen::Vector2d(velocity / n_vel);
    det.size = Eigen::Vector3d::Ones();
    det.heading_rad = 0.0;
    det.class_probs = uniform_probs();
    det.confidence = static_cast<double>(n) / (n + 1);

    // Majority origin; ties go to the smallest gt_id, pure clutter stays
    // unlabeled.
    std::optional<int> origin;
    int best = clutter_votes;
    for (const auto& [gt_id, v] : votes) {
      if (v > best) {
        best = v;
        origin = gt_id;
      }
    }
    clusters.emplace_back(std::move(det), origin);
  }

  std::sort(clusters.begin(), clusters.end(),
            [](const auto& a, const auto& b) {
              if (a.first.center_ego.x() != b.first.center_ego.x()) {
                return a.first.center_ego.x() < b.first.center_ego.x();
              }
              return a.first.center_ego.y() < b.first.center_ego.y();
            });
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    clusters[i].first.local_id = static_cast<int>(i);
  }
  return clusters;
}

Observation observe_radar(const GroundTruthScene& scene, const SimConfig& cfg,
                          const Calibration& calib) {
  Observation out;
  out.facts.agent_kind = AgentKind::kRadar;
  out.facts.timestamp_us = scene.timestamp_us;
  out.facts.source_lineage = {"radar"};

  auto pose_it = calib.sensors.find("radar");
  if (pose_it == calib.sensors.end()) {
    throw SchemaError("calibration.sensors.radar", "radar pose missing");
  }
  const SensorPose& pose = pose_it->second;
  const Eigen::Vector2d origin = pose.translation.head<2>();

  Rng rng = Rng(scene.rng_seed).fork(kSaltRadar);
  std::vector<TaggedReturn> tagged;
  for (const auto& gt : scene.entities) {
    if (rng.uniform() < cfg.radar_miss_prob) continue;
    const int n_returns = rng.poisson(cfg.radar_mean_returns);
    for (int k = 0; k < n_returns; ++k) {
      const Eigen::Vector2d scatter(rng.normal(0, cfg.radar_scatter_m),
                                    rng.normal(0, cfg.radar_scatter_m));
      const Eigen::Vector2d point = gt.position_bev + scatter;
      const Eigen::Vector2d rel = point - origin;
      if (rel.norm() < 1e-9) continue;
      RadarReturn ret;
      ret.range_m = std::max(0.0, rel.norm() +
                                      rng.normal(0, cfg.radar_sigma_range_m));
      ret.azimuth_rad = std::atan2(rel.y(), rel.x()) +
                        rng.normal(0, cfg.radar_sigma_azimuth_rad);
      ret.radial_speed_mps = gt.velocity_bev.dot(rel.normalized()) +
                             rng.normal(0, cfg.radar_sigma_doppler_mps);
      ret.rcs = rng.uniform(5.0, 20.0);
      tagged.push_back({ret, gt.gt_id});
    }
  }
  const int clutter = rng.poisson(cfg.radar_clutter_rate);
  for (int k = 0; k < clutter; ++k) {
    const Eigen::Vector2d point(rng.uniform(-cfg.extent_m, cfg.extent_m),
                                rng.uniform(-cfg.extent_m, cfg.extent_m));
    const Eigen::Vector2d rel = point - origin;
    if (rel.norm() < 1e-9) continue;
    RadarReturn ret;
    ret.range_m = rel.norm();
    ret.azimuth_rad = std::atan2(rel.y(), rel.x());
    ret.radial_speed_mps = rng.uniform(-5.0, 5.0);
    ret.rcs = rng.uniform(-5.0, 10.0);
    tagged.push_back({ret, std::nullopt});
  }

  for (auto& [det, gt_id] :
       cluster_returns(tagged, pose, cfg.dbscan_eps_m, cfg.dbscan_min_pts)) {
    out.facts.detections_3d.push_back(det);
    out.correspondence.push_back(
        {scene.scene_id, "radar", det.local_id, gt_id, false});
  }
  std::ostringstream synopsis;
  synopsis << "Radar reports " << out.facts.detections_3d.size()
           << " clustered targets.";
  out.facts.synopsis = synopsis.str();
  return out;
}

}  // namespace

Observation observe(const GroundTruthScene& scene, AgentKind kind,
                    const SimConfig& cfg, const Calibration& calib) {
  validate(cfg, "sim");
  switch (kind) {
    case AgentKind::kLidar:
      return observe_boxes(scene, kind, cfg.lidar, cfg, kSaltLidar);
    case AgentKind::kBevFusion:
      return observe_boxes(scene, kind, cfg.bevfusion, cfg, kSaltBevFusion);
    case AgentKind::kCamera:
      return observe_camera(scene, cfg, calib);
    case AgentKind::kRadar:
      return observe_radar(scene, cfg, calib);
  }
  throw InternalError("unknown AgentKind");
}

SceneObservation observe_scene(const GroundTruthScene& scene,
                               const SimConfig& cfg, const Calibration& calib) {
  SceneObservation out;
  out.bundle.scene_id = scene.scene_id;
  out.bundle.timestamp_us = scene.timestamp_us;
  out.bundle.ego_speed_mps = scene.ego.speed_mps;
  for (AgentKind kind : {AgentKind::kBevFusion, AgentKind::kCamera,
                         AgentKind::kLidar, AgentKind::kRadar}) {
    Observation obs = observe(scene, kind, cfg, calib);
    out.bundle.agents.push_back(std::move(obs.facts));
    out.correspondence.insert(out.correspondence.end(),
                              obs.correspondence.begin(),
                              obs.correspondence.end());
  }
  return out;
}

std::vector<int> dbscan_labels(const std::vector<Eigen::Vector2d>& points,
                               double eps, int min_pts) {
  if (!(eps > 0.0) || min_pts < 1) {
    throw InternalError("dbscan_labels: eps must be > 0 and min_pts >= 1");
  }
  const std::size_t n = points.size();
  std::vector<int> labels(n, -2);  // -2 unvisited, -1 noise
  auto neighbors = [&](std::size_t i) {
    std::vector<std::size_t> near;
    for (std::size_t j = 0; j < n; ++j) {
      if ((points[i] - points[j]).norm() <= eps) near.push_back(j);
    }
    return near;
  };

  int cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != -2) continue;
    std::vector<std::size_t> seed = neighbors(i);
    if (static_cast<int>(seed.size()) < min_pts) {
      labels[i] = -1;
      continue;
    }
    labels[i] = cluster;
    // Standard expansion: border points join the cluster, only core points
    // extend the frontier.
    for (std::size_t q = 0; q < seed.size(); ++q) {
      const std::size_t j = seed[q];
      if (labels[j] == -1) labels[j] = cluster;
      if (labels[j] != -2) continue;
      labels[j] = cluster;
      std::vector<std::size_t> expansion = neighbors(j);
      if (static_cast<int>(expansion.size()) >= min_pts) {
        seed.insert(seed.end(), expansion.begin(), expansion.end());
      }
    }
    cluster += 1;
  }
  for (int& label : labels) {
    if (label == -2) label = -1;
  }
  return labels;
}

std::vector<Detection3D> dbscan_cluster(const std::vector<RadarReturn>& returns,
                                        const SensorPose& radar_pose, double eps,
                                        int min_pts) {
  std::vector<TaggedReturn> tagged;
  for (const auto& ret : returns) tagged.push_back({ret, std::nullopt});
  std::vector<Detection3D> out;
  for (auto& [det, gt_id] : cluster_returns(tagged, radar_pose, eps, min_pts)) {
    out.push_back(det);
  }
  return out;
}

}  // namespace bevcoord
