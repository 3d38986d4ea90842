#include "bevcoord/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "bevcoord/errors.hpp"

namespace bevcoord {
namespace {

constexpr double kProbSumTol = 1e-6;
constexpr double kCovSymTol = 1e-9;

// --- low-level JSON helpers -------------------------------------------------

const Json& require_field(const Json& j, const std::string& key,
                          const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(path + "." + key, "required field missing");
  return *it;
}

void check_keys(const Json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw SchemaError(path + "." + it.key(), "unknown field");
  }
}

double as_number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw SchemaError(path, "number must be finite");
  return v;
}

std::int64_t as_int(const Json& j, const std::string& path) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) {
    throw SchemaError(path, "expected an integer");
  }
  return j.get<std::int64_t>();
}

std::string as_string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw SchemaError(path, "expected a string");
  return j.get<std::string>();
}

bool as_bool(const Json& j, const std::string& path) {
  if (!j.is_boolean()) throw SchemaError(path, "expected a boolean");
  return j.get<bool>();
}

Json vec_to_json(const Eigen::Vector2d& v) { return Json::array({v.x(), v.y()}); }
Json vec_to_json(const Eigen::Vector3d& v) {
  return Json::array({v.x(), v.y(), v.z()});
}

Eigen::Vector2d vec2_from_json(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) {
    throw SchemaError(path, "expected an array of 2 numbers");
  }
  return {as_number(j[0], path + "[0]"), as_number(j[1], path + "[1]")};
}

Eigen::Vector3d vec3_from_json(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) {
    throw SchemaError(path, "expected an array of 3 numbers");
  }
  return {as_number(j[0], path + "[0]"), as_number(j[1], path + "[1]"),
          as_number(j[2], path + "[2]")};
}

Json mat_to_json(const Eigen::Matrix2d& m) {
  return Json::array({Json::array({m(0, 0), m(0, 1)}),
                      Json::array({m(1, 0), m(1, 1)})});
}

Json mat_to_json(const Eigen::Matrix3d& m) {
  Json rows = Json::array();
  for (int r = 0; r < 3; ++r) {
    rows.push_back(Json::array({m(r, 0), m(r, 1), m(r, 2)}));
  }
  return rows;
}

Eigen::Matrix2d mat2_from_json(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) {
    throw SchemaError(path, "expected a 2x2 matrix");
  }
  Eigen::Matrix2d m;
  for (int r = 0; r < 2; ++r) {
    const Json& row = j[r];
    if (!row.is_array() || row.size() != 2) {
      throw SchemaError(path, "expected a 2x2 matrix");
    }
    for (int c = 0; c < 2; ++c) {
      m(r, c) = as_number(row[c], path);
    }
  }
  return m;
}

Eigen::Matrix3d mat3_from_json(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) {
    throw SchemaError(path, "expected a 3x3 matrix");
  }
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    const Json& row = j[r];
    if (!row.is_array() || row.size() != 3) {
      throw SchemaError(path, "expected a 3x3 matrix");
    }
    for (int c = 0; c < 3; ++c) {
      m(r, c) = as_number(row[c], path);
    }
  }
  return m;
}

std::vector<std::string> string_list_from_json(const Json& j,
                                               const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(as_string(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

void check_cov2(const Eigen::Matrix2d& m, const std::string& path) {
  if (std::fabs(m(0, 1) - m(1, 0)) > kCovSymTol) {
    throw SchemaError(path, "covariance must be symmetric");
  }
  // 2x2 PSD: non-negative diagonal and determinant.
  if (m(0, 0) < -kCovSymTol || m(1, 1) < -kCovSymTol ||
      m.determinant() < -kCovSymTol) {
    throw SchemaError(path, "covariance must be positive semidefinite");
  }
}

void check_class_probs(const std::map<std::string, double>& probs,
                       const std::string& path) {
  if (probs.empty()) throw SchemaError(path, "class_probs must be non-empty");
  double sum = 0.0;
  for (const auto& [name, p] : probs) {
    if (!is_known_class(name)) {
      throw SchemaError(path + "." + name, "class not in vocabulary");
    }
    if (p < 0.0 || p > 1.0 + kProbSumTol) {
      throw SchemaError(path + "." + name, "probability must be in [0,1]");
    }
    sum += p;
  }
  if (std::fabs(sum - 1.0) > kProbSumTol) {
    throw SchemaError(path, "class probabilities must sum to 1");
  }
}

std::map<std::string, double> class_probs_from_json(const Json& j,
                                                    const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  std::map<std::string, double> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    out[it.key()] = as_number(it.value(), path + "." + it.key());
  }
  check_class_probs(out, path);
  return out;
}

}  // namespace

// --- vocabularies -----------------------------------------------------------

const std::vector<std::string>& class_vocabulary() {
  static const std::vector<std::string> kClasses = {
      "car",        "truck",   "van",        "bus",
      "pedestrian", "bicycle", "motorcycle", "barrier"};
  return kClasses;
}

bool is_known_class(const std::string& name) {
  const auto& v = class_vocabulary();
  return std::find(v.begin(), v.end(), name) != v.end();
}

bool classes_compatible(const std::string& a, const std::string& b) {
  if (a == b) return true;
  static const std::vector<std::set<std::string>> kGroups = {
      {"car", "truck", "van", "bus"},
      {"bicycle", "motorcycle"},
  };
  for (const auto& group : kGroups) {
    if (group.count(a) && group.count(b)) return true;
  }
  return false;
}

const std::vector<std::string>& action_vocabulary() {
  static const std::vector<std::string> kActions = {
      "keep_lane",        "slow_down",         "stop",   "yield",
      "change_lane_left", "change_lane_right", "follow", "unknown"};
  return kActions;
}

const std::vector<std::string>& relation_vocabulary() {
  static const std::vector<std::string> kRelations = {
      "ahead_of", "behind_of", "left_of",     "right_of",
      "near",     "far",       "approaching", "moving_away"};
  return kRelations;
}

const std::vector<std::string>& risk_type_vocabulary() {
  static const std::vector<std::string> kRisks = {
      "collision", "cut_in",         "rear_end", "pedestrian_crossing",
      "occlusion", "rule_violation", "unknown"};
  return kRisks;
}

const std::vector<std::string>& ambiguity_flag_vocabulary() {
  static const std::vector<std::string> kFlags = {
      "class_ambiguous", "geometry_ambiguous", "single_source",
      "velocity_skipped"};
  return kFlags;
}

double wrap_angle(double radians) {
  double two_pi = 2.0 * M_PI;
  double r = std::fmod(radians + M_PI, two_pi);
  if (r < 0.0) r += two_pi;
  r -= M_PI;  // r in [-pi, pi)
  if (r == -M_PI) r = M_PI;
  return r;
}

double angle_diff(double a, double b) {
  return std::fabs(wrap_angle(a - b));
}

bool is_valid_entity_id(const std::string& id) {
  if (id.size() < 4 || id.compare(0, 3, "ID_") != 0) return false;
  if (id[3] == '0') return false;  // no leading zeros, n >= 1
  for (std::size_t i = 3; i < id.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(id[i]))) return false;
  }
  return true;
}

std::string make_entity_id(int n) {
  if (n <= 0) throw InternalError("entity ids start at 1");
  return "ID_" + std::to_string(n);
}

int entity_id_number(const std::string& id) {
  if (!is_valid_entity_id(id)) {
    throw SchemaError(id, "entity id must match ID_<positive integer>");
  }
  return std::stoi(id.substr(3));
}

std::string argmax_class(const std::map<std::string, double>& probs) {
  std::string best;
  double best_p = -1.0;
  for (const auto& name : class_vocabulary()) {
    auto it = probs.find(name);
    if (it != probs.end() && it->second > best_p) {
      best_p = it->second;
      best = name;
    }
  }
  if (best.empty()) throw InternalError("argmax_class: empty distribution");
  return best;
}

// --- agent kinds ------------------------------------------------------------

std::string to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::kLidar: return "lidar";
    case AgentKind::kBevFusion: return "bevfusion";
    case AgentKind::kCamera: return "camera";
    case AgentKind::kRadar: return "radar";
  }
  throw InternalError("unknown AgentKind");
}

AgentKind agent_kind_from_string(const std::string& name,
                                 const std::string& path) {
  if (name == "lidar") return AgentKind::kLidar;
  if (name == "bevfusion") return AgentKind::kBevFusion;
  if (name == "camera") return AgentKind::kCamera;
  if (name == "radar") return AgentKind::kRadar;
  throw SchemaError(path, "unknown agent kind '" + name + "'");
}

std::string to_string(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::kConsistent: return "Consistent";
    case VerdictKind::kMinor: return "Minor";
    case VerdictKind::kMajor: return "Major";
  }
  throw InternalError("unknown VerdictKind");
}

// --- calibration ------------------------------------------------------------

Json to_json(const SensorPose& v) {
  Json j;
  j["rotation"] = mat_to_json(v.rotation);
  j["translation"] = vec_to_json(v.translation);
  return j;
}

SensorPose sensor_pose_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"rotation", "translation"});
  SensorPose pose;
  pose.rotation = mat3_from_json(require_field(j, "rotation", path),
                                 path + ".rotation");
  pose.translation = vec3_from_json(require_field(j, "translation", path),
                                    path + ".translation");
  // Rotation must be orthonormal with determinant +1.
  if ((pose.rotation * pose.rotation.transpose() -
       Eigen::Matrix3d::Identity()).norm() > 1e-6 ||
      std::fabs(pose.rotation.determinant() - 1.0) > 1e-6) {
    throw SchemaError(path + ".rotation", "expected a proper rotation matrix");
  }
  return pose;
}

Json to_json(const CameraModel& v) {
  Json j;
  j["pose"] = to_json(v.pose);
  j["fx"] = v.fx;
  j["fy"] = v.fy;
  j["cx"] = v.cx;
  j["cy"] = v.cy;
  j["width"] = v.width;
  j["height"] = v.height;
  return j;
}

CameraModel camera_model_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"pose", "fx", "fy", "cx", "cy", "width", "height"});
  CameraModel cam;
  cam.pose = sensor_pose_from_json(require_field(j, "pose", path), path + ".pose");
  cam.fx = as_number(require_field(j, "fx", path), path + ".fx");
  cam.fy = as_number(require_field(j, "fy", path), path + ".fy");
  cam.cx = as_number(require_field(j, "cx", path), path + ".cx");
  cam.cy = as_number(require_field(j, "cy", path), path + ".cy");
  cam.width = static_cast<int>(as_int(require_field(j, "width", path), path + ".width"));
  cam.height = static_cast<int>(as_int(require_field(j, "height", path), path + ".height"));
  if (cam.fx <= 0 || cam.fy <= 0 || cam.width <= 0 || cam.height <= 0) {
    throw SchemaError(path, "focal lengths and image size must be positive");
  }
  return cam;
}

Json to_json(const Calibration& v) {
  Json sensors = Json::object();
  for (const auto& [name, pose] : v.sensors) sensors[name] = to_json(pose);
  Json cameras = Json::object();
  for (const auto& [name, cam] : v.cameras) cameras[name] = to_json(cam);
  Json j;
  j["sensors"] = sensors;
  j["cameras"] = cameras;
  return j;
}

Calibration calibration_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"sensors", "cameras"});
  Calibration calib;
  const Json& sensors = require_field(j, "sensors", path);
  if (!sensors.is_object()) throw SchemaError(path + ".sensors", "expected an object");
  for (auto it = sensors.begin(); it != sensors.end(); ++it) {
    calib.sensors[it.key()] =
        sensor_pose_from_json(it.value(), path + ".sensors." + it.key());
  }
  const Json& cameras = require_field(j, "cameras", path);
  if (!cameras.is_object()) throw SchemaError(path + ".cameras", "expected an object");
  for (auto it = cameras.begin(); it != cameras.end(); ++it) {
    calib.cameras[it.key()] =
        camera_model_from_json(it.value(), path + ".cameras." + it.key());
  }
  return calib;
}

// --- detections -------------------------------------------------------------

Json to_json(const Detection3D& v) {
  Json j;
  j["local_id"] = v.local_id;
  j["center_ego"] = vec_to_json(v.center_ego);
  if (v.velocity_bev) j["velocity_bev"] = vec_to_json(*v.velocity_bev);
  j["size"] = vec_to_json(v.size);
  j["heading_rad"] = v.heading_rad;
  j["class_probs"] = Json(v.class_probs);
  j["confidence"] = v.confidence;
  if (v.position_cov) j["position_cov"] = mat_to_json(*v.position_cov);
  if (v.velocity_cov) j["velocity_cov"] = mat_to_json(*v.velocity_cov);
  return j;
}

void validate(const Detection3D& v, const std::string& path) {
  if (v.local_id < 0) throw SchemaError(path + ".local_id", "must be >= 0");
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(v.center_ego[i])) {
      throw SchemaError(path + ".center_ego", "must be finite");
    }
    if (!(v.size[i] > 0.0)) {
      throw SchemaError(path + ".size", "box dimensions must be positive");
    }
  }
  if (v.heading_rad <= -M_PI || v.heading_rad > M_PI) {
    throw SchemaError(path + ".heading_rad", "must lie in (-pi, pi]");
  }
  check_class_probs(v.class_probs, path + ".class_probs");
  if (v.confidence < 0.0 || v.confidence > 1.0) {
    throw SchemaError(path + ".confidence", "must be in [0,1]");
  }
  if (v.position_cov) check_cov2(*v.position_cov, path + ".position_cov");
  if (v.velocity_cov) check_cov2(*v.velocity_cov, path + ".velocity_cov");
}

Detection3D detection3d_from_json(const Json& j, const std::string& path) {
  check_keys(j, path,
             {"local_id", "center_ego", "velocity_bev", "size", "heading_rad",
              "class_probs", "confidence", "position_cov", "velocity_cov"});
  Detection3D d;
  d.local_id = static_cast<int>(as_int(require_field(j, "local_id", path),
                                       path + ".local_id"));
  d.center_ego = vec3_from_json(require_field(j, "center_ego", path),
                                path + ".center_ego");
  if (j.contains("velocity_bev")) {
    d.velocity_bev = vec2_from_json(j["velocity_bev"], path + ".velocity_bev");
  }
  d.size = vec3_from_json(require_field(j, "size", path), path + ".size");
  d.heading_rad = wrap_angle(
      as_number(require_field(j, "heading_rad", path), path + ".heading_rad"));
  d.class_probs = class_probs_from_json(require_field(j, "class_probs", path),
                                        path + ".class_probs");
  d.confidence = as_number(require_field(j, "confidence", path),
                           path + ".confidence");
  if (j.contains("position_cov")) {
    d.position_cov = mat2_from_json(j["position_cov"], path + ".position_cov");
  }
  if (j.contains("velocity_cov")) {
    d.velocity_cov = mat2_from_json(j["velocity_cov"], path + ".velocity_cov");
  }
  validate(d, path);
  return d;
}

Json to_json(const Detection2D& v) {
  Json j;
  j["local_id"] = v.local_id;
  j["camera_id"] = v.camera_id;
  j["bbox"] = Json::array({v.bbox[0], v.bbox[1], v.bbox[2], v.bbox[3]});
  j["class_probs"] = Json(v.class_probs);
  j["confidence"] = v.confidence;
  j["semantic_attributes"] = Json(v.semantic_attributes);
  return j;
}

void validate(const Detection2D& v, const std::string& path) {
  if (v.local_id < 0) throw SchemaError(path + ".local_id", "must be >= 0");
  if (v.camera_id.empty()) throw SchemaError(path + ".camera_id", "must be non-empty");
  if (!(v.bbox[0] <= v.bbox[2]) || !(v.bbox[1] <= v.bbox[3])) {
    throw SchemaError(path + ".bbox", "expected [u_min, v_min, u_max, v_max]");
  }
  check_class_probs(v.class_probs, path + ".class_probs");
  if (v.confidence < 0.0 || v.confidence > 1.0) {
    throw SchemaError(path + ".confidence", "must be in [0,1]");
  }
}

Detection2D detection2d_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"local_id", "camera_id", "bbox", "class_probs",
                       "confidence", "semantic_attributes"});
  Detection2D d;
  d.local_id = static_cast<int>(as_int(require_field(j, "local_id", path),
                                       path + ".local_id"));
  d.camera_id = as_string(require_field(j, "camera_id", path), path + ".camera_id");
  const Json& bbox = require_field(j, "bbox", path);
  if (!bbox.is_array() || bbox.size() != 4) {
    throw SchemaError(path + ".bbox", "expected an array of 4 numbers");
  }
  for (int i = 0; i < 4; ++i) {
    d.bbox[i] = as_number(bbox[i], path + ".bbox");
  }
  d.class_probs = class_probs_from_json(require_field(j, "class_probs", path),
                                        path + ".class_probs");
  d.confidence = as_number(require_field(j, "confidence", path),
                           path + ".confidence");
  if (j.contains("semantic_attributes")) {
    d.semantic_attributes =
        string_list_from_json(j["semantic_attributes"], path + ".semantic_attributes");
  }
  validate(d, path);
  return d;
}

Json to_json(const RadarReturn& v) {
  Json j;
  j["range_m"] = v.range_m;
  j["azimuth_rad"] = v.azimuth_rad;
  j["radial_speed_mps"] = v.radial_speed_mps;
  j["rcs"] = v.rcs;
  return j;
}

RadarReturn radar_return_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"range_m", "azimuth_rad", "radial_speed_mps", "rcs"});
  RadarReturn r;
  r.range_m = as_number(require_field(j, "range_m", path), path + ".range_m");
  r.azimuth_rad = as_number(require_field(j, "azimuth_rad", path),
                            path + ".azimuth_rad");
  r.radial_speed_mps = as_number(require_field(j, "radial_speed_mps", path),
                                 path + ".radial_speed_mps");
  r.rcs = as_number(require_field(j, "rcs", path), path + ".rcs");
  if (r.range_m < 0.0) throw SchemaError(path + ".range_m", "must be >= 0");
  return r;
}

// --- fact sets --------------------------------------------------------------

Json to_json(const AgentFactSet& v) {
  Json j;
  j["agent_kind"] = to_string(v.agent_kind);
  j["timestamp_us"] = v.timestamp_us;
  j["source_lineage"] = Json(v.source_lineage);
  Json d3 = Json::array();
  for (const auto& d : v.detections_3d) d3.push_back(to_json(d));
  j["detections_3d"] = d3;
  Json d2 = Json::array();
  for (const auto& d : v.detections_2d) d2.push_back(to_json(d));
  j["detections_2d"] = d2;
  if (!v.synopsis.empty()) j["synopsis"] = v.synopsis;
  return j;
}

void validate(const AgentFactSet& v, const std::string& path) {
  if (v.timestamp_us < 0) throw SchemaError(path + ".timestamp_us", "must be >= 0");
  if (v.source_lineage.empty()) {
    throw SchemaError(path + ".source_lineage", "must list base modalities");
  }
  std::set<int> ids3;
  for (std::size_t i = 0; i < v.detections_3d.size(); ++i) {
    validate(v.detections_3d[i], path + ".detections_3d[" + std::to_string(i) + "]");
    if (!ids3.insert(v.detections_3d[i].local_id).second) {
      throw SchemaError(path + ".detections_3d", "duplicate local_id");
    }
  }
  std::set<int> ids2;
  for (std::size_t i = 0; i < v.detections_2d.size(); ++i) {
    validate(v.detections_2d[i], path + ".detections_2d[" + std::to_string(i) + "]");
    if (!ids2.insert(v.detections_2d[i].local_id).second) {
      throw SchemaError(path + ".detections_2d", "duplicate local_id");
    }
  }
}

AgentFactSet fact_set_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"agent_kind", "timestamp_us", "source_lineage",
                       "detections_3d", "detections_2d", "synopsis"});
  AgentFactSet f;
  f.agent_kind = agent_kind_from_string(
      as_string(require_field(j, "agent_kind", path), path + ".agent_kind"),
      path + ".agent_kind");
  f.timestamp_us = as_int(require_field(j, "timestamp_us", path),
                          path + ".timestamp_us");
  f.source_lineage = string_list_from_json(
      require_field(j, "source_lineage", path), path + ".source_lineage");
  const Json& d3 = require_field(j, "detections_3d", path);
  if (!d3.is_array()) throw SchemaError(path + ".detections_3d", "expected an array");
  for (std::size_t i = 0; i < d3.size(); ++i) {
    f.detections_3d.push_back(detection3d_from_json(
        d3[i], path + ".detections_3d[" + std::to_string(i) + "]"));
  }
  const Json& d2 = require_field(j, "detections_2d", path);
  if (!d2.is_array()) throw SchemaError(path + ".detections_2d", "expected an array");
  for (std::size_t i = 0; i < d2.size(); ++i) {
    f.detections_2d.push_back(detection2d_from_json(
        d2[i], path + ".detections_2d[" + std::to_string(i) + "]"));
  }
  if (j.contains("synopsis")) {
    f.synopsis = as_string(j["synopsis"], path + ".synopsis");
  }
  validate(f, path);
  return f;
}

Json to_json(const SceneFactBundle& v) {
  Json j;
  j["scene_id"] = v.scene_id;
  j["timestamp_us"] = v.timestamp_us;
  j["ego_speed_mps"] = v.ego_speed_mps;
  Json agents = Json::array();
  for (const auto& a : v.agents) agents.push_back(to_json(a));
  j["agents"] = agents;
  return j;
}

SceneFactBundle fact_bundle_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"scene_id", "timestamp_us", "ego_speed_mps", "agents"});
  SceneFactBundle b;
  b.scene_id = as_string(require_field(j, "scene_id", path), path + ".scene_id");
  b.timestamp_us = as_int(require_field(j, "timestamp_us", path),
                          path + ".timestamp_us");
  b.ego_speed_mps = as_number(require_field(j, "ego_speed_mps", path),
                              path + ".ego_speed_mps");
  const Json& agents = require_field(j, "agents", path);
  if (!agents.is_array()) throw SchemaError(path + ".agents", "expected an array");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    b.agents.push_back(fact_set_from_json(
        agents[i], path + ".agents[" + std::to_string(i) + "]"));
  }
  return b;
}

// --- fused entities and summaries -------------------------------------------

Json to_json(const AttributeLineage& v) {
  Json j;
  j["sources"] = Json(v.sources);
  j["rule"] = v.rule;
  j["values"] = Json(v.values);
  j["fallback"] = v.fallback;
  return j;
}

namespace {
AttributeLineage lineage_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"sources", "rule", "values", "fallback"});
  AttributeLineage l;
  l.sources = string_list_from_json(require_field(j, "sources", path),
                                    path + ".sources");
  l.rule = as_string(require_field(j, "rule", path), path + ".rule");
  const Json& values = require_field(j, "values", path);
  if (!values.is_object()) throw SchemaError(path + ".values", "expected an object");
  for (auto it = values.begin(); it != values.end(); ++it) {
    l.values[it.key()] = it.value();
  }
  l.fallback = as_bool(require_field(j, "fallback", path), path + ".fallback");
  return l;
}
}  // namespace

Json to_json(const FusedEntity& v) {
  Json j;
  j["entity_id"] = v.entity_id;
  j["class"] = v.type;
  j["class_confidence"] = v.class_confidence;
  j["position_bev"] = vec_to_json(v.position_bev);
  j["position_cov"] = mat_to_json(v.position_cov);
  if (v.velocity_bev) j["velocity_bev"] = vec_to_json(*v.velocity_bev);
  if (v.velocity_cov) j["velocity_cov"] = mat_to_json(*v.velocity_cov);
  j["size"] = vec_to_json(v.size);
  j["heading_rad"] = v.heading_rad;
  j["sources"] = Json(v.sources);
  Json lineage = Json::object();
  for (const auto& [attr, l] : v.lineage) lineage[attr] = to_json(l);
  j["lineage"] = lineage;
  j["ambiguity_flags"] = Json(std::vector<std::string>(v.ambiguity_flags.begin(),
                                                       v.ambiguity_flags.end()));
  j["semantic_attributes"] = Json(v.semantic_attributes);
  j["conflict_resolved"] = v.conflict_resolved;
  return j;
}

void validate(const FusedEntity& v, const std::string& path) {
  if (!is_valid_entity_id(v.entity_id)) {
    throw SchemaError(path + ".entity_id",
                      "entity id must match ID_<positive integer>");
  }
  if (!is_known_class(v.type)) {
    throw SchemaError(path + ".class", "class not in vocabulary");
  }
  if (v.class_confidence < 0.0 || v.class_confidence > 1.0 + kProbSumTol) {
    throw SchemaError(path + ".class_confidence", "must be in [0,1]");
  }
  check_cov2(v.position_cov, path + ".position_cov");
  if (v.velocity_cov) check_cov2(*v.velocity_cov, path + ".velocity_cov");
  for (int i = 0; i < 3; ++i) {
    if (!(v.size[i] > 0.0)) {
      throw SchemaError(path + ".size", "box dimensions must be positive");
    }
  }
  if (v.heading_rad <= -M_PI || v.heading_rad > M_PI) {
    throw SchemaError(path + ".heading_rad", "must lie in (-pi, pi]");
  }
  if (v.sources.empty()) {
    throw SchemaError(path + ".sources", "must list contributing agents");
  }
  for (const auto& flag : v.ambiguity_flags) {
    const auto& allowed = ambiguity_flag_vocabulary();
    if (std::find(allowed.begin(), allowed.end(), flag) == allowed.end()) {
      throw SchemaError(path + ".ambiguity_flags", "unknown flag '" + flag + "'");
    }
  }
}

FusedEntity fused_entity_from_json(const Json& j, const std::string& path) {
  check_keys(j, path,
             {"entity_id", "class", "class_confidence", "position_bev",
              "position_cov", "velocity_bev", "velocity_cov", "size",
              "heading_rad", "sources", "lineage", "ambiguity_flags",
              "semantic_attributes", "conflict_resolved"});
  FusedEntity e;
  e.entity_id = as_string(require_field(j, "entity_id", path), path + ".entity_id");
  e.type = as_string(require_field(j, "class", path), path + ".class");
  e.class_confidence = as_number(require_field(j, "class_confidence", path),
                                 path + ".class_confidence");
  e.position_bev = vec2_from_json(require_field(j, "position_bev", path),
                                  path + ".position_bev");
  e.position_cov = mat2_from_json(require_field(j, "position_cov", path),
                                  path + ".position_cov");
  if (j.contains("velocity_bev")) {
    e.velocity_bev = vec2_from_json(j["velocity_bev"], path + ".velocity_bev");
  }
  if (j.contains("velocity_cov")) {
    e.velocity_cov = mat2_from_json(j["velocity_cov"], path + ".velocity_cov");
  }
  e.size = vec3_from_json(require_field(j, "size", path), path + ".size");
  e.heading_rad = wrap_angle(
      as_number(require_field(j, "heading_rad", path), path + ".heading_rad"));
  e.sources = string_list_from_json(require_field(j, "sources", path),
                                    path + ".sources");
  const Json& lineage = require_field(j, "lineage", path);
  if (!lineage.is_object()) throw SchemaError(path + ".lineage", "expected an object");
  for (auto it = lineage.begin(); it != lineage.end(); ++it) {
    e.lineage[it.key()] =
        lineage_from_json(it.value(), path + ".lineage." + it.key());
  }
  auto flags = string_list_from_json(require_field(j, "ambiguity_flags", path),
                                     path + ".ambiguity_flags");
  e.ambiguity_flags.insert(flags.begin(), flags.end());
  if (j.contains("semantic_attributes")) {
    e.semantic_attributes = string_list_from_json(
        j["semantic_attributes"], path + ".semantic_attributes");
  }
  e.conflict_resolved = as_bool(require_field(j, "conflict_resolved", path),
                                path + ".conflict_resolved");
  validate(e, path);
  return e;
}

void refresh_entity_types(SceneSummary& summary) {
  std::set<std::string> present;
  for (const auto& e : summary.entities) present.insert(e.type);
  summary.entity_types_present.assign(present.begin(), present.end());
  summary.entity_types_absent.clear();
  for (const auto& name : class_vocabulary()) {
    if (!present.count(name)) summary.entity_types_absent.push_back(name);
  }
}

Json to_json(const SceneSummary& v) {
  Json ego;
  ego["position_bev"] = vec_to_json(v.ego_state.position_bev);
  ego["speed_mps"] = v.ego_state.speed_mps;
  Json entities = Json::array();
  for (const auto& e : v.entities) entities.push_back(to_json(e));
  Json j;
  j["scene_id"] = v.scene_id;
  j["timestamp_us"] = v.timestamp_us;
  j["ego_state"] = ego;
  j["entities"] = entities;
  j["entity_types_present"] = Json(v.entity_types_present);
  j["entity_types_absent"] = Json(v.entity_types_absent);
  return j;
}

void validate(const SceneSummary& v, const std::string& path) {
  if (v.scene_id.empty()) throw SchemaError(path + ".scene_id", "must be non-empty");
  if (v.timestamp_us < 0) throw SchemaError(path + ".timestamp_us", "must be >= 0");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < v.entities.size(); ++i) {
    const std::string epath = path + ".entities[" + std::to_string(i) + "]";
    validate(v.entities[i], epath);
    if (!ids.insert(v.entities[i].entity_id).second) {
      throw SchemaError(epath + ".entity_id", "duplicate entity id");
    }
  }
  // Canonical numbering: ID_1..ID_n in listed order.
  for (std::size_t i = 0; i < v.entities.size(); ++i) {
    if (entity_id_number(v.entities[i].entity_id) != static_cast<int>(i) + 1) {
      throw SchemaError(path + ".entities", "entity ids must be ID_1..ID_n in order");
    }
  }
  // entity_types_present/absent must partition the vocabulary consistently.
  std::set<std::string> present(v.entity_types_present.begin(),
                                v.entity_types_present.end());
  std::set<std::string> expect;
  for (const auto& e : v.entities) expect.insert(e.type);
  if (present != expect) {
    throw SchemaError(path + ".entity_types_present",
                      "must equal the set of entity classes");
  }
  for (const auto& name : v.entity_types_absent) {
    if (present.count(name)) {
      throw SchemaError(path + ".entity_types_absent",
                        "must not overlap entity_types_present");
    }
    if (!is_known_class(name)) {
      throw SchemaError(path + ".entity_types_absent", "class not in vocabulary");
    }
  }
  if (v.entity_types_absent.size() + present.size() != class_vocabulary().size()) {
    throw SchemaError(path + ".entity_types_absent",
                      "present and absent must cover the vocabulary");
  }
}

SceneSummary scene_summary_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"scene_id", "timestamp_us", "ego_state", "entities",
                       "entity_types_present", "entity_types_absent"});
  SceneSummary s;
  s.scene_id = as_string(require_field(j, "scene_id", path), path + ".scene_id");
  s.timestamp_us = as_int(require_field(j, "timestamp_us", path),
                          path + ".timestamp_us");
  const Json& ego = require_field(j, "ego_state", path);
  check_keys(ego, path + ".ego_state", {"position_bev", "speed_mps"});
  s.ego_state.position_bev = vec2_from_json(
      require_field(ego, "position_bev", path + ".ego_state"),
      path + ".ego_state.position_bev");
  s.ego_state.speed_mps = as_number(
      require_field(ego, "speed_mps", path + ".ego_state"),
      path + ".ego_state.speed_mps");
  const Json& entities = require_field(j, "entities", path);
  if (!entities.is_array()) throw SchemaError(path + ".entities", "expected an array");
  for (std::size_t i = 0; i < entities.size(); ++i) {
    s.entities.push_back(fused_entity_from_json(
        entities[i], path + ".entities[" + std::to_string(i) + "]"));
  }
  s.entity_types_present = string_list_from_json(
      require_field(j, "entity_types_present", path), path + ".entity_types_present");
  s.entity_types_absent = string_list_from_json(
      require_field(j, "entity_types_absent", path), path + ".entity_types_absent");
  validate(s, path);
  return s;
}

// --- ground truth -----------------------------------------------------------

Json to_json(const GtEntity& v) {
  Json j;
  j["gt_id"] = v.gt_id;
  j["class"] = v.type;
  j["position_bev"] = vec_to_json(v.position_bev);
  j["velocity_bev"] = vec_to_json(v.velocity_bev);
  j["size"] = vec_to_json(v.size);
  j["heading_rad"] = v.heading_rad;
  j["attributes"] = Json(v.attributes);
  return j;
}

GtEntity gt_entity_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"gt_id", "class", "position_bev", "velocity_bev", "size",
                       "heading_rad", "attributes"});
  GtEntity e;
  e.gt_id = static_cast<int>(as_int(require_field(j, "gt_id", path), path + ".gt_id"));
  e.type = as_string(require_field(j, "class", path), path + ".class");
  if (!is_known_class(e.type)) {
    throw SchemaError(path + ".class", "class not in vocabulary");
  }
  e.position_bev = vec2_from_json(require_field(j, "position_bev", path),
                                  path + ".position_bev");
  e.velocity_bev = vec2_from_json(require_field(j, "velocity_bev", path),
                                  path + ".velocity_bev");
  e.size = vec3_from_json(require_field(j, "size", path), path + ".size");
  e.heading_rad = wrap_angle(
      as_number(require_field(j, "heading_rad", path), path + ".heading_rad"));
  if (j.contains("attributes")) {
    e.attributes = string_list_from_json(j["attributes"], path + ".attributes");
  }
  return e;
}

Json to_json(const GroundTruthScene& v) {
  Json ego;
  ego["position_bev"] = vec_to_json(v.ego.position_bev);
  ego["speed_mps"] = v.ego.speed_mps;
  ego["heading_rad"] = v.ego.heading_rad;
  Json entities = Json::array();
  for (const auto& e : v.entities) entities.push_back(to_json(e));
  Json j;
  j["scene_id"] = v.scene_id;
  j["timestamp_us"] = v.timestamp_us;
  j["rng_seed"] = v.rng_seed;
  j["ego"] = ego;
  j["entities"] = entities;
  return j;
}

void validate(const GroundTruthScene& v, const std::string& path) {
  if (v.scene_id.empty()) throw SchemaError(path + ".scene_id", "must be non-empty");
  std::set<int> ids;
  for (std::size_t i = 0; i < v.entities.size(); ++i) {
    const auto& e = v.entities[i];
    const std::string epath = path + ".entities[" + std::to_string(i) + "]";
    if (!ids.insert(e.gt_id).second) {
      throw SchemaError(epath + ".gt_id", "duplicate gt id");
    }
    for (int k = 0; k < 3; ++k) {
      if (!(e.size[k] > 0.0)) {
        throw SchemaError(epath + ".size", "box dimensions must be positive");
      }
    }
  }
}

GroundTruthScene gt_scene_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"scene_id", "timestamp_us", "rng_seed", "ego", "entities"});
  GroundTruthScene s;
  s.scene_id = as_string(require_field(j, "scene_id", path), path + ".scene_id");
  s.timestamp_us = as_int(require_field(j, "timestamp_us", path),
                          path + ".timestamp_us");
  const Json& seed = require_field(j, "rng_seed", path);
  if (!seed.is_number_unsigned() && !seed.is_number_integer()) {
    throw SchemaError(path + ".rng_seed", "expected an integer");
  }
  s.rng_seed = seed.get<std::uint64_t>();
  const Json& ego = require_field(j, "ego", path);
  check_keys(ego, path + ".ego", {"position_bev", "speed_mps", "heading_rad"});
  s.ego.position_bev = vec2_from_json(require_field(ego, "position_bev", path + ".ego"),
                                      path + ".ego.position_bev");
  s.ego.speed_mps = as_number(require_field(ego, "speed_mps", path + ".ego"),
                              path + ".ego.speed_mps");
  s.ego.heading_rad = as_number(require_field(ego, "heading_rad", path + ".ego"),
                                path + ".ego.heading_rad");
  const Json& entities = require_field(j, "entities", path);
  if (!entities.is_array()) throw SchemaError(path + ".entities", "expected an array");
  for (std::size_t i = 0; i < entities.size(); ++i) {
    s.entities.push_back(gt_entity_from_json(
        entities[i], path + ".entities[" + std::to_string(i) + "]"));
  }
  validate(s, path);
  return s;
}

Json to_json(const CorrespondenceRecord& v) {
  Json j;
  j["scene_id"] = v.scene_id;
  j["agent"] = v.agent;
  j["local_id"] = v.local_id;
  if (v.gt_id) j["gt_id"] = *v.gt_id;
  j["injected_conflict"] = v.injected_conflict;
  return j;
}

CorrespondenceRecord correspondence_from_json(const Json& j,
                                              const std::string& path) {
  check_keys(j, path, {"scene_id", "agent", "local_id", "gt_id", "injected_conflict"});
  CorrespondenceRecord r;
  r.scene_id = as_string(require_field(j, "scene_id", path), path + ".scene_id");
  r.agent = as_string(require_field(j, "agent", path), path + ".agent");
  r.local_id = static_cast<int>(as_int(require_field(j, "local_id", path),
                                       path + ".local_id"));
  if (j.contains("gt_id")) {
    r.gt_id = static_cast<int>(as_int(j["gt_id"], path + ".gt_id"));
  }
  r.injected_conflict = as_bool(require_field(j, "injected_conflict", path),
                                path + ".injected_conflict");
  return r;
}

// --- reasoning types --------------------------------------------------------

Json to_json(const Decision& v) {
  Json j;
  j["recommended_action"] = v.recommended_action;
  j["confidence"] = v.confidence;
  j["supporting_entity_ids"] = Json(v.supporting_entity_ids);
  j["risk_summary"] = v.risk_summary;
  j["constraints"] = Json(v.constraints);
  j["flags"] = Json(v.flags);
  return j;
}

void validate(const Decision& v, const std::string& path) {
  const auto& actions = action_vocabulary();
  if (std::find(actions.begin(), actions.end(), v.recommended_action) ==
      actions.end()) {
    throw SchemaError(path + ".recommended_action", "unknown action");
  }
  if (v.confidence < 0.0 || v.confidence > 1.0) {
    throw SchemaError(path + ".confidence", "must be in [0,1]");
  }
  for (const auto& id : v.supporting_entity_ids) {
    if (!is_valid_entity_id(id)) {
      throw SchemaError(path + ".supporting_entity_ids",
                        "entity id must match ID_<positive integer>");
    }
  }
}

Decision decision_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"recommended_action", "confidence", "supporting_entity_ids",
                       "target_entity_ids", "risk_summary", "constraints", "flags"});
  Decision d;
  d.recommended_action = as_string(require_field(j, "recommended_action", path),
                                   path + ".recommended_action");
  d.confidence = as_number(require_field(j, "confidence", path),
                           path + ".confidence");
  // Draft decisions name the id list target_entity_ids (reasoning prompt
  // schema); finalized decisions use supporting_entity_ids. Accept either.
  if (j.contains("supporting_entity_ids") && j.contains("target_entity_ids")) {
    throw SchemaError(path, "give supporting_entity_ids or target_entity_ids, not both");
  }
  if (j.contains("supporting_entity_ids")) {
    d.supporting_entity_ids = string_list_from_json(
        j["supporting_entity_ids"], path + ".supporting_entity_ids");
  } else if (j.contains("target_entity_ids")) {
    d.supporting_entity_ids = string_list_from_json(
        j["target_entity_ids"], path + ".target_entity_ids");
  } else {
    throw SchemaError(path + ".supporting_entity_ids", "required field missing");
  }
  if (j.contains("risk_summary")) {
    d.risk_summary = as_string(j["risk_summary"], path + ".risk_summary");
  }
  if (j.contains("constraints")) {
    d.constraints = string_list_from_json(j["constraints"], path + ".constraints");
  }
  if (j.contains("flags")) {
    d.flags = string_list_from_json(j["flags"], path + ".flags");
  }
  validate(d, path);
  return d;
}

Json to_json(const Verdict& v) {
  Json claims = Json::array();
  for (const auto& c : v.unsupported_or_conflicting_claims) {
    Json jc;
    jc["claim"] = c.claim;
    jc["reason"] = c.reason;
    jc["entity_ids"] = Json(c.entity_ids);
    claims.push_back(jc);
  }
  Json j;
  j["verdict"] = to_string(v.kind);
  j["unsupported_or_conflicting_claims"] = claims;
  j["comment"] = v.comment;
  return j;
}

Verdict verdict_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"verdict", "unsupported_or_conflicting_claims", "comment"});
  Verdict v;
  std::string kind = as_string(require_field(j, "verdict", path), path + ".verdict");
  // Verifier prompts answer PASS/FAIL; PASS reconciles to Consistent and FAIL
  // to Major. The three-level form is accepted as-is.
  if (kind == "PASS" || kind == "Consistent") {
    v.kind = VerdictKind::kConsistent;
  } else if (kind == "Minor") {
    v.kind = VerdictKind::kMinor;
  } else if (kind == "FAIL" || kind == "Major") {
    v.kind = VerdictKind::kMajor;
  } else {
    throw SchemaError(path + ".verdict", "unknown verdict '" + kind + "'");
  }
  if (j.contains("unsupported_or_conflicting_claims")) {
    const Json& claims = j["unsupported_or_conflicting_claims"];
    if (!claims.is_array()) {
      throw SchemaError(path + ".unsupported_or_conflicting_claims",
                        "expected an array");
    }
    for (std::size_t i = 0; i < claims.size(); ++i) {
      const std::string cpath =
          path + ".unsupported_or_conflicting_claims[" + std::to_string(i) + "]";
      check_keys(claims[i], cpath, {"claim", "reason", "entity_ids"});
      VerdictClaim c;
      c.claim = as_string(require_field(claims[i], "claim", cpath), cpath + ".claim");
      if (claims[i].contains("reason")) {
        c.reason = as_string(claims[i]["reason"], cpath + ".reason");
      }
      if (claims[i].contains("entity_ids")) {
        c.entity_ids = string_list_from_json(claims[i]["entity_ids"],
                                             cpath + ".entity_ids");
      }
      v.unsupported_or_conflicting_claims.push_back(std::move(c));
    }
  }
  if (j.contains("comment")) {
    v.comment = as_string(j["comment"], path + ".comment");
  }
  return v;
}

Json to_json(const RiskItem& v) {
  Json j;
  j["risk_type"] = v.risk_type;
  j["involved_entity_ids"] = Json(v.involved_entity_ids);
  j["severity"] = v.severity;
  j["urgency"] = v.urgency;
  j["confidence"] = v.confidence;
  j["evidence"] = v.evidence;
  return j;
}

RiskItem risk_item_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"risk_type", "involved_entity_ids", "severity", "urgency",
                       "confidence", "evidence"});
  RiskItem r;
  r.risk_type = as_string(require_field(j, "risk_type", path), path + ".risk_type");
  const auto& kinds = risk_type_vocabulary();
  if (std::find(kinds.begin(), kinds.end(), r.risk_type) == kinds.end()) {
    throw SchemaError(path + ".risk_type", "unknown risk type");
  }
  r.involved_entity_ids = string_list_from_json(
      require_field(j, "involved_entity_ids", path), path + ".involved_entity_ids");
  r.severity = static_cast<int>(as_int(require_field(j, "severity", path),
                                       path + ".severity"));
  r.urgency = static_cast<int>(as_int(require_field(j, "urgency", path),
                                      path + ".urgency"));
  if (r.severity < 1 || r.severity > 5 || r.urgency < 1 || r.urgency > 5) {
    throw SchemaError(path, "severity and urgency must be in 1..5");
  }
  r.confidence = as_number(require_field(j, "confidence", path),
                           path + ".confidence");
  if (r.confidence < 0.0 || r.confidence > 1.0) {
    throw SchemaError(path + ".confidence", "must be in [0,1]");
  }
  if (j.contains("evidence")) {
    r.evidence = as_string(j["evidence"], path + ".evidence");
  }
  return r;
}

}  // namespace bevcoord
