#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bevcoord/json_io.hpp"

namespace bevcoord {

// ---------------------------------------------------------------------------
// Vocabularies and small shared helpers
// ---------------------------------------------------------------------------

// Fixed object-class vocabulary. Order matters: categorical ties are broken
// by the first class in this order, and `entity_types_absent` is reported in
// this order.
const std::vector<std::string>& class_vocabulary();
bool is_known_class(const std::string& name);

// Classes that a matcher may treat as the same physical object category even
// when detectors disagree on the exact label (van vs car vs truck). Symmetric
// and reflexive.
bool classes_compatible(const std::string& a, const std::string& b);

// Driving actions a decision may recommend.
const std::vector<std::string>& action_vocabulary();

// Relations allowed in the structured intermediate representation.
const std::vector<std::string>& relation_vocabulary();

// Risk types allowed in a risk assessment.
const std::vector<std::string>& risk_type_vocabulary();

// Ambiguity flags a fused entity may carry.
const std::vector<std::string>& ambiguity_flag_vocabulary();

// Normalizes an angle to (-pi, pi].
double wrap_angle(double radians);

// Absolute angular difference after wrapping, in [0, pi].
double angle_diff(double a, double b);

// Entity ids follow the pattern ID_<n> with n a positive decimal integer.
bool is_valid_entity_id(const std::string& id);
std::string make_entity_id(int n);
int entity_id_number(const std::string& id);

// Argmax over a class-probability map; ties go to the class that appears
// first in class_vocabulary().
std::string argmax_class(const std::map<std::string, double>& probs);

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

// Rigid transform taking sensor-frame points into the ego frame.
struct SensorPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

// Pinhole camera: pose maps camera-frame points to ego; intrinsics follow the
// usual fx/fy/cx/cy convention with the optical axis along camera +z.
struct CameraModel {
  SensorPose pose;
  double fx = 1000.0;
  double fy = 1000.0;
  double cx = 800.0;
  double cy = 450.0;
  int width = 1600;
  int height = 900;
};

struct Calibration {
  std::map<std::string, SensorPose> sensors;
  std::map<std::string, CameraModel> cameras;
};

// ---------------------------------------------------------------------------
// Per-agent observations
// ---------------------------------------------------------------------------

enum class AgentKind { kLidar, kBevFusion, kCamera, kRadar };

std::string to_string(AgentKind kind);
AgentKind agent_kind_from_string(const std::string& name,
                                 const std::string& path);

// 3D box detection in the ego frame. Covariances are per-attribute blocks and
// optional; absent blocks fall back to configured defaults at fusion time.
struct Detection3D {
  int local_id = 0;
  Eigen::Vector3d center_ego = Eigen::Vector3d::Zero();
  std::optional<Eigen::Vector2d> velocity_bev;
  Eigen::Vector3d size = Eigen::Vector3d::Ones();  // length, width, height
  double heading_rad = 0.0;
  std::map<std::string, double> class_probs;
  double confidence = 0.0;
  std::optional<Eigen::Matrix2d> position_cov;
  std::optional<Eigen::Matrix2d> velocity_cov;
};

// 2D image-plane detection from one camera.
struct Detection2D {
  int local_id = 0;
  std::string camera_id;
  std::array<double, 4> bbox = {0, 0, 0, 0};  // u_min, v_min, u_max, v_max
  std::map<std::string, double> class_probs;
  double confidence = 0.0;
  std::vector<std::string> semantic_attributes;
};

// Raw radar return in the radar frame, before clustering.
struct RadarReturn {
  double range_m = 0.0;
  double azimuth_rad = 0.0;
  double radial_speed_mps = 0.0;
  double rcs = 0.0;
};

// Everything one perception agent reports for one scene.
struct AgentFactSet {
  AgentKind agent_kind = AgentKind::kLidar;
  std::int64_t timestamp_us = 0;
  std::vector<std::string> source_lineage;  // base modalities feeding the agent
  std::vector<Detection3D> detections_3d;
  std::vector<Detection2D> detections_2d;
  std::string synopsis;
};

// One scene's worth of agent fact sets plus the minimal scene context needed
// downstream (stream framing; see docs/schemas/scene_fact_bundle.json).
struct SceneFactBundle {
  std::string scene_id;
  std::int64_t timestamp_us = 0;
  double ego_speed_mps = 0.0;
  std::vector<AgentFactSet> agents;
};

// ---------------------------------------------------------------------------
// Fused output
// ---------------------------------------------------------------------------

// Records how one attribute of a fused entity was produced: which sources
// contributed, the rule applied, the raw per-source values, and whether a
// fallback path fired.
struct AttributeLineage {
  std::vector<std::string> sources;
  std::string rule;
  std::map<std::string, Json> values;
  bool fallback = false;
};

struct FusedEntity {
  std::string entity_id;  // ID_<n>
  std::string type;       // serialized as "class"
  double class_confidence = 0.0;
  Eigen::Vector2d position_bev = Eigen::Vector2d::Zero();
  Eigen::Matrix2d position_cov = Eigen::Matrix2d::Identity();
  std::optional<Eigen::Vector2d> velocity_bev;
  std::optional<Eigen::Matrix2d> velocity_cov;
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double heading_rad = 0.0;
  std::vector<std::string> sources;  // contributing agent kinds, sorted
  std::map<std::string, AttributeLineage> lineage;  // keyed by attribute
  std::set<std::string> ambiguity_flags;
  std::vector<std::string> semantic_attributes;
  bool conflict_resolved = false;
};

struct EgoState {
  Eigen::Vector2d position_bev = Eigen::Vector2d::Zero();  // (0,0) by convention
  double speed_mps = 0.0;
};

struct SceneSummary {
  std::string scene_id;
  std::int64_t timestamp_us = 0;
  EgoState ego_state;
  std::vector<FusedEntity> entities;
  std::vector<std::string> entity_types_present;
  std::vector<std::string> entity_types_absent;
};

// Recomputes entity_types_present/absent from the entity list.
void refresh_entity_types(SceneSummary& summary);

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

struct GtEntity {
  int gt_id = 0;
  std::string type;  // serialized as "class"
  Eigen::Vector2d position_bev = Eigen::Vector2d::Zero();
  Eigen::Vector2d velocity_bev = Eigen::Vector2d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double heading_rad = 0.0;
  std::vector<std::string> attributes;  // semantic tags visible to cameras
};

struct EgoTruth {
  Eigen::Vector2d position_bev = Eigen::Vector2d::Zero();
  double speed_mps = 0.0;
  double heading_rad = 0.0;
};

struct GroundTruthScene {
  std::string scene_id;
  std::int64_t timestamp_us = 0;
  std::uint64_t rng_seed = 0;
  EgoTruth ego;
  std::vector<GtEntity> entities;
};

// Oracle-only sidecar row: which ground-truth object produced one detection.
struct CorrespondenceRecord {
  std::string scene_id;
  std::string agent;      // agent kind string
  int local_id = 0;
  std::optional<int> gt_id;  // absent for injected false positives / clutter
  bool injected_conflict = false;
};

// ---------------------------------------------------------------------------
// Reasoning-side value types
// ---------------------------------------------------------------------------

struct Decision {
  std::string recommended_action = "unknown";
  double confidence = 0.0;
  std::vector<std::string> supporting_entity_ids;
  std::string risk_summary;
  std::vector<std::string> constraints;
  std::vector<std::string> flags;
};

enum class VerdictKind { kConsistent, kMinor, kMajor };

std::string to_string(VerdictKind kind);

struct VerdictClaim {
  std::string claim;
  std::string reason;
  std::vector<std::string> entity_ids;
};

struct Verdict {
  VerdictKind kind = VerdictKind::kConsistent;
  std::vector<VerdictClaim> unsupported_or_conflicting_claims;
  std::string comment;
};

// Structured intermediate representation parsed from a scene summary.
struct MEntity {
  std::string id;
  std::string type;
  std::optional<Eigen::Vector2d> position_bev;
  std::optional<Eigen::Vector2d> velocity_bev;
  std::optional<Eigen::Vector3d> size;
  std::optional<double> heading_rad;
  std::optional<double> confidence;
  std::vector<std::string> sources;
  std::vector<std::string> semantic_attributes;
  std::vector<std::string> flags;
};

struct MRelation {
  std::string subject;
  std::string relation;
  std::string object;
  std::string evidence;
};

struct IntermediateRep {
  std::vector<MEntity> entities;
  std::vector<MRelation> relations;
};

struct RiskItem {
  std::string risk_type = "unknown";
  int severity = 1;  // 1..5
  int urgency = 1;   // 1..5
  double confidence = 1.0;
  std::vector<std::string> involved_entity_ids;
  std::string evidence;
};

// ---------------------------------------------------------------------------
// Serialization (canonical JSON trees; see json_io.hpp for the text form)
// ---------------------------------------------------------------------------

Json to_json(const SensorPose& v);
Json to_json(const CameraModel& v);
Json to_json(const Calibration& v);
Json to_json(const Detection3D& v);
Json to_json(const Detection2D& v);
Json to_json(const RadarReturn& v);
Json to_json(const AgentFactSet& v);
Json to_json(const SceneFactBundle& v);
Json to_json(const AttributeLineage& v);
Json to_json(const FusedEntity& v);
Json to_json(const SceneSummary& v);
Json to_json(const GtEntity& v);
Json to_json(const GroundTruthScene& v);
Json to_json(const CorrespondenceRecord& v);
Json to_json(const Decision& v);
Json to_json(const Verdict& v);
Json to_json(const RiskItem& v);

// Each parser validates the documented schema rules and throws SchemaError
// naming the JSON path and the violated rule. Headings are normalized to
// (-pi, pi] on ingest.
SensorPose sensor_pose_from_json(const Json& j, const std::string& path);
CameraModel camera_model_from_json(const Json& j, const std::string& path);
Calibration calibration_from_json(const Json& j, const std::string& path);
Detection3D detection3d_from_json(const Json& j, const std::string& path);
Detection2D detection2d_from_json(const Json& j, const std::string& path);
RadarReturn radar_return_from_json(const Json& j, const std::string& path);
AgentFactSet fact_set_from_json(const Json& j, const std::string& path);
SceneFactBundle fact_bundle_from_json(const Json& j, const std::string& path);
FusedEntity fused_entity_from_json(const Json& j, const std::string& path);
SceneSummary scene_summary_from_json(const Json& j, const std::string& path);
GtEntity gt_entity_from_json(const Json& j, const std::string& path);
GroundTruthScene gt_scene_from_json(const Json& j, const std::string& path);
CorrespondenceRecord correspondence_from_json(const Json& j,
                                              const std::string& path);
Decision decision_from_json(const Json& j, const std::string& path);
Verdict verdict_from_json(const Json& j, const std::string& path);
RiskItem risk_item_from_json(const Json& j, const std::string& path);

// Validation entry points used by the parsers; callable directly on
// programmatically built values.
void validate(const Detection3D& v, const std::string& path);
void validate(const Detection2D& v, const std::string& path);
void validate(const AgentFactSet& v, const std::string& path);
void validate(const FusedEntity& v, const std::string& path);
void validate(const SceneSummary& v, const std::string& path);
void validate(const GroundTruthScene& v, const std::string& path);
void validate(const Decision& v, const std::string& path);

}  // namespace bevcoord
