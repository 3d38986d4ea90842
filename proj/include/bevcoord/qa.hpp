#pragma once
// Rule-based driving QA generation over a scene: four template families
// (relation, counting, risk, decision) with deterministic thresholds in the
// ego-centric BEV frame (x forward, y left).
//
// Every generated answer is recomputed by an independently written
// re-evaluation pass before emission (different arithmetic route, e.g.
// finite-difference closing speed instead of the analytic derivative); a
// mismatch aborts generation rather than emitting a doubtful label.
//
// All velocities are ego-relative (see sim.hpp), so closing speeds and TTC
// need no ego-motion compensation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bevcoord/json_io.hpp"
#include "bevcoord/types.hpp"

namespace bevcoord {

enum class QaFamily { kRelation, kCounting, kRisk, kDecision };

std::string to_string(QaFamily family);
QaFamily qa_family_from_string(const std::string& name, const std::string& path);

struct QaConfig {
  double lane_halfwidth_m = 2.0;   // |dy| band for front / behind / lane tests
  double side_min_m = 2.0;         // |dy| beyond which left / right fire
  double near_max_m = 10.0;
  double ttc_threshold_s = 3.0;    // tau: risk trigger
  double horizon_s = 5.0;          // T: question horizon
  double stop_ttc_s = 1.5;         // below this the ladder answers stop/yield
  double lead_range_m = 8.0;       // slow-lead lookahead
  double blocked_range_m = 15.0;   // static blockage lookahead
  double static_speed_mps = 0.5;   // at most this relative speed = static
  double side_clear_min_m = 2.0;   // adjacent-lane band (min, max]
  double side_clear_max_m = 6.0;
  double side_clear_behind_m = 5.0;
};

// Normalized view of one object for QA purposes.
struct KinematicState {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // ego-relative
  double heading_rad = 0.0;
  std::string type;
};

struct QaScene {
  std::string scene_id;
  std::vector<KinematicState> entities;
  std::vector<std::string> entity_refs;  // parallel to entities
  std::string mode;                      // "ground_truth" | "summary"
};

QaScene qa_scene(const GroundTruthScene& scene);
QaScene qa_scene(const SceneSummary& summary);

struct QaPair {
  QaFamily family = QaFamily::kRelation;
  std::string question;
  std::string answer;  // "Yes"/"No", integer string, or option letter
  std::string scene_id;
  std::string mode;
  std::vector<std::string> entity_refs;
  std::optional<double> distance_m;
  std::optional<double> closing_speed_mps;
  std::optional<double> ttc_s;
};

Json to_json(const QaPair& pair);

// Relation predicate in the subject-aligned frame: the offset to the object
// is rotated by the subject's heading before thresholding. rel is one of
// {front, behind, left, right, near}.
bool relation_holds(const KinematicState& subject, const KinematicState& object,
                    const std::string& rel, const QaConfig& cfg);

// Number of obj2_class entities satisfying rel with respect to the subject;
// the subject itself never counts.
int count_matching(const std::vector<KinematicState>& entities,
                   const KinematicState& subject, const std::string& rel,
                   const std::string& obj2_class, const QaConfig& cfg);

struct RiskAnswer {
  bool risky = false;
  double distance_m = 0.0;
  double closing_speed_mps = 0.0;
  double ttc_s = 0.0;  // +infinity when not closing
};

// TTC criterion against the ego at the origin: closing speed is the decay
// rate of the range; risky iff TTC < tau and TTC <= horizon.
RiskAnswer collision_risk(const KinematicState& target, double horizon_s,
                          double tau_s);

// Decision ladder over the whole scene; returns an option letter A..E.
//   C: any TTC below stop_ttc; B: any TTC below tau, or a slow lead within
//   lead_range in the ego lane; D/E: static blockage ahead with a clear
//   adjacent lane (left preferred); B when blocked with no clear side; else A.
char decision_label(const std::vector<KinematicState>& entities,
                    const QaConfig& cfg);

// Deterministic instantiation: cycles the requested families, skips template
// draws whose subject is not uniquely resolvable, re-evaluates every answer
// independently, and throws InternalError on any disagreement.
std::vector<QaPair> generate_qa(const QaScene& scene,
                                const std::vector<QaFamily>& families, int n,
                                std::uint64_t seed, const QaConfig& cfg);

}  // namespace bevcoord
