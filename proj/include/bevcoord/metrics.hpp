#pragma once
// Consistency and hallucination metrics over fused outputs, plus report
// assembly (JSON, aligned text table, SVG bars).
//
// Matching doctrine:
//   - The oracle matcher is a one-to-one Hungarian assignment on BEV IoU at
//     threshold tau, optionally restricted to class-compatible pairs. Final
//     outputs are matched class-consistently; per-agent conflict detection
//     matches geometry only, so deliberately wrong classes still line up
//     with the object they describe.
//   - Redundancy uses a many-to-one greedy map instead: every output lands
//     on its best-IoU ground-truth entity, which makes duplicates countable.
//
// Two agreement rates are computed:
//   - attribute agreement over final reports ("acr"): outputs grouped per
//     ground-truth entity must present one consistent class / position /
//     heading story; single-report groups pass by construction. This is the
//     rate the evaluation table shows, and it is comparable across fused and
//     naive-union runs.
//   - source agreement ("acr_sources"): pre-fusion per-source values held in
//     entity lineage must agree pairwise; undefined without multi-source
//     entities. The radar's uniform class placeholder is excluded from the
//     class check.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bevcoord/json_io.hpp"
#include "bevcoord/types.hpp"

namespace bevcoord {

struct MetricThresholds {
  double iou_tau = 0.5;
  double position_tol_m = 0.5;
  double heading_tol_rad = 15.0 * 0.017453292519943295;  // 15 degrees
  double camera_iou = 0.3;  // 2D matching floor for conflict detection
};

// Geometric view of anything the matcher can consume.
struct OracleBox {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double heading_rad = 0.0;
  std::string type;
};

OracleBox oracle_box(const FusedEntity& e);
OracleBox oracle_box(const GtEntity& e);
OracleBox oracle_box(const Detection3D& d);

struct OracleMatch {
  std::vector<std::pair<int, int>> pairs;  // (output index, gt index)
  std::vector<int> unmatched_outputs;
  std::vector<int> unmatched_gt;
  double iou_threshold = 0.5;
};

OracleMatch oracle_match(const std::vector<OracleBox>& outputs,
                         const std::vector<OracleBox>& gt, double tau,
                         bool require_class_compat = true);

// Best-IoU greedy map for redundancy: index of the ground-truth entity each
// output reports on, or -1 when nothing clears the threshold. Ties go to the
// smallest ground-truth index.
std::vector<int> greedy_report_map(const std::vector<OracleBox>& outputs,
                                   const std::vector<OracleBox>& gt, double tau);

// Raw per-scene counts; aggregation sums these, so micro-averaging over a
// scene set is exact by construction.
struct SceneCounts {
  int scenes = 1;
  int outputs = 0;
  int gt = 0;
  int matched = 0;            // one-to-one oracle matches
  int unmatched_outputs = 0;  // hallucination numerator
  int duplicates = 0;         // sum over gt of max(0, reports - 1)
  int output_checks = 0;      // report-level agreement
  int output_pass = 0;
  int source_checks = 0;      // lineage-level agreement
  int source_pass = 0;
  int conflicts = 0;          // |C|
  int conflicts_fixed = 0;    // |C_fix|
  int misses = 0;             // |M| (primary-detector misses)
  int misses_compensated = 0; // |M_comp|
};

SceneCounts operator+(const SceneCounts& a, const SceneCounts& b);

// Percentages derived from counts; absent means the denominator was zero and
// the metric is not applicable (never coerced to 0 or 100).
struct MetricValues {
  double err_pct = 0.0;
  std::optional<double> acr_pct;
  std::optional<double> acr_sources_pct;
  std::optional<double> crr_pct;
  std::optional<double> mdcr_pct;
  double he_per_scene = 0.0;
  double ep_pct = 0.0;
  std::optional<double> er_pct;
  double ef1_pct = 0.0;
};

MetricValues metrics_from_counts(const SceneCounts& c);

double compute_err(const std::vector<OracleBox>& outputs,
                   const std::vector<OracleBox>& gt, double tau);

// Source-agreement rate over lineage values; nullopt without any qualifying
// (multi-source entity, multi-value attribute) check.
std::optional<double> compute_acr(const std::vector<FusedEntity>& entities,
                                  const MetricThresholds& t);

// Full per-scene evaluation. The fact bundle and calibration are needed only
// for conflict (CRR) and primary-miss (MDCR) accounting; pass nullptr to skip
// those counters.
SceneCounts evaluate_scene(const SceneSummary& summary,
                           const GroundTruthScene& gt,
                           const SceneFactBundle* facts,
                           const Calibration* calib,
                           const MetricThresholds& t);

struct ConsistencyReport {
  std::vector<std::pair<std::string, SceneCounts>> per_scene;  // scene_id keyed
  SceneCounts totals;
};

ConsistencyReport make_report(
    const std::vector<std::pair<std::string, SceneCounts>>& per_scene);

Json report_to_json(const ConsistencyReport& report);

// Aligned text table, one row per configuration; "-" marks not-applicable.
std::string report_table(
    const std::vector<std::pair<std::string, MetricValues>>& rows);

// Minimal grouped bar chart (ERR / HE lower-better, ACR / EF1 higher-better).
std::string report_svg(
    const std::vector<std::pair<std::string, MetricValues>>& rows);

}  // namespace bevcoord
