#include "bevcoord/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bevcoord/association.hpp"
#include "bevcoord/errors.hpp"
#include "bevcoord/geometry.hpp"

namespace bevcoord {

namespace {

double box_iou(const OracleBox& a, const OracleBox& b) {
  return bev_iou(bev_box(a.center, a.size, a.heading_rad),
                 bev_box(b.center, b.size, b.heading_rad));
}

Eigen::Vector2d json_to_vec2(const Json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

}  // namespace

OracleBox oracle_box(const FusedEntity& e) {
  return {e.position_bev, e.size, e.heading_rad, e.type};
}

OracleBox oracle_box(const GtEntity& e) {
  return {e.position_bev, e.size, e.heading_rad, e.type};
}

OracleBox oracle_box(const Detection3D& d) {
  return {d.center_ego.head<2>(), d.size, d.heading_rad,
          argmax_class(d.class_probs)};
}

OracleMatch oracle_match(const std::vector<OracleBox>& outputs,
                         const std::vector<OracleBox>& gt, double tau,
                         bool require_class_compat) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw InternalError("oracle_match: tau must lie in (0,1)");
  }
  OracleMatch match;
  match.iou_threshold = tau;
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(
      static_cast<Eigen::Index>(outputs.size()),
      static_cast<Eigen::Index>(gt.size()), kForbiddenCost);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (require_class_compat &&
          !classes_compatible(outputs[i].type, gt[j].type)) {
        continue;
      }
      const double iou = box_iou(outputs[i], gt[j]);
      if (iou < tau) continue;
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          1.0 - iou;
    }
  }
  const Assignment assign = solve_assignment(cost);
  std::vector<bool> gt_taken(gt.size(), false);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const int j = assign.row_to_col[i];
    if (j < 0) {
      match.unmatched_outputs.push_back(static_cast<int>(i));
    } else {
      match.pairs.emplace_back(static_cast<int>(i), j);
      gt_taken[static_cast<std::size_t>(j)] = true;
    }
  }
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (!gt_taken[j]) match.unmatched_gt.push_back(static_cast<int>(j));
  }
  return match;
}

std::vector<int> greedy_report_map(const std::vector<OracleBox>& outputs,
                                   const std::vector<OracleBox>& gt,
                                   double tau) {
  std::vector<int> map(outputs.size(), -1);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    double best_iou = tau;
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (!classes_compatible(outputs[i].type, gt[j].type)) continue;
      const double iou = box_iou(outputs[i], gt[j]);
      if (iou > best_iou || (iou == best_iou && map[i] < 0 && iou >= tau)) {
        best_iou = iou;
        map[i] = static_cast<int>(j);
      }
    }
  }
  return map;
}

SceneCounts operator+(const SceneCounts& a, const SceneCounts& b) {
  SceneCounts s = a;
  s.scenes += b.scenes;
  s.outputs += b.outputs;
  s.gt += b.gt;
  s.matched += b.matched;
  s.unmatched_outputs += b.unmatched_outputs;
  s.duplicates += b.duplicates;
  s.output_checks += b.output_checks;
  s.output_pass += b.output_pass;
  s.source_checks += b.source_checks;
  s.source_pass += b.source_pass;
  s.conflicts += b.conflicts;
  s.conflicts_fixed += b.conflicts_fixed;
  s.misses += b.misses;
  s.misses_compensated += b.misses_compensated;
  return s;
}

MetricValues metrics_from_counts(const SceneCounts& c) {
  MetricValues m;
  m.err_pct = 100.0 * c.duplicates / std::max(1, c.outputs);
  if (c.output_checks > 0) {
    m.acr_pct = 100.0 * c.output_pass / c.output_checks;
  }
  if (c.source_checks > 0) {
    m.acr_sources_pct = 100.0 * c.source_pass / c.source_checks;
  }
  if (c.conflicts > 0) {
    m.crr_pct = 100.0 * c.conflicts_fixed / c.conflicts;
  }
  if (c.misses > 0) {
    m.mdcr_pct = 100.0 * c.misses_compensated / c.misses;
  }
  m.he_per_scene =
      static_cast<double>(c.unmatched_outputs) / std::max(1, c.scenes);
  m.ep_pct = c.outputs > 0 ? 100.0 * c.matched / c.outputs : 0.0;
  if (c.gt > 0) m.er_pct = 100.0 * c.matched / c.gt;
  const double p = m.ep_pct;
  const double r = m.er_pct.value_or(0.0);
  m.ef1_pct = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  return m;
}

double compute_err(const std::vector<OracleBox>& outputs,
                   const std::vector<OracleBox>& gt, double tau) {
  const std::vector<int> map = greedy_report_map(outputs, gt, tau);
  std::map<int, int> reports;
  for (int g : map) {
    if (g >= 0) reports[g] += 1;
  }
  int duplicates = 0;
  for (const auto& [g, n] : reports) duplicates += std::max(0, n - 1);
  return 100.0 * duplicates /
         std::max<std::size_t>(1, outputs.size());
}

namespace {

// One agreement check over a set of per-source samples: every pair must sit
// within tolerance. Skipped (returns nullopt) with fewer than two samples.
template <typename T, typename Fn>
std::optional<bool> pairwise_agree(const std::vector<T>& values, Fn&& within) {
  if (values.size() < 2) return std::nullopt;
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = i + 1; j < values.size(); ++j) {
      if (!within(values[i], values[j])) return false;
    }
  }
  return true;
}

void count_check(std::optional<bool> result, int& checks, int& passes) {
  if (!result) return;
  checks += 1;
  if (*result) passes += 1;
}

}  // namespace

namespace {

void source_agreement_counts(const std::vector<FusedEntity>& entities,
                             const MetricThresholds& t, int& checks,
                             int& passes) {
  for (const auto& e : entities) {
    if (e.sources.size() < 2) continue;

    if (auto it = e.lineage.find("class"); it != e.lineage.end()) {
      std::vector<std::string> labels;
      for (const auto& [source, value] : it->second.values) {
        if (source == "radar") continue;  // uniform placeholder, not a claim
        if (value.is_string()) labels.push_back(value.get<std::string>());
      }
      count_check(pairwise_agree(labels,
                                 [](const std::string& a, const std::string& b) {
                                   return a == b;
                                 }),
                  checks, passes);
    }
    if (auto it = e.lineage.find("position"); it != e.lineage.end()) {
      std::vector<Eigen::Vector2d> points;
      for (const auto& [source, value] : it->second.values) {
        if (value.is_array() && value.size() >= 2) {
          points.push_back(json_to_vec2(value));
        }
      }
      count_check(
          pairwise_agree(points,
                         [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                           return (a - b).norm() <= t.position_tol_m;
                         }),
          checks, passes);
    }
    if (auto it = e.lineage.find("heading"); it != e.lineage.end()) {
      std::vector<double> headings;
      for (const auto& [source, value] : it->second.values) {
        if (value.is_number()) headings.push_back(value.get<double>());
      }
      count_check(pairwise_agree(headings,
                                 [&](double a, double b) {
                                   return std::abs(angle_diff(a, b)) <=
                                          t.heading_tol_rad;
                                 }),
                  checks, passes);
    }
  }
}

}  // namespace

std::optional<double> compute_acr(const std::vector<FusedEntity>& entities,
                                  const MetricThresholds& t) {
  int checks = 0, passes = 0;
  source_agreement_counts(entities, t, checks, passes);
  if (checks == 0) return std::nullopt;
  return 100.0 * passes / checks;
}

namespace {

struct SourceClaim {
  std::string agent;
  std::string type;
  std::optional<double> heading_rad;
};

void gather_3d_claims(const AgentFactSet& facts,
                      const std::vector<OracleBox>& gt_boxes, double tau,
                      std::map<int, std::vector<SourceClaim>>& claims) {
  std::vector<OracleBox> boxes;
  for (const auto& det : facts.detections_3d) boxes.push_back(oracle_box(det));
  const OracleMatch match = oracle_match(boxes, gt_boxes, tau, false);
  for (const auto& [i, j] : match.pairs) {
    const Detection3D& det = facts.detections_3d[static_cast<std::size_t>(i)];
    claims[j].push_back({to_string(facts.agent_kind),
                         argmax_class(det.class_probs), det.heading_rad});
  }
}

void gather_camera_claims(const AgentFactSet& facts, const Calibration& calib,
                          const std::vector<GtEntity>& gt, double min_iou,
                          std::map<int, std::vector<SourceClaim>>& claims) {
  for (const auto& [camera_id, model] : calib.cameras) {
    std::vector<std::optional<std::array<double, 4>>> gt_boxes;
    for (const auto& g : gt) {
      const Eigen::Vector3d center(g.position_bev.x(), g.position_bev.y(),
                                   g.size.z() / 2.0);
      gt_boxes.push_back(
          project_box_footprint(model, center, g.size, g.heading_rad));
    }
    std::vector<int> det_idx;
    for (std::size_t i = 0; i < facts.detections_2d.size(); ++i) {
      if (facts.detections_2d[i].camera_id == camera_id) {
        det_idx.push_back(static_cast<int>(i));
      }
    }
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(
        static_cast<Eigen::Index>(det_idx.size()),
        static_cast<Eigen::Index>(gt.size()), kForbiddenCost);
    for (std::size_t r = 0; r < det_idx.size(); ++r) {
      const auto& det = facts.detections_2d[static_cast<std::size_t>(det_idx[r])];
      for (std::size_t j = 0; j < gt.size(); ++j) {
        if (!gt_boxes[j]) continue;
        const double iou = bbox_iou(det.bbox, *gt_boxes[j]);
        if (iou < min_iou) continue;
        cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
            1.0 - iou;
      }
    }
    const Assignment assign = solve_assignment(cost);
    for (std::size_t r = 0; r < det_idx.size(); ++r) {
      const int j = assign.row_to_col[r];
      if (j < 0) continue;
      const auto& det = facts.detections_2d[static_cast<std::size_t>(det_idx[r])];
      claims[j].push_back({"camera", argmax_class(det.class_probs),
                           std::nullopt});
    }
  }
}

}  // namespace

SceneCounts evaluate_scene(const SceneSummary& summary,
                           const GroundTruthScene& gt,
                           const SceneFactBundle* facts,
                           const Calibration* calib,
                           const MetricThresholds& t) {
  SceneCounts c;
  std::vector<OracleBox> outputs;
  for (const auto& e : summary.entities) outputs.push_back(oracle_box(e));
  std::vector<OracleBox> gt_boxes;
  for (const auto& g : gt.entities) gt_boxes.push_back(oracle_box(g));

  c.outputs = static_cast<int>(outputs.size());
  c.gt = static_cast<int>(gt_boxes.size());

  const OracleMatch match = oracle_match(outputs, gt_boxes, t.iou_tau, true);
  c.matched = static_cast<int>(match.pairs.size());
  c.unmatched_outputs = static_cast<int>(match.unmatched_outputs.size());

  // Redundancy groups: which outputs report on which ground-truth entity.
  const std::vector<int> rmap = greedy_report_map(outputs, gt_boxes, t.iou_tau);
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < rmap.size(); ++i) {
    if (rmap[i] >= 0) groups[rmap[i]].push_back(static_cast<int>(i));
  }
  for (const auto& [g, members] : groups) {
    c.duplicates += std::max<int>(0, static_cast<int>(members.size()) - 1);

    std::vector<std::string> classes;
    std::vector<Eigen::Vector2d> positions;
    std::vector<double> headings;
    for (int i : members) {
      const auto idx = static_cast<std::size_t>(i);
      classes.push_back(outputs[idx].type);
      positions.push_back(outputs[idx].center);
      headings.push_back(outputs[idx].heading_rad);
    }
    // Single-member groups pass: one report is one consistent story.
    auto tally = [&](bool agree) {
      c.output_checks += 1;
      if (agree) c.output_pass += 1;
    };
    tally(pairwise_agree(classes, [](const std::string& a,
                                     const std::string& b) { return a == b; })
              .value_or(true));
    tally(pairwise_agree(positions,
                         [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                           return (a - b).norm() <= t.position_tol_m;
                         })
              .value_or(true));
    tally(pairwise_agree(headings,
                         [&](double a, double b) {
                           return std::abs(angle_diff(a, b)) <= t.heading_tol_rad;
                         })
              .value_or(true));
  }

  source_agreement_counts(summary.entities, t, c.source_checks, c.source_pass);

  if (facts != nullptr) {
    // Conflict inventory from pre-fusion observations, matched to ground
    // truth geometrically so wrong classes still count.
    std::map<int, std::vector<SourceClaim>> claims;
    for (const auto& agent : facts->agents) {
      switch (agent.agent_kind) {
        case AgentKind::kLidar:
        case AgentKind::kBevFusion:
          gather_3d_claims(agent, gt_boxes, t.iou_tau, claims);
          break;
        case AgentKind::kRadar:
          break;  // no usable class or heading claim
        case AgentKind::kCamera:
          if (calib != nullptr) {
            gather_camera_claims(agent, *calib, gt.entities, t.camera_iou,
                                 claims);
          }
          break;
      }
    }
    std::map<int, bool> gt_matched_once;
    for (const auto& [g, members] : groups) {
      gt_matched_once[g] = members.size() == 1;
    }
    std::map<int, int> final_pair;  // gt index -> output index
    for (const auto& [i, j] : match.pairs) final_pair[j] = i;

    for (const auto& [g, list] : claims) {
      if (list.size() < 2) continue;
      bool class_conflict = false, heading_conflict = false;
      for (std::size_t a = 0; a < list.size(); ++a) {
        for (std::size_t b = a + 1; b < list.size(); ++b) {
          if (list[a].type != list[b].type) class_conflict = true;
          if (list[a].heading_rad && list[b].heading_rad &&
              std::abs(angle_diff(*list[a].heading_rad, *list[b].heading_rad)) >
                  t.heading_tol_rad) {
            heading_conflict = true;
          }
        }
      }
      if (!class_conflict && !heading_conflict) continue;
      c.conflicts += 1;

      auto pair_it = final_pair.find(g);
      if (pair_it == final_pair.end()) continue;
      auto once_it = gt_matched_once.find(g);
      if (once_it == gt_matched_once.end() || !once_it->second) continue;
      const OracleBox& out = outputs[static_cast<std::size_t>(pair_it->second)];
      const GtEntity& truth = gt.entities[static_cast<std::size_t>(g)];
      const bool consistent =
          out.type == truth.type &&
          (out.center - truth.position_bev).norm() <= t.position_tol_m &&
          std::abs(angle_diff(out.heading_rad, truth.heading_rad)) <=
              t.heading_tol_rad;
      if (consistent) c.conflicts_fixed += 1;
    }

    // Primary-detector misses and their compensation by the fused output.
    for (const auto& agent : facts->agents) {
      if (agent.agent_kind != AgentKind::kBevFusion) continue;
      std::vector<OracleBox> primary;
      for (const auto& det : agent.detections_3d) {
        primary.push_back(oracle_box(det));
      }
      const OracleMatch pm = oracle_match(primary, gt_boxes, t.iou_tau, true);
      for (int g : pm.unmatched_gt) {
        c.misses += 1;
        if (final_pair.count(g)) c.misses_compensated += 1;
      }
    }
  }
  return c;
}

ConsistencyReport make_report(
    const std::vector<std::pair<std::string, SceneCounts>>& per_scene) {
  ConsistencyReport report;
  report.per_scene = per_scene;
  SceneCounts totals;
  totals.scenes = 0;
  for (const auto& [scene_id, counts] : per_scene) {
    totals = totals + counts;
  }
  report.totals = totals;
  return report;
}

namespace {

Json counts_to_json(const SceneCounts& c) {
  Json j;
  j["scenes"] = c.scenes;
  j["outputs"] = c.outputs;
  j["gt"] = c.gt;
  j["matched"] = c.matched;
  j["unmatched_outputs"] = c.unmatched_outputs;
  j["duplicates"] = c.duplicates;
  j["output_checks"] = c.output_checks;
  j["output_pass"] = c.output_pass;
  j["source_checks"] = c.source_checks;
  j["source_pass"] = c.source_pass;
  j["conflicts"] = c.conflicts;
  j["conflicts_fixed"] = c.conflicts_fixed;
  j["misses"] = c.misses;
  j["misses_compensated"] = c.misses_compensated;
  return j;
}

Json values_to_json(const MetricValues& m) {
  auto opt = [](const std::optional<double>& v) {
    return v ? Json(*v) : Json(nullptr);
  };
  Json j;
  j["err_pct"] = m.err_pct;
  j["acr_pct"] = opt(m.acr_pct);
  j["acr_sources_pct"] = opt(m.acr_sources_pct);
  j["crr_pct"] = opt(m.crr_pct);
  j["mdcr_pct"] = opt(m.mdcr_pct);
  j["he_per_scene"] = m.he_per_scene;
  j["ep_pct"] = m.ep_pct;
  j["er_pct"] = opt(m.er_pct);
  j["ef1_pct"] = m.ef1_pct;
  return j;
}

std::string fmt_cell(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(1);
  out << *v;
  return out.str();
}

std::string fmt_cell2(double v) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << v;
  return out.str();
}

}  // namespace

Json report_to_json(const ConsistencyReport& report) {
  Json j;
  Json scenes = Json::array();
  for (const auto& [scene_id, counts] : report.per_scene) {
    Json row;
    row["scene_id"] = scene_id;
    row["counts"] = counts_to_json(counts);
    row["metrics"] = values_to_json(metrics_from_counts(counts));
    scenes.push_back(row);
  }
  j["per_scene"] = scenes;
  j["totals"] = counts_to_json(report.totals);
  j["metrics"] = values_to_json(metrics_from_counts(report.totals));
  return j;
}

std::string report_table(
    const std::vector<std::pair<std::string, MetricValues>>& rows) {
  const std::vector<std::string> headers = {"configuration", "ERR%", "ACR%",
                                            "ACRsrc%",       "CRR%", "MDCR%",
                                            "HE",            "EP%",  "ER%",
                                            "EF1%"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& [name, m] : rows) {
    cells.push_back({name, fmt_cell(m.err_pct), fmt_cell(m.acr_pct),
                     fmt_cell(m.acr_sources_pct), fmt_cell(m.crr_pct),
                     fmt_cell(m.mdcr_pct), fmt_cell2(m.he_per_scene),
                     fmt_cell(m.ep_pct), fmt_cell(m.er_pct),
                     fmt_cell(m.ef1_pct)});
  }
  std::vector<std::size_t> widths(headers.size());
  for (std::size_t c = 0; c < headers.size(); ++c) {
    widths[c] = headers[c].size();
    for (const auto& row : cells) widths[c] = std::max(widths[c], row[c].size());
  }
  std::ostringstream out;
  auto emit_row = [&](const std::vector<std::string>& row) {
    for (std::size_t cidx = 0; cidx < row.size(); ++cidx) {
      if (cidx == 0) {
        out << row[cidx]
            << std::string(widths[cidx] - row[cidx].size(), ' ');
      } else {
        out << "  " << std::string(widths[cidx] - row[cidx].size(), ' ')
            << row[cidx];
      }
    }
    out << "\n";
  };
  emit_row(headers);
  std::size_t total = 0;
  for (std::size_t w : widths) total += w;
  out << std::string(total + 2 * (headers.size() - 1), '-') << "\n";
  for (const auto& row : cells) emit_row(row);
  return out.str();
}

std::string report_svg(
    const std::vector<std::pair<std::string, MetricValues>>& rows) {
  const std::vector<std::string> palette = {"#4c78a8", "#f58518", "#54a24b",
                                            "#e45756"};
  struct Metric {
    std::string label;
    std::vector<std::optional<double>> values;  // percent scale
  };
  std::vector<Metric> metrics = {{"ERR", {}}, {"ACR", {}}, {"CRR", {}},
                                 {"EP", {}},  {"ER", {}},  {"EF1", {}}};
  for (const auto& [name, m] : rows) {
    metrics[0].values.push_back(m.err_pct);
    metrics[1].values.push_back(m.acr_pct);
    metrics[2].values.push_back(m.crr_pct);
    metrics[3].values.push_back(m.ep_pct);
    metrics[4].values.push_back(m.er_pct);
    metrics[5].values.push_back(m.ef1_pct);
  }

  const int width = 720, height = 360;
  const int left = 50, bottom = 40, top = 30;
  const double plot_h = height - bottom - top;
  const double group_w =
      static_cast<double>(width - left - 20) / metrics.size();
  const double bar_w =
      std::min(24.0, group_w / std::max<std::size_t>(1, rows.size()) - 4.0);

  std::ostringstream svg;
  svg.setf(std::ios::fixed);
  svg.precision(1);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  for (int pct = 0; pct <= 100; pct += 25) {
    const double y = top + plot_h * (1.0 - pct / 100.0);
    svg << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\""
        << width - 20 << "\" y2=\"" << y
        << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << y + 4
        << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">"
        << pct << "</text>\n";
  }
  for (std::size_t mi = 0; mi < metrics.size(); ++mi) {
    const double gx = left + group_w * mi;
    for (std::size_t ri = 0; ri < rows.size(); ++ri) {
      const auto& value = metrics[mi].values[ri];
      const double x = gx + 8 + ri * (bar_w + 4);
      if (value) {
        const double h = plot_h * std::clamp(*value, 0.0, 100.0) / 100.0;
        svg << "<rect x=\"" << x << "\" y=\"" << top + plot_h - h
            << "\" width=\"" << bar_w << "\" height=\"" << h << "\" fill=\""
            << palette[ri % palette.size()] << "\"/>\n";
      } else {
        svg << "<text x=\"" << x + bar_w / 2 << "\" y=\""
            << top + plot_h - 6
            << "\" font-size=\"11\" text-anchor=\"middle\" "
               "font-family=\"sans-serif\">-</text>\n";
      }
    }
    svg << "<text x=\"" << gx + group_w / 2 << "\" y=\"" << height - bottom + 16
        << "\" font-size=\"12\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\">"
        << metrics[mi].label << "</text>\n";
  }
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const double y = 16.0 + 0.0;
    const double x = left + ri * 160.0;
    svg << "<rect x=\"" << x << "\" y=\"" << y - 10 << "\" width=\"12\" "
        << "height=\"12\" fill=\"" << palette[ri % palette.size()] << "\"/>\n";
    svg << "<text x=\"" << x + 16 << "\" y=\"" << y
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << rows[ri].first
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace bevcoord
