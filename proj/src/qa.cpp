#include "bevcoord/qa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "bevcoord/errors.hpp"
#include "bevcoord/stats.hpp"

namespace bevcoord {

std::string to_string(QaFamily family) {
  switch (family) {
    case QaFamily::kRelation: return "relation";
    case QaFamily::kCounting: return "counting";
    case QaFamily::kRisk: return "risk";
    case QaFamily::kDecision: return "decision";
  }
  throw InternalError("unknown QaFamily");
}

QaFamily qa_family_from_string(const std::string& name,
                               const std::string& path) {
  if (name == "relation") return QaFamily::kRelation;
  if (name == "counting") return QaFamily::kCounting;
  if (name == "risk") return QaFamily::kRisk;
  if (name == "decision") return QaFamily::kDecision;
  throw SchemaError(path, "unknown QA family '" + name + "'");
}

QaScene qa_scene(const GroundTruthScene& scene) {
  QaScene out;
  out.scene_id = scene.scene_id;
  out.mode = "ground_truth";
  for (const auto& gt : scene.entities) {
    out.entities.push_back(
        {gt.position_bev, gt.velocity_bev, gt.heading_rad, gt.type});
    out.entity_refs.push_back("gt:" + std::to_string(gt.gt_id));
  }
  return out;
}

QaScene qa_scene(const SceneSummary& summary) {
  QaScene out;
  out.scene_id = summary.scene_id;
  out.mode = "summary";
  for (const auto& e : summary.entities) {
    out.entities.push_back({e.position_bev,
                            e.velocity_bev.value_or(Eigen::Vector2d::Zero()),
                            e.heading_rad, e.type});
    out.entity_refs.push_back(e.entity_id);
  }
  return out;
}

Json to_json(const QaPair& pair) {
  Json j;
  j["family"] = to_string(pair.family);
  j["question"] = pair.question;
  j["answer"] = pair.answer;
  j["scene_id"] = pair.scene_id;
  j["mode"] = pair.mode;
  j["entity_refs"] = Json(pair.entity_refs);
  auto opt = [](const std::optional<double>& v) {
    return v && std::isfinite(*v) ? Json(*v) : Json(nullptr);
  };
  j["distance_m"] = opt(pair.distance_m);
  j["closing_speed_mps"] = opt(pair.closing_speed_mps);
  j["ttc_s"] = opt(pair.ttc_s);
  return j;
}

bool relation_holds(const KinematicState& subject, const KinematicState& object,
                    const std::string& rel, const QaConfig& cfg) {
  const Eigen::Vector2d delta = object.position - subject.position;
  const double c = std::cos(subject.heading_rad);
  const double s = std::sin(subject.heading_rad);
  const double dx = c * delta.x() + s * delta.y();
  const double dy = -s * delta.x() + c * delta.y();
  if (rel == "front") return dx > 0.0 && std::abs(dy) <= cfg.lane_halfwidth_m;
  if (rel == "behind") return dx < 0.0 && std::abs(dy) <= cfg.lane_halfwidth_m;
  if (rel == "left") return dy > cfg.side_min_m;
  if (rel == "right") return dy < -cfg.side_min_m;
  if (rel == "near") return delta.norm() <= cfg.near_max_m;
  throw InternalError("relation_holds: unknown relation '" + rel + "'");
}

int count_matching(const std::vector<KinematicState>& entities,
                   const KinematicState& subject, const std::string& rel,
                   const std::string& obj2_class, const QaConfig& cfg) {
  int count = 0;
  for (const auto& e : entities) {
    if (&e == &subject) continue;
    if (e.type != obj2_class) continue;
    if (relation_holds(subject, e, rel, cfg)) count += 1;
  }
  return count;
}

RiskAnswer collision_risk(const KinematicState& target, double horizon_s,
                          double tau_s) {
  RiskAnswer out;
  out.distance_m = target.position.norm();
  if (out.distance_m < 1e-9) {
    out.closing_speed_mps = target.velocity.norm();
    out.ttc_s = 0.0;
    out.risky = true;
    return out;
  }
  out.closing_speed_mps =
      -target.position.dot(target.velocity) / out.distance_m;
  out.ttc_s = out.closing_speed_mps > 0.0
                  ? out.distance_m / out.closing_speed_mps
                  : std::numeric_limits<double>::infinity();
  out.risky = out.ttc_s < tau_s && out.ttc_s <= horizon_s;
  return out;
}

namespace {

bool in_ego_lane_ahead(const KinematicState& e, double max_x,
                       const QaConfig& cfg) {
  return e.position.x() > 0.0 && e.position.x() <= max_x &&
         std::abs(e.position.y()) <= cfg.lane_halfwidth_m;
}

bool side_clear(const std::vector<KinematicState>& entities, double side_sign,
                const QaConfig& cfg) {
  for (const auto& e : entities) {
    const double lateral = side_sign * e.position.y();
    if (lateral > cfg.side_clear_min_m && lateral <= cfg.side_clear_max_m &&
        e.position.x() >= -cfg.side_clear_behind_m &&
        e.position.x() <= cfg.blocked_range_m) {
      return false;
    }
  }
  return true;
}

}  // namespace

char decision_label(const std::vector<KinematicState>& entities,
                    const QaConfig& cfg) {
  double min_ttc = std::numeric_limits<double>::infinity();
  for (const auto& e : entities) {
    min_ttc = std::min(min_ttc,
                       collision_risk(e, cfg.horizon_s, cfg.ttc_threshold_s).ttc_s);
  }
  if (min_ttc < cfg.stop_ttc_s) return 'C';
  if (min_ttc < cfg.ttc_threshold_s) return 'B';

  for (const auto& e : entities) {
    if (in_ego_lane_ahead(e, cfg.lead_range_m, cfg) && e.velocity.x() < 0.0) {
      return 'B';  // lead pulling closer (slower than ego)
    }
  }

  bool blocked = false;
  for (const auto& e : entities) {
    if (in_ego_lane_ahead(e, cfg.blocked_range_m, cfg) &&
        e.velocity.norm() <= cfg.static_speed_mps) {
      blocked = true;
      break;
    }
  }
  if (blocked) {
    if (side_clear(entities, +1.0, cfg)) return 'D';
    if (side_clear(entities, -1.0, cfg)) return 'E';
    return 'B';
  }
  return 'A';
}

namespace {

// ---------------------------------------------------------------------------
// Independent re-evaluation routes. These deliberately reformulate the same
// thresholds (polar decomposition, finite differences, reordered ladder) so a
// slip in the primary arithmetic cannot self-confirm.
// ---------------------------------------------------------------------------

bool checker_relation(const KinematicState& subject, const KinematicState& object,
                      const std::string& rel, const QaConfig& cfg) {
  const double ox = object.position.x() - subject.position.x();
  const double oy = object.position.y() - subject.position.y();
  const double dist = std::hypot(ox, oy);
  if (rel == "near") return dist <= cfg.near_max_m;
  const double bearing = std::atan2(oy, ox) - subject.heading_rad;
  const double forward = dist * std::cos(bearing);
  const double lateral = dist * std::sin(bearing);
  if (rel == "front") return forward > 0.0 && std::abs(lateral) <= cfg.lane_halfwidth_m;
  if (rel == "behind") return forward < 0.0 && std::abs(lateral) <= cfg.lane_halfwidth_m;
  if (rel == "left") return lateral > cfg.side_min_m;
  if (rel == "right") return lateral < -cfg.side_min_m;
  throw InternalError("checker_relation: unknown relation '" + rel + "'");
}

int checker_count(const std::vector<KinematicState>& entities,
                  const KinematicState& subject, const std::string& rel,
                  const std::string& obj2_class, const QaConfig& cfg) {
  int count = 0;
  for (const auto& e : entities) {
    if (&e == &subject || e.type != obj2_class) continue;
    if (checker_relation(subject, e, rel, cfg)) count += 1;
  }
  return count;
}

RiskAnswer checker_risk(const KinematicState& target, double horizon_s,
                        double tau_s) {
  RiskAnswer out;
  out.distance_m = std::hypot(target.position.x(), target.position.y());
  const double h = 1e-6;
  const double ahead = std::hypot(target.position.x() + h * target.velocity.x(),
                                  target.position.y() + h * target.velocity.y());
  out.closing_speed_mps = (out.distance_m - ahead) / h;
  if (out.distance_m < 1e-9) {
    out.closing_speed_mps = std::hypot(target.velocity.x(), target.velocity.y());
    out.ttc_s = 0.0;
    out.risky = true;
    return out;
  }
  out.ttc_s = out.closing_speed_mps > 0.0
                  ? out.distance_m / out.closing_speed_mps
                  : std::numeric_limits<double>::infinity();
  out.risky = out.ttc_s < tau_s && out.ttc_s <= horizon_s;
  return out;
}

char checker_decision(const std::vector<KinematicState>& entities,
                      const QaConfig& cfg) {
  bool any_stop = false, any_slow = false, slow_lead = false, blocked = false;
  for (const auto& e : entities) {
    const RiskAnswer r = checker_risk(e, cfg.horizon_s, cfg.ttc_threshold_s);
    if (r.ttc_s < cfg.stop_ttc_s) any_stop = true;
    if (r.ttc_s < cfg.ttc_threshold_s) any_slow = true;
    const bool in_lane = std::abs(e.position.y()) <= cfg.lane_halfwidth_m &&
                         e.position.x() > 0.0;
    if (in_lane && e.position.x() <= cfg.lead_range_m && e.velocity.x() < 0.0) {
      slow_lead = true;
    }
    if (in_lane && e.position.x() <= cfg.blocked_range_m &&
        std::hypot(e.velocity.x(), e.velocity.y()) <= cfg.static_speed_mps) {
      blocked = true;
    }
  }
  if (any_stop) return 'C';
  if (any_slow || slow_lead) return 'B';
  if (!blocked) return 'A';
  auto clear = [&](double sign) {
    for (const auto& e : entities) {
      const double lat = sign * e.position.y();
      if (lat > cfg.side_clear_min_m && lat <= cfg.side_clear_max_m &&
          e.position.x() >= -cfg.side_clear_behind_m &&
          e.position.x() <= cfg.blocked_range_m) {
        return false;
      }
    }
    return true;
  };
  if (clear(+1.0)) return 'D';
  if (clear(-1.0)) return 'E';
  return 'B';
}

const std::vector<std::string>& relation_tokens() {
  static const std::vector<std::string> kTokens = {"front", "behind", "left",
                                                   "right", "near"};
  return kTokens;
}

const std::string& relation_phrase(const std::string& token) {
  static const std::map<std::string, std::string> kPhrases = {
      {"front", "in front of"},
      {"behind", "behind"},
      {"left", "to the left of"},
      {"right", "to the right of"},
      {"near", "near"}};
  return kPhrases.at(token);
}

// Subjects must be uniquely resolvable: the ego, or the single instance of
// its class. Index -1 denotes the ego.
std::vector<int> subject_candidates(const QaScene& scene) {
  std::map<std::string, int> counts;
  for (const auto& e : scene.entities) counts[e.type] += 1;
  std::vector<int> out = {-1};
  for (std::size_t i = 0; i < scene.entities.size(); ++i) {
    if (counts[scene.entities[i].type] == 1) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::string format_number(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

}  // namespace

std::vector<QaPair> generate_qa(const QaScene& scene,
                                const std::vector<QaFamily>& families, int n,
                                std::uint64_t seed, const QaConfig& cfg) {
  std::vector<QaPair> pairs;
  if (n <= 0 || families.empty()) return pairs;

  const KinematicState ego{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(),
                           0.0, "ego"};
  Rng rng(seed ^ 0x51a3c7f29be40d17ULL);
  const int max_attempts = n * 50 + 50;

  std::vector<std::string> present;
  for (const auto& e : scene.entities) present.push_back(e.type);
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());

  auto pick_object_class = [&]() -> std::string {
    // Bias toward present classes so Yes answers exist; keep absent classes
    // reachable so No answers stay covered.
    if (!present.empty() && rng.uniform() < 0.7) {
      return present[rng.uniform_index(present.size())];
    }
    return class_vocabulary()[rng.uniform_index(class_vocabulary().size())];
  };

  for (int attempt = 0;
       attempt < max_attempts && static_cast<int>(pairs.size()) < n;
       ++attempt) {
    const QaFamily family = families[static_cast<std::size_t>(attempt) %
                                     families.size()];
    QaPair pair;
    pair.family = family;
    pair.scene_id = scene.scene_id;
    pair.mode = scene.mode;

    if (family == QaFamily::kRelation || family == QaFamily::kCounting) {
      const std::vector<int> subjects = subject_candidates(scene);
      const int subject_idx =
          subjects[rng.uniform_index(subjects.size())];
      const KinematicState& subject =
          subject_idx < 0 ? ego
                          : scene.entities[static_cast<std::size_t>(subject_idx)];
      const std::string obj1 =
          subject_idx < 0 ? "ego vehicle" : subject.type;
      const std::string obj2 = pick_object_class();
      const std::string rel =
          relation_tokens()[rng.uniform_index(relation_tokens().size())];

      const int count = count_matching(scene.entities, subject, rel, obj2, cfg);
      const int check = checker_count(scene.entities, subject, rel, obj2, cfg);
      if (count != check) {
        throw InternalError("QA re-evaluation disagreement (counting)");
      }
      if (subject_idx >= 0) {
        pair.entity_refs.push_back(
            scene.entity_refs[static_cast<std::size_t>(subject_idx)]);
      }
      for (std::size_t i = 0; i < scene.entities.size(); ++i) {
        const auto& e = scene.entities[i];
        if (&e == &subject || e.type != obj2) continue;
        if (relation_holds(subject, e, rel, cfg)) {
          pair.entity_refs.push_back(scene.entity_refs[i]);
        }
      }
      if (family == QaFamily::kRelation) {
        pair.question = "Is there a " + relation_phrase(rel) +
                        " relationship between the " + obj1 + " and the " +
                        obj2 + " in the current scene?";
        pair.answer = count > 0 ? "Yes" : "No";
      } else {
        pair.question = "How many " + obj2 + " are " + relation_phrase(rel) +
                        " the " + obj1 + " in the current scene?";
        pair.answer = std::to_string(count);
      }
    } else if (family == QaFamily::kRisk) {
      std::map<std::string, int> counts;
      for (const auto& e : scene.entities) counts[e.type] += 1;
      std::vector<int> targets;
      for (std::size_t i = 0; i < scene.entities.size(); ++i) {
        if (counts[scene.entities[i].type] == 1) {
          targets.push_back(static_cast<int>(i));
        }
      }
      if (targets.empty()) continue;  // no uniquely resolvable target
      const int idx = targets[rng.uniform_index(targets.size())];
      const KinematicState& target =
          scene.entities[static_cast<std::size_t>(idx)];
      const RiskAnswer primary =
          collision_risk(target, cfg.horizon_s, cfg.ttc_threshold_s);
      const RiskAnswer check =
          checker_risk(target, cfg.horizon_s, cfg.ttc_threshold_s);
      if (primary.risky != check.risky ||
          std::abs(primary.closing_speed_mps - check.closing_speed_mps) >
              1e-4 * std::max(1.0, std::abs(primary.closing_speed_mps))) {
        throw InternalError("QA re-evaluation disagreement (risk)");
      }
      pair.question = "Is there a potential collision risk between the ego "
                      "vehicle and the " +
                      target.type + " in the next " +
                      format_number(cfg.horizon_s) + " seconds?";
      pair.answer = primary.risky ? "Yes" : "No";
      pair.entity_refs.push_back(
          scene.entity_refs[static_cast<std::size_t>(idx)]);
      pair.distance_m = primary.distance_m;
      pair.closing_speed_mps = primary.closing_speed_mps;
      pair.ttc_s = primary.ttc_s;
    } else {
      const char primary = decision_label(scene.entities, cfg);
      const char check = checker_decision(scene.entities, cfg);
      if (primary != check) {
        throw InternalError("QA re-evaluation disagreement (decision)");
      }
      pair.question =
          "Given the current scene, what is the safest immediate action for "
          "the ego vehicle? Options: A) keep lane and maintain speed, B) slow "
          "down, C) stop / yield, D) change lane left, E) change lane right.";
      pair.answer = std::string(1, primary);
      // Provenance: every entity that can force a non-A answer.
      for (std::size_t i = 0; i < scene.entities.size(); ++i) {
        const auto& e = scene.entities[i];
        const RiskAnswer r =
            collision_risk(e, cfg.horizon_s, cfg.ttc_threshold_s);
        const bool lead = in_ego_lane_ahead(e, cfg.blocked_range_m, cfg);
        if (r.ttc_s < cfg.ttc_threshold_s || lead) {
          pair.entity_refs.push_back(scene.entity_refs[i]);
        }
      }
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace bevcoord
