#include <doctest.h>

#include <string>

#include "bevcoord/errors.hpp"
#include "bevcoord/json_io.hpp"
#include "bevcoord/types.hpp"

using namespace bevcoord;

namespace {

FusedEntity valid_entity() {
  FusedEntity e;
  e.entity_id = "ID_1";
  e.type = "car";
  e.class_confidence = 0.9;
  e.position_bev = {12.0, -3.0};
  e.position_cov = Eigen::Matrix2d::Identity() * 0.04;
  e.velocity_bev = Eigen::Vector2d(-4.0, 0.5);
  e.velocity_cov = Eigen::Matrix2d::Identity() * 0.09;
  e.size = {4.5, 1.9, 1.6};
  e.heading_rad = 0.3;
  e.sources = {"bevfusion", "lidar"};
  e.semantic_attributes = {"color:red"};
  return e;
}

}  // namespace

TEST_CASE("agent kind names round trip") {
  for (AgentKind k : {AgentKind::kLidar, AgentKind::kBevFusion,
                      AgentKind::kCamera, AgentKind::kRadar}) {
    CHECK(agent_kind_from_string(to_string(k), "kind") == k);
  }
  CHECK_THROWS_AS(agent_kind_from_string("sonar", "kind"), SchemaError);
}

TEST_CASE("entity id grammar requires ID_<positive integer>") {
  CHECK(is_valid_entity_id("ID_1"));
  CHECK(is_valid_entity_id("ID_120"));
  CHECK_FALSE(is_valid_entity_id("ID_0"));
  CHECK_FALSE(is_valid_entity_id("ID_007"));
  CHECK_FALSE(is_valid_entity_id("id_3"));
  CHECK_FALSE(is_valid_entity_id("ID_"));
  CHECK_FALSE(is_valid_entity_id("ID_3x"));
}

TEST_CASE("fused entity serialization round trips byte for byte") {
  const FusedEntity e = valid_entity();
  const std::string once = canonical_dump(to_json(e));
  const FusedEntity back = fused_entity_from_json(to_json(e), "entity");
  CHECK(canonical_dump(to_json(back)) == once);
}

TEST_CASE("fused entity validation rejects each malformed field") {
  const std::string path = "entity";
  {
    FusedEntity e = valid_entity();
    e.entity_id = "ID_0";
    CHECK_THROWS_AS(validate(e, path), SchemaError);
  }
  {
    FusedEntity e = valid_entity();
    e.type = "spaceship";
    CHECK_THROWS_AS(validate(e, path), SchemaError);
  }
  {
    FusedEntity e = valid_entity();
    e.class_confidence = 1.5;
    CHECK_THROWS_AS(validate(e, path), SchemaError);
  }
  {
    FusedEntity e = valid_entity();
    e.position_cov << 1.0, 2.0, 2.0, 1.0;  // indefinite
    CHECK_THROWS_AS(validate(e, path), SchemaError);
  }
  {
    FusedEntity e = valid_entity();
    e.size.y() = 0.0;
    CHECK_THROWS_AS(validate(e, path), SchemaError);
  }
  {
    FusedEntity e = valid_entity();
    e.heading_rad = 4.0;
    CHECK_THROWS_AS(validate(e, path), SchemaError);
  }
  {
    FusedEntity e = valid_entity();
    e.sources.clear();
    CHECK_THROWS_AS(validate(e, path), SchemaError);
  }
  {
    FusedEntity e = valid_entity();
    e.ambiguity_flags.insert("made_up_flag");
    CHECK_THROWS_AS(validate(e, path), SchemaError);
  }
  CHECK_NOTHROW(validate(valid_entity(), path));
}

TEST_CASE("scene summary refreshes present and absent type lists") {
  SceneSummary s;
  s.scene_id = "scene_x";
  s.entities.push_back(valid_entity());
  refresh_entity_types(s);
  REQUIRE(s.entity_types_present == std::vector<std::string>{"car"});
  for (const std::string& cls : class_vocabulary()) {
    const bool present = cls == "car";
    const bool listed_absent =
        std::find(s.entity_types_absent.begin(), s.entity_types_absent.end(),
                  cls) != s.entity_types_absent.end();
    CHECK(listed_absent == !present);
  }
}

TEST_CASE("unknown keys in serialized forms are rejected") {
  Json j = to_json(valid_entity());
  j["surprise"] = 1;
  CHECK_THROWS_AS(fused_entity_from_json(j, "entity"), SchemaError);
}

TEST_CASE("decision serialization accepts the target id alias") {
  Decision d;
  d.recommended_action = "slow_down";
  d.confidence = 0.8;
  d.supporting_entity_ids = {"ID_2", "ID_5"};
  d.risk_summary = "Top risk: collision involving ID_2.";
  const Json j = to_json(d);
  CHECK(j.contains("supporting_entity_ids"));

  Json alias = j;
  alias["target_entity_ids"] = alias["supporting_entity_ids"];
  alias.erase("supporting_entity_ids");
  const Decision back = decision_from_json(alias, "decision");
  CHECK(back.supporting_entity_ids == d.supporting_entity_ids);

  Json both = j;
  both["target_entity_ids"] = j["supporting_entity_ids"];
  CHECK_THROWS_AS(decision_from_json(both, "decision"), SchemaError);
}

TEST_CASE("verdict maps PASS and FAIL onto the verdict kinds") {
  Verdict v;
  v.kind = VerdictKind::kMajor;
  v.comment = "bad claim";
  v.unsupported_or_conflicting_claims.push_back(
      {"claim text", "reason text", {"ID_9"}});
  const Verdict back = verdict_from_json(to_json(v), "verdict");
  CHECK(back.kind == VerdictKind::kMajor);
  REQUIRE(back.unsupported_or_conflicting_claims.size() == 1);
  CHECK(back.unsupported_or_conflicting_claims[0].entity_ids ==
        std::vector<std::string>{"ID_9"});

  Json pass;
  pass["verdict"] = "PASS";
  pass["unsupported_or_conflicting_claims"] = Json::array();
  pass["comment"] = "";
  CHECK(verdict_from_json(pass, "verdict").kind == VerdictKind::kConsistent);
  Json fail = pass;
  fail["verdict"] = "FAIL";
  CHECK(verdict_from_json(fail, "verdict").kind == VerdictKind::kMajor);
}

TEST_CASE("ground truth scene and bundle round trip") {
  GroundTruthScene g;
  g.scene_id = "scene_000042";
  g.timestamp_us = 1234567;
  g.rng_seed = 99;
  g.ego.speed_mps = 5.0;
  GtEntity e;
  e.gt_id = 1;
  e.type = "pedestrian";
  e.position_bev = {8.0, 0.5};
  e.velocity_bev = {-1.0, 0.0};
  e.size = {0.7, 0.7, 1.7};
  e.attributes = {"color:blue"};
  g.entities.push_back(e);
  const std::string once = canonical_dump(to_json(g));
  CHECK(canonical_dump(to_json(gt_scene_from_json(to_json(g), "gt"))) == once);

  SceneFactBundle b;
  b.scene_id = g.scene_id;
  b.timestamp_us = g.timestamp_us;
  b.ego_speed_mps = 5.0;
  AgentFactSet facts;
  facts.agent_kind = AgentKind::kLidar;
  facts.timestamp_us = g.timestamp_us;
  facts.source_lineage = {"lidar"};
  Detection3D det;
  det.local_id = 0;
  det.center_ego = {8.0, 0.5, 0.85};
  det.size = {0.7, 0.7, 1.7};
  det.class_probs = {{"pedestrian", 0.95}, {"car", 0.05}};
  det.confidence = 0.9;
  facts.detections_3d.push_back(det);
  facts.synopsis = "LiDAR reports 1 object.";
  b.agents.push_back(facts);
  const std::string bundle_once = canonical_dump(to_json(b));
  CHECK(canonical_dump(to_json(fact_bundle_from_json(to_json(b), "bundle"))) ==
        bundle_once);
}
