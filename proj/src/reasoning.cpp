#include "bevcoord/reasoning.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "bevcoord/errors.hpp"
#include "bevcoord/prompts.hpp"

namespace bevcoord {

namespace {

const Json& require_field(const Json& j, const std::string& key,
                          const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) {
    throw SchemaError(path + "." + key, "required field missing");
  }
  return *it;
}

double as_number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path, "expected a number");
  return j.get<double>();
}

std::string as_string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw SchemaError(path, "expected a string");
  return j.get<std::string>();
}

std::vector<std::string> string_list(const Json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected an array");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(as_string(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

// "unknown", null, or absent all mean a missing value.
bool is_unknown(const Json& j) {
  return j.is_null() || (j.is_string() && j.get<std::string>() == "unknown");
}

Json vec_or_unknown(const std::optional<Eigen::Vector2d>& v) {
  if (!v) return Json("unknown");
  return Json::array({v->x(), v->y()});
}

Json vec_or_unknown(const std::optional<Eigen::Vector3d>& v) {
  if (!v) return Json("unknown");
  return Json::array({v->x(), v->y(), v->z()});
}

Json num_or_unknown(const std::optional<double>& v) {
  if (!v) return Json("unknown");
  return Json(*v);
}

std::optional<Eigen::Vector2d> opt_vec2(const Json& j, const std::string& path) {
  if (is_unknown(j)) return std::nullopt;
  if (!j.is_array() || j.size() != 2) {
    throw SchemaError(path, "expected [x, y] or \"unknown\"");
  }
  return Eigen::Vector2d(as_number(j[0], path + "[0]"),
                         as_number(j[1], path + "[1]"));
}

std::optional<Eigen::Vector3d> opt_vec3(const Json& j, const std::string& path) {
  if (is_unknown(j)) return std::nullopt;
  if (!j.is_array() || j.size() != 3) {
    throw SchemaError(path, "expected [l, w, h] or \"unknown\"");
  }
  return Eigen::Vector3d(as_number(j[0], path + "[0]"),
                         as_number(j[1], path + "[1]"),
                         as_number(j[2], path + "[2]"));
}

std::optional<double> opt_number(const Json& j, const std::string& path) {
  if (is_unknown(j)) return std::nullopt;
  return as_number(j, path);
}

// Locates the first complete JSON value ({...} or [...]) in free text.
bool extract_first_json(const std::string& text, std::string& json_text,
                        std::string& rest) {
  const std::size_t start = text.find_first_of("{[");
  if (start == std::string::npos) return false;
  bool in_string = false;
  bool escaped = false;
  int depth = 0;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      ++depth;
    } else if (c == '}' || c == ']') {
      --depth;
      if (depth == 0) {
        json_text = text.substr(start, i - start + 1);
        rest = text.substr(i + 1);
        return true;
      }
    }
  }
  return false;
}

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

constexpr char kReaskSuffix[] =
    "Your previous reply could not be parsed. Reply again following the "
    "required output schema exactly, with the JSON payload first.";

}  // namespace

// ---------------------------------------------------------------------------
// M / L_risk serialization
// ---------------------------------------------------------------------------

Json to_json(const IntermediateRep& rep) {
  Json entities = Json::array();
  for (const auto& e : rep.entities) {
    Json je;
    je["id"] = e.id;
    je["type"] = e.type;
    je["position_bev_m"] = vec_or_unknown(e.position_bev);
    je["velocity_bev_mps"] = vec_or_unknown(e.velocity_bev);
    je["size_m"] = vec_or_unknown(e.size);
    je["heading_rad"] = num_or_unknown(e.heading_rad);
    je["confidence"] = num_or_unknown(e.confidence);
    je["sources"] = Json(e.sources);
    je["semantic_attributes"] = Json(e.semantic_attributes);
    je["flags"] = Json(e.flags);
    entities.push_back(std::move(je));
  }
  Json relations = Json::array();
  for (const auto& r : rep.relations) {
    Json jr;
    jr["subject"] = r.subject;
    jr["relation"] = r.relation;
    jr["object"] = r.object;
    jr["evidence"] = r.evidence;
    relations.push_back(std::move(jr));
  }
  Json j;
  j["entities"] = std::move(entities);
  j["relations"] = std::move(relations);
  return j;
}

IntermediateRep intermediate_rep_from_json(const Json& j,
                                           const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "entities" && it.key() != "relations") {
      throw SchemaError(path + "." + it.key(), "unknown field");
    }
  }
  IntermediateRep rep;
  const Json& entities = require_field(j, "entities", path);
  if (!entities.is_array()) {
    throw SchemaError(path + ".entities", "expected an array");
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    const std::string ep = path + ".entities[" + std::to_string(i) + "]";
    const Json& je = entities[i];
    MEntity e;
    e.id = as_string(require_field(je, "id", ep), ep + ".id");
    e.type = as_string(require_field(je, "type", ep), ep + ".type");
    if (je.contains("position_bev_m")) {
      e.position_bev = opt_vec2(je["position_bev_m"], ep + ".position_bev_m");
    }
    if (je.contains("velocity_bev_mps")) {
      e.velocity_bev = opt_vec2(je["velocity_bev_mps"], ep + ".velocity_bev_mps");
    }
    if (je.contains("size_m")) e.size = opt_vec3(je["size_m"], ep + ".size_m");
    if (je.contains("heading_rad")) {
      e.heading_rad = opt_number(je["heading_rad"], ep + ".heading_rad");
    }
    if (je.contains("confidence")) {
      e.confidence = opt_number(je["confidence"], ep + ".confidence");
    }
    if (je.contains("sources")) {
      e.sources = string_list(je["sources"], ep + ".sources");
    }
    if (je.contains("semantic_attributes")) {
      e.semantic_attributes =
          string_list(je["semantic_attributes"], ep + ".semantic_attributes");
    }
    if (je.contains("flags")) e.flags = string_list(je["flags"], ep + ".flags");
    if (!ids.insert(e.id).second) {
      throw SchemaError(ep + ".id", "duplicate entity id '" + e.id + "'");
    }
    rep.entities.push_back(std::move(e));
  }
  if (j.contains("relations")) {
    const Json& relations = j["relations"];
    if (!relations.is_array()) {
      throw SchemaError(path + ".relations", "expected an array");
    }
    const auto& vocab = relation_vocabulary();
    for (std::size_t i = 0; i < relations.size(); ++i) {
      const std::string rp = path + ".relations[" + std::to_string(i) + "]";
      const Json& jr = relations[i];
      MRelation r;
      r.subject = as_string(require_field(jr, "subject", rp), rp + ".subject");
      r.relation = as_string(require_field(jr, "relation", rp), rp + ".relation");
      r.object = as_string(require_field(jr, "object", rp), rp + ".object");
      if (jr.contains("evidence")) {
        r.evidence = as_string(jr["evidence"], rp + ".evidence");
      }
      if (std::find(vocab.begin(), vocab.end(), r.relation) == vocab.end()) {
        throw SchemaError(rp + ".relation", "unknown relation '" + r.relation + "'");
      }
      if (!ids.count(r.subject)) {
        throw SchemaError(rp + ".subject", "relation references unknown id");
      }
      if (!ids.count(r.object)) {
        throw SchemaError(rp + ".object", "relation references unknown id");
      }
      rep.relations.push_back(std::move(r));
    }
  }
  return rep;
}

Json to_json(const RiskList& risks) {
  Json j = Json::array();
  for (const auto& r : risks) j.push_back(to_json(r));
  return j;
}

RiskList risk_list_from_json(const Json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected an array");
  RiskList out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(risk_item_from_json(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config / trace serialization
// ---------------------------------------------------------------------------

SsreConfig ssre_config_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  SsreConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string p = path + "." + it.key();
    if (it.key() == "k_max") {
      cfg.k_max = static_cast<int>(as_number(*it, p));
    } else if (it.key() == "gamma") {
      cfg.gamma = as_number(*it, p);
    } else if (it.key() == "backend") {
      cfg.backend = as_string(*it, p);
    } else if (it.key() == "timeout_s") {
      cfg.timeout_s = as_number(*it, p);
    } else if (it.key() == "temperature_parse") {
      cfg.temperature_parse = as_number(*it, p);
    } else if (it.key() == "temperature_reason") {
      cfg.temperature_reason = as_number(*it, p);
    } else {
      throw SchemaError(p, "unknown field");
    }
  }
  if (cfg.k_max < 1 || cfg.k_max > 100) {
    throw SchemaError(path + ".k_max", "must be in 1..100");
  }
  if (cfg.gamma < 0.0 || cfg.gamma > 1.0) {
    throw SchemaError(path + ".gamma", "must be in [0,1]");
  }
  if (!(cfg.timeout_s > 0.0)) {
    throw SchemaError(path + ".timeout_s", "must be > 0");
  }
  return cfg;
}

Json to_json(const SsreConfig& cfg) {
  Json j;
  j["k_max"] = cfg.k_max;
  j["gamma"] = cfg.gamma;
  j["backend"] = cfg.backend;
  j["timeout_s"] = cfg.timeout_s;
  j["temperature_parse"] = cfg.temperature_parse;
  j["temperature_reason"] = cfg.temperature_reason;
  return j;
}

Json to_json(const TraceRecord& record) {
  Json j;
  j["call_index"] = record.call_index;
  j["stage"] = record.stage;
  j["template"] = record.template_name;
  j["prompt"] = record.prompt;
  j["response"] = record.response;
  j["verdict"] = record.verdict ? Json(*record.verdict) : Json(nullptr);
  j["note"] = record.note ? Json(*record.note) : Json(nullptr);
  return j;
}

Json to_json(const SsreResult& result) {
  Json j;
  j["decision"] = to_json(result.decision);
  j["justification"] = result.justification;
  j["verified"] = result.verified;
  j["rounds"] = result.rounds;
  j["backend_calls"] = static_cast<int>(result.trace.size());
  j["evidence"] = result.evidence;
  return j;
}

// ---------------------------------------------------------------------------
// Grounding
// ---------------------------------------------------------------------------

std::vector<std::string> extract_entity_ids(const std::string& text) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t p = text.find("ID_", i);
    if (p == std::string::npos) break;
    std::size_t q = p + 3;
    while (q < text.size() && std::isdigit(static_cast<unsigned char>(text[q]))) {
      ++q;
    }
    if (q > p + 3) {
      std::string token = text.substr(p, q - p);
      if (seen.insert(token).second) out.push_back(std::move(token));
      i = q;
    } else {
      i = p + 3;
    }
  }
  return out;
}

std::vector<GroundingViolation> validate_grounding(
    const Decision& decision, const std::string& justification,
    const SceneSummary& summary) {
  std::set<std::string> known;
  for (const auto& e : summary.entities) known.insert(e.entity_id);
  std::vector<GroundingViolation> out;
  for (const auto& id : decision.supporting_entity_ids) {
    if (!known.count(id)) out.push_back({id, "supporting_entity_ids"});
  }
  for (const auto& id : extract_entity_ids(justification)) {
    if (!known.count(id)) out.push_back({id, "justification"});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

namespace {

struct Draft {
  Decision decision;
  std::string justification;
};

class Engine {
 public:
  Engine(const SceneSummary& summary, const SsreConfig& config,
         Backend& backend, SsreResult& result)
      : summary_(summary), config_(config), backend_(backend), result_(result) {}

  std::string invoke(const std::string& stage, const std::string& template_name,
                     const std::string& prompt, double temperature,
                     const std::optional<std::string>& note) {
    BackendRequest request{stage, template_name, prompt, temperature};
    std::string response = backend_.complete(request);
    TraceRecord record;
    record.call_index = static_cast<int>(result_.trace.size()) + 1;
    record.stage = stage;
    record.template_name = template_name;
    record.prompt = prompt;
    record.response = response;
    record.note = note;
    result_.trace.push_back(std::move(record));
    return response;
  }

  // One re-ask on malformed output; a second failure propagates SchemaError
  // to the caller, which decides between abort and Major.
  template <typename Parser>
  auto call(const std::string& stage, const std::string& template_name,
            const std::string& prompt, double temperature, Parser&& parse) {
    std::string response = invoke(stage, template_name, prompt, temperature,
                                  std::nullopt);
    try {
      return parse(response);
    } catch (const SchemaError&) {
      response = invoke(stage, template_name,
                        prompt + "\n" + kReaskSuffix, temperature,
                        "re-ask after malformed response");
      return parse(response);
    }
  }

  IntermediateRep parse_rep(const std::string& response) const {
    std::string json_text;
    std::string rest;
    if (!extract_first_json(response, json_text, rest)) {
      throw SchemaError("ssp.response", "no JSON value found");
    }
    IntermediateRep rep = intermediate_rep_from_json(
        parse_json(json_text, "ssp.response"), "ssp.response");
    std::set<std::string> known;
    for (const auto& e : summary_.entities) known.insert(e.entity_id);
    for (const auto& e : rep.entities) {
      if (!known.count(e.id)) {
        throw SchemaError("ssp.response",
                          "entity '" + e.id + "' absent from the scene summary");
      }
    }
    return rep;
  }

  RiskList parse_risks(const std::string& response,
                       const IntermediateRep& rep) const {
    std::string json_text;
    std::string rest;
    if (!extract_first_json(response, json_text, rest)) {
      throw SchemaError("sra.response", "no JSON value found");
    }
    RiskList risks = risk_list_from_json(parse_json(json_text, "sra.response"),
                                         "sra.response");
    std::set<std::string> known;
    for (const auto& e : rep.entities) known.insert(e.id);
    for (const auto& r : risks) {
      for (const auto& id : r.involved_entity_ids) {
        if (!known.count(id)) {
          throw SchemaError("sra.response",
                            "risk cites '" + id + "' absent from M");
        }
      }
    }
    // Priority order is part of the risk-list contract; restore it locally
    // instead of failing a backend that scrambled the order.
    std::stable_sort(risks.begin(), risks.end(),
                     [](const RiskItem& a, const RiskItem& b) {
                       if (a.severity != b.severity) return a.severity > b.severity;
                       return a.urgency > b.urgency;
                     });
    return risks;
  }

  static Draft parse_draft(const std::string& response, const std::string& stage) {
    std::string json_text;
    std::string rest;
    if (!extract_first_json(response, json_text, rest)) {
      throw SchemaError(stage + ".response", "no JSON value found");
    }
    Draft draft;
    draft.decision = decision_from_json(parse_json(json_text, stage + ".response"),
                                        stage + ".response");
    draft.justification = trim(rest);
    return draft;
  }

  static Verdict parse_verdict(const std::string& response) {
    std::string json_text;
    std::string rest;
    if (!extract_first_json(response, json_text, rest)) {
      throw SchemaError("ivl_verify.response", "no JSON value found");
    }
    return verdict_from_json(parse_json(json_text, "ivl_verify.response"),
                             "ivl_verify.response");
  }

  const SceneSummary& summary_;
  const SsreConfig& config_;
  Backend& backend_;
  SsreResult& result_;
};

}  // namespace

SsreResult run_ssre(const SceneSummary& summary, const std::string& query,
                    const std::optional<std::string>& aux,
                    const SsreConfig& config, Backend& backend) {
  SsreResult result;
  Engine engine(summary, config, backend, result);
  const std::string s_json = canonical_dump(to_json(summary));

  // Stage 1: structured scene parsing.
  IntermediateRep rep;
  try {
    rep = engine.call(
        "ssp", "T_parse", render_prompt("T_parse", {{"S", s_json}}),
        config.temperature_parse,
        [&](const std::string& r) { return engine.parse_rep(r); });
  } catch (const SchemaError& e) {
    throw TransportError(std::string("backend returned malformed parse output "
                                     "after retry: ") + e.what());
  }
  const std::string m_json = canonical_dump(to_json(rep));

  // Stage 2: systematic risk assessment.
  RiskList risks;
  try {
    risks = engine.call(
        "sra", "T_risk", render_prompt("T_risk", {{"M", m_json}}),
        config.temperature_parse,
        [&](const std::string& r) { return engine.parse_risks(r, rep); });
  } catch (const SchemaError& e) {
    throw TransportError(std::string("backend returned malformed risk output "
                                     "after retry: ") + e.what());
  }
  const std::string risks_json = canonical_dump(to_json(risks));

  // Stage 3: draft decision + justification.
  Draft draft;
  const std::map<std::string, std::string> reason_slots = {
      {"Q", query},
      {"M", m_json},
      {"L_risk", risks_json},
      {"A", aux.value_or("(none)")}};
  try {
    draft = engine.call(
        "vrcg", "T_reason", render_prompt("T_reason", reason_slots),
        config.temperature_reason,
        [&](const std::string& r) { return Engine::parse_draft(r, "vrcg"); });
  } catch (const SchemaError& e) {
    throw TransportError(std::string("backend returned malformed draft output "
                                     "after retry: ") + e.what());
  }

  // Stage 4: bounded verify/revise loop. Exits only on a Consistent verdict.
  Json ivl_checks = Json::array();
  bool verified = false;
  for (int k = 1; k <= config.k_max; ++k) {
    result.rounds = k;
    const std::string d_json = canonical_dump(to_json(draft.decision));
    Verdict verdict;
    try {
      verdict = engine.call(
          "ivl_verify", "T_verify",
          render_prompt("T_verify", {{"S", s_json},
                                     {"D_draft", d_json},
                                     {"N_draft", draft.justification}}),
          config.temperature_parse,
          [&](const std::string& r) { return Engine::parse_verdict(r); });
    } catch (const SchemaError&) {
      verdict.kind = VerdictKind::kMajor;
      verdict.unsupported_or_conflicting_claims.push_back(
          {"verifier output unparseable", "malformed response after re-ask", {}});
      verdict.comment = "verifier response malformed; treated as Major";
    }

    // Hard local check: an ungrounded id forces Major even if the backend
    // verifier passed the draft.
    const std::vector<GroundingViolation> violations =
        validate_grounding(draft.decision, draft.justification, summary);
    if (!violations.empty()) {
      std::set<std::string> claimed;
      for (const auto& claim : verdict.unsupported_or_conflicting_claims) {
        for (const auto& id : claim.entity_ids) claimed.insert(id);
      }
      for (const auto& violation : violations) {
        if (!claimed.count(violation.id)) {
          verdict.unsupported_or_conflicting_claims.push_back(
              {"(" + violation.id + ") cited in " + violation.where,
               "entity id not present in the scene summary",
               {violation.id}});
          claimed.insert(violation.id);
        }
      }
      if (verdict.kind == VerdictKind::kConsistent) {
        verdict.kind = VerdictKind::kMajor;
        verdict.comment = "local grounding check failed";
      }
    }
    result.trace.back().verdict = to_string(verdict.kind);

    Json check;
    check["round"] = k;
    check["verdict"] = to_string(verdict.kind);
    check["claims"] =
        static_cast<int>(verdict.unsupported_or_conflicting_claims.size());
    check["local_violations"] = static_cast<int>(violations.size());
    ivl_checks.push_back(std::move(check));

    if (verdict.kind == VerdictKind::kConsistent) {
      verified = true;
      break;
    }

    const std::string v_json = canonical_dump(to_json(verdict));
    try {
      draft = engine.call(
          "ivl_revise", "T_revision",
          render_prompt("T_revision", {{"M", m_json},
                                       {"L_risk", risks_json},
                                       {"Q", query},
                                       {"D_draft", d_json},
                                       {"N_draft", draft.justification},
                                       {"V", v_json}}),
          config.temperature_reason,
          [&](const std::string& r) {
            return Engine::parse_draft(r, "ivl_revise");
          });
    } catch (const SchemaError& e) {
      throw TransportError(std::string("backend returned malformed revision "
                                       "output after retry: ") + e.what());
    }
  }

  result.decision = std::move(draft.decision);
  result.justification = std::move(draft.justification);
  result.verified = verified;
  if (!verified) {
    result.decision.confidence = config.gamma * result.decision.confidence;
    if (std::find(result.decision.flags.begin(), result.decision.flags.end(),
                  "unverified_after_k_max") == result.decision.flags.end()) {
      result.decision.flags.push_back("unverified_after_k_max");
    }
  }

  Json sra_top = Json::array();
  for (std::size_t i = 0; i < risks.size() && i < 3; ++i) {
    Json item;
    item["risk"] = risks[i].risk_type;
    item["entity_ids"] = Json(risks[i].involved_entity_ids);
    item["severity"] = risks[i].severity;
    sra_top.push_back(std::move(item));
  }
  result.evidence = Json::object();
  result.evidence["sra_top_risks"] = std::move(sra_top);
  result.evidence["ivl_check"] = std::move(ivl_checks);
  const auto& constraints = result.decision.constraints;
  if (std::find(constraints.begin(), constraints.end(),
                "reject_premise_keep_lane_observe") != constraints.end()) {
    Json premise;
    premise["supported"] = false;
    premise["resolution"] = "reject_premise_keep_lane_observe";
    result.evidence["premise_check"] = std::move(premise);
  }
  return result;
}

}  // namespace bevcoord
