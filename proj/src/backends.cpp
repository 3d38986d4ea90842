#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "bevcoord/errors.hpp"
#include "bevcoord/json_io.hpp"
#include "bevcoord/qa.hpp"
#include "bevcoord/reasoning.hpp"
#include "bevcoord/stats.hpp"
#include "bevcoord/types.hpp"

// httplib defines short macros that collide with Eigen internals; keep it
// after every Eigen-bearing include.
#include <httplib.h>

namespace bevcoord {

namespace {

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

// Data blocks are embedded in prompts as "\n<label>:\n<payload>\n\n". Payloads
// written by the engine are single-line (canonical JSON or one-line text).
std::string slot_block(const std::string& prompt, const std::string& label) {
  const std::string needle = "\n" + label + ":\n";
  const std::size_t p = prompt.find(needle);
  if (p == std::string::npos) {
    throw InternalError("oracle backend: prompt lacks block '" + label + "'");
  }
  const std::size_t start = p + needle.size();
  std::size_t end = prompt.find("\n\n", start);
  if (end == std::string::npos) end = prompt.size();
  return prompt.substr(start, end - start);
}

std::string fmt(double v) { return canonical_number(v); }

bool contains_word(const std::string& haystack_lower, const std::string& word) {
  std::size_t p = 0;
  while ((p = haystack_lower.find(word, p)) != std::string::npos) {
    const bool left_ok =
        p == 0 || !std::isalnum(static_cast<unsigned char>(haystack_lower[p - 1]));
    std::size_t e = p + word.size();
    if (e < haystack_lower.size() && haystack_lower[e] == 's') ++e;  // plural
    const bool right_ok =
        e >= haystack_lower.size() ||
        !std::isalnum(static_cast<unsigned char>(haystack_lower[e]));
    if (left_ok && right_ok) return true;
    p += 1;
  }
  return false;
}

std::string to_lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// One "(ID_n) key=value ..." claim segment of a justification.
struct ClaimToken {
  std::string id;
  std::string key;
  std::string value;
};

std::vector<ClaimToken> parse_claim_tokens(const std::string& text) {
  std::vector<ClaimToken> tokens;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = text.find("(ID_", pos);
    if (open == std::string::npos) break;
    const std::size_t close = text.find(')', open);
    if (close == std::string::npos) break;
    const std::string id = text.substr(open + 1, close - open - 1);
    std::size_t end = text.find("(ID_", close);
    if (end == std::string::npos) end = text.size();
    std::istringstream segment(text.substr(close + 1, end - close - 1));
    std::string token;
    while (segment >> token) {
      const std::size_t eq = token.find('=');
      if (eq == std::string::npos) continue;
      std::string key = token.substr(0, eq);
      std::string value = token.substr(eq + 1);
      while (!value.empty() && (value.back() == '.' || value.back() == ',' ||
                                value.back() == ';' || value.back() == ')')) {
        value.pop_back();
      }
      tokens.push_back({id, std::move(key), std::move(value)});
    }
    pos = end;
  }
  return tokens;
}

// Strips a trailing unit and parses the number; nullopt when not numeric.
std::optional<double> parse_quantity(const std::string& value) {
  std::string body = value;
  if (body.size() > 3 && body.compare(body.size() - 3, 3, "mps") == 0) {
    body.resize(body.size() - 3);
  } else if (body.size() > 1 && (body.back() == 'm' || body.back() == 's')) {
    body.resize(body.size() - 1);
  }
  char* end = nullptr;
  const double parsed = std::strtod(body.c_str(), &end);
  if (end == body.c_str() || *end != '\0') return std::nullopt;
  return parsed;
}

// ---------------------------------------------------------------------------
// Oracle backend
// ---------------------------------------------------------------------------

class OracleBackend final : public Backend {
 public:
  std::string name() const override { return "oracle"; }

  std::string complete(const BackendRequest& request) override {
    if (request.template_name == "T_parse") return do_parse(request.prompt);
    if (request.template_name == "T_risk") return do_risk(request.prompt);
    if (request.template_name == "T_reason") return do_reason(request.prompt);
    if (request.template_name == "T_verify") return do_verify(request.prompt);
    if (request.template_name == "T_revision") return do_revise(request.prompt);
    throw InternalError("oracle backend: unknown template '" +
                        request.template_name + "'");
  }

 private:
  const QaConfig qa_;  // same kinematic doctrine as the QA generator

  static std::string dump_draft(const Decision& decision,
                                const std::string& justification) {
    return canonical_dump(to_json(decision)) + "\n" + justification;
  }

  std::string do_parse(const std::string& prompt) const {
    const SceneSummary summary = scene_summary_from_json(
        parse_json(slot_block(prompt, "S"), "oracle.S"), "oracle.S");
    IntermediateRep rep;
    for (const auto& entity : summary.entities) {
      MEntity m;
      m.id = entity.entity_id;
      m.type = entity.type;
      m.position_bev = entity.position_bev;
      m.velocity_bev = entity.velocity_bev;
      m.size = entity.size;
      m.heading_rad = entity.heading_rad;
      m.confidence = entity.class_confidence;
      m.sources = entity.sources;
      m.semantic_attributes = entity.semantic_attributes;
      m.flags.assign(entity.ambiguity_flags.begin(), entity.ambiguity_flags.end());
      if (entity.conflict_resolved) m.flags.push_back("conflict_resolved");
      rep.entities.push_back(std::move(m));
    }
    // Derived relations for nearby pairs: direction in the subject's frame,
    // range, and whether the gap is closing.
    for (std::size_t i = 0; i < summary.entities.size(); ++i) {
      for (std::size_t j = 0; j < summary.entities.size(); ++j) {
        if (i == j) continue;
        const auto& a = summary.entities[i];
        const auto& b = summary.entities[j];
        const Eigen::Vector2d delta = b.position_bev - a.position_bev;
        const double distance = delta.norm();
        if (distance > qa_.near_max_m) continue;
        const std::string evidence = "distance=" + fmt(distance) + "m";
        rep.relations.push_back({a.entity_id, "near", b.entity_id, evidence});
        const KinematicState subject{a.position_bev,
                                     a.velocity_bev.value_or(Eigen::Vector2d::Zero()),
                                     a.heading_rad, a.type};
        const KinematicState object{b.position_bev,
                                    b.velocity_bev.value_or(Eigen::Vector2d::Zero()),
                                    b.heading_rad, b.type};
        for (const auto& [token, label] :
             std::vector<std::pair<std::string, std::string>>{
                 {"front", "ahead_of"},
                 {"behind", "behind_of"},
                 {"left", "left_of"},
                 {"right", "right_of"}}) {
          if (relation_holds(subject, object, token, qa_)) {
            rep.relations.push_back({a.entity_id, label, b.entity_id, evidence});
          }
        }
        if (a.velocity_bev && b.velocity_bev && distance > 1e-9) {
          const Eigen::Vector2d dv = *b.velocity_bev - *a.velocity_bev;
          const double closing = -delta.dot(dv) / distance;
          if (closing > 0.1) {
            rep.relations.push_back(
                {a.entity_id, "approaching", b.entity_id,
                 "closing_speed=" + fmt(closing) + "mps"});
          } else if (closing < -0.1) {
            rep.relations.push_back(
                {a.entity_id, "moving_away", b.entity_id,
                 "closing_speed=" + fmt(closing) + "mps"});
          }
        }
      }
    }
    return canonical_dump(to_json(rep));
  }

  std::string do_risk(const std::string& prompt) const {
    const IntermediateRep rep = intermediate_rep_from_json(
        parse_json(slot_block(prompt, "M"), "oracle.M"), "oracle.M");
    RiskList risks;
    for (const auto& entity : rep.entities) {
      if (!entity.position_bev || !entity.velocity_bev) continue;
      const KinematicState target{*entity.position_bev, *entity.velocity_bev,
                                  entity.heading_rad.value_or(0.0), entity.type};
      const RiskAnswer risk =
          collision_risk(target, qa_.horizon_s, qa_.ttc_threshold_s);
      if (!risk.risky) continue;
      RiskItem item;
      if (entity.type == "pedestrian") {
        item.risk_type = "pedestrian_crossing";
      } else if (entity.position_bev->x() < 0.0) {
        item.risk_type = "rear_end";
      } else {
        item.risk_type = "collision";
      }
      item.involved_entity_ids = {entity.id};
      item.severity = risk.ttc_s < 1.5 ? 5 : (risk.ttc_s < 2.5 ? 4 : 3);
      item.urgency = risk.ttc_s < 1.0 ? 5 : (risk.ttc_s < 2.0 ? 4 : 3);
      item.confidence = 0.9;
      item.evidence = "(" + entity.id + ") distance=" + fmt(risk.distance_m) +
                      "m closing_speed=" + fmt(risk.closing_speed_mps) +
                      "mps ttc=" + fmt(risk.ttc_s) + "s";
      risks.push_back(std::move(item));
    }
    std::stable_sort(risks.begin(), risks.end(),
                     [](const RiskItem& a, const RiskItem& b) {
                       if (a.severity != b.severity) return a.severity > b.severity;
                       return a.urgency > b.urgency;
                     });
    return canonical_dump(to_json(risks));
  }

  // Rule decision over M: reject unsupported premises, otherwise apply the
  // kinematic decision ladder and cite every entity that motivated it.
  std::string decide(const IntermediateRep& rep, const RiskList& risks,
                     const std::string& query) const {
    const std::string query_lower = to_lower(query);
    for (const auto& cls : class_vocabulary()) {
      if (!contains_word(query_lower, cls)) continue;
      const bool present =
          std::any_of(rep.entities.begin(), rep.entities.end(),
                      [&](const MEntity& e) { return e.type == cls; });
      if (present) continue;
      Decision decision;
      decision.recommended_action = "keep_lane";
      decision.confidence = 0.8;
      decision.risk_summary =
          "Premise not supported: the scene summary contains no " + cls +
          " entity.";
      decision.constraints = {"reject_premise_keep_lane_observe",
                              "entity_types_absent:" + cls};
      const std::string justification =
          "Premise not supported by the consistent world model: no " + cls +
          " entity is present in the scene summary (entity_types_absent "
          "includes '" + cls + "'). Keep lane and continue observing.";
      return dump_draft(decision, justification);
    }

    std::vector<KinematicState> states;
    std::vector<const MEntity*> tracked;
    for (const auto& entity : rep.entities) {
      if (!entity.position_bev) continue;
      states.push_back({*entity.position_bev,
                        entity.velocity_bev.value_or(Eigen::Vector2d::Zero()),
                        entity.heading_rad.value_or(0.0), entity.type});
      tracked.push_back(&entity);
    }
    const char label = decision_label(states, qa_);
    Decision decision;
    switch (label) {
      case 'A': decision.recommended_action = "keep_lane"; break;
      case 'B': decision.recommended_action = "slow_down"; break;
      case 'C': decision.recommended_action = "stop"; break;
      case 'D': decision.recommended_action = "change_lane_left"; break;
      case 'E': decision.recommended_action = "change_lane_right"; break;
      default: throw InternalError("oracle backend: unknown ladder label");
    }
    decision.confidence = 0.8;

    std::vector<std::string> segments;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const KinematicState& state = states[i];
      const RiskAnswer risk =
          collision_risk(state, qa_.horizon_s, qa_.ttc_threshold_s);
      const bool lead = state.position.x() > 0.0 &&
                        state.position.x() <= qa_.blocked_range_m &&
                        std::abs(state.position.y()) <= qa_.lane_halfwidth_m;
      if (risk.ttc_s >= qa_.ttc_threshold_s && !lead) continue;
      decision.supporting_entity_ids.push_back(tracked[i]->id);
      std::string segment = "(" + tracked[i]->id + ") type=" + state.type +
                            " distance=" + fmt(risk.distance_m) + "m";
      if (tracked[i]->velocity_bev) {
        segment += " closing_speed=" + fmt(risk.closing_speed_mps) + "mps";
        if (std::isfinite(risk.ttc_s)) {
          segment += " ttc=" + fmt(risk.ttc_s) + "s";
        }
      }
      segments.push_back(std::move(segment));
    }

    if (risks.empty()) {
      decision.risk_summary = "No salient risks identified.";
    } else {
      decision.risk_summary =
          "Top risk: " + risks.front().risk_type + " involving " +
          join(risks.front().involved_entity_ids, ", ") + ".";
    }
    if (rep.entities.empty()) {
      decision.constraints.push_back("no_entities_in_scene");
    }

    std::string justification;
    if (segments.empty()) {
      justification =
          "Maintaining lane: no tracked entity poses an imminent risk within "
          "the monitored horizon.";
    } else {
      justification = "Recommended action " + decision.recommended_action +
                      ". " + join(segments, "; ") + ".";
    }
    return dump_draft(decision, justification);
  }

  std::string do_reason(const std::string& prompt) const {
    const IntermediateRep rep = intermediate_rep_from_json(
        parse_json(slot_block(prompt, "M"), "oracle.M"), "oracle.M");
    const RiskList risks = risk_list_from_json(
        parse_json(slot_block(prompt, "L_risk"), "oracle.L_risk"),
        "oracle.L_risk");
    const std::string query = slot_block(prompt, "Q");
    return decide(rep, risks, query);
  }

  std::string do_verify(const std::string& prompt) const {
    const SceneSummary summary = scene_summary_from_json(
        parse_json(slot_block(prompt, "S"), "oracle.S"), "oracle.S");
    const Decision draft = decision_from_json(
        parse_json(slot_block(prompt, "D_draft"), "oracle.D_draft"),
        "oracle.D_draft");
    const std::string justification = slot_block(prompt, "N_draft");

    std::map<std::string, const FusedEntity*> by_id;
    for (const auto& entity : summary.entities) by_id[entity.entity_id] = &entity;

    Verdict verdict;
    verdict.kind = VerdictKind::kConsistent;
    auto add_claim = [&](const std::string& claim, const std::string& reason,
                         const std::vector<std::string>& ids) {
      verdict.unsupported_or_conflicting_claims.push_back({claim, reason, ids});
    };

    for (const auto& id : draft.supporting_entity_ids) {
      if (!by_id.count(id)) {
        add_claim("(" + id + ") cited in supporting_entity_ids",
                  "entity id not present in S", {id});
      }
    }
    for (const auto& id : extract_entity_ids(justification)) {
      if (!by_id.count(id)) {
        add_claim("(" + id + ") cited in the justification",
                  "entity id not present in S", {id});
      }
    }

    constexpr double kRelTol = 1e-6;
    auto matches = [&](double stated, double recomputed) {
      return std::abs(stated - recomputed) <=
             kRelTol * std::max(1.0, std::abs(recomputed));
    };
    for (const auto& token : parse_claim_tokens(justification)) {
      const auto it = by_id.find(token.id);
      if (it == by_id.end()) continue;  // already claimed as ungrounded
      const FusedEntity& entity = *it->second;
      const std::string described =
          "(" + token.id + ") " + token.key + "=" + token.value;
      if (token.key == "type") {
        if (token.value != entity.type) {
          add_claim(described, "type contradicts S (" + entity.type + ")",
                    {token.id});
        }
        continue;
      }
      const std::optional<double> stated = parse_quantity(token.value);
      if (!stated) {
        add_claim(described, "value is not numeric", {token.id});
        continue;
      }
      const double distance = entity.position_bev.norm();
      if (token.key == "distance") {
        if (!matches(*stated, distance)) {
          add_claim(described,
                    "distance contradicts S (" + fmt(distance) + "m)",
                    {token.id});
        }
      } else if (token.key == "speed" || token.key == "closing_speed" ||
                 token.key == "ttc") {
        if (!entity.velocity_bev) {
          add_claim(described, "S declares no velocity for this entity",
                    {token.id});
          continue;
        }
        const Eigen::Vector2d v = *entity.velocity_bev;
        if (token.key == "speed") {
          if (!matches(*stated, v.norm())) {
            add_claim(described, "speed contradicts S (" + fmt(v.norm()) + "mps)",
                      {token.id});
          }
          continue;
        }
        const double closing = distance > 1e-9
                                   ? -entity.position_bev.dot(v) / distance
                                   : v.norm();
        if (token.key == "closing_speed") {
          if (!matches(*stated, closing)) {
            add_claim(described,
                      "closing speed contradicts S (" + fmt(closing) + "mps)",
                      {token.id});
          }
        } else if (closing <= 0.0) {
          add_claim(described, "S implies the gap is not closing", {token.id});
        } else if (!matches(*stated, distance / closing)) {
          add_claim(described,
                    "ttc contradicts S (" + fmt(distance / closing) + "s)",
                    {token.id});
        }
      } else {
        add_claim(described, "claim key cannot be verified from S", {token.id});
      }
    }

    if (!verdict.unsupported_or_conflicting_claims.empty()) {
      verdict.kind = VerdictKind::kMajor;
      verdict.comment = "Remove or correct the listed claims.";
    } else {
      verdict.comment = "All claims grounded and consistent with S.";
    }
    // Emitted in the verifier-prompt vocabulary; the engine reconciles
    // PASS -> Consistent and FAIL -> Major.
    Json j = to_json(verdict);
    j["verdict"] = verdict.kind == VerdictKind::kConsistent ? "PASS" : "FAIL";
    return canonical_dump(j);
  }

  std::string do_revise(const std::string& prompt) const {
    const IntermediateRep rep = intermediate_rep_from_json(
        parse_json(slot_block(prompt, "M"), "oracle.M"), "oracle.M");
    const RiskList risks = risk_list_from_json(
        parse_json(slot_block(prompt, "L_risk"), "oracle.L_risk"),
        "oracle.L_risk");
    const std::string query = slot_block(prompt, "Q");
    Decision draft = decision_from_json(
        parse_json(slot_block(prompt, "D_draft"), "oracle.D_draft"),
        "oracle.D_draft");
    std::string justification = slot_block(prompt, "N_draft");
    const Verdict verdict = verdict_from_json(
        parse_json(slot_block(prompt, "V"), "oracle.V"), "oracle.V");

    std::set<std::string> flagged;
    for (const auto& claim : verdict.unsupported_or_conflicting_claims) {
      for (const auto& id : claim.entity_ids) flagged.insert(id);
      for (const auto& id : extract_entity_ids(claim.claim)) flagged.insert(id);
    }
    if (flagged.empty()) {
      // Nothing concrete to strip; return the draft unchanged and let the
      // loop run its course.
      return dump_draft(draft, justification);
    }

    // Strip flagged citations from the id list and the justification.
    std::erase_if(draft.supporting_entity_ids,
                  [&](const std::string& id) { return flagged.count(id) > 0; });
    std::vector<std::string> kept;
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= justification.size()) {
      const std::size_t sep = justification.find("; ", start);
      if (sep == std::string::npos) {
        parts.push_back(justification.substr(start));
        break;
      }
      parts.push_back(justification.substr(start, sep - start));
      start = sep + 2;
    }
    for (const auto& segment : parts) {
      bool drop = false;
      for (const auto& id : extract_entity_ids(segment)) {
        if (flagged.count(id)) {
          drop = true;
          break;
        }
      }
      if (!drop) kept.push_back(segment);
    }
    justification = join(kept, "; ");

    // Downgrade only when the flagged claims were the action's support: with
    // no cited entities left, recompute the decision from M.
    if (draft.supporting_entity_ids.empty() &&
        draft.recommended_action != "keep_lane") {
      return decide(rep, risks, query);
    }
    if (justification.empty()) {
      justification =
          "Maintaining lane: no tracked entity poses an imminent risk within "
          "the monitored horizon.";
    }
    return dump_draft(draft, justification);
  }
};

// ---------------------------------------------------------------------------
// HTTP backend (chat-completion protocol)
// ---------------------------------------------------------------------------

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    const std::size_t scheme = config_.url.find("://");
    if (scheme == std::string::npos) {
      throw ConfigError("backend url must include a scheme: " + config_.url);
    }
    const std::size_t path = config_.url.find('/', scheme + 3);
    if (path == std::string::npos) {
      base_ = config_.url;
      path_ = "/";
    } else {
      base_ = config_.url.substr(0, path);
      path_ = config_.url.substr(path);
    }
  }

  std::string name() const override { return "http"; }

  std::string complete(const BackendRequest& request) override {
    httplib::Client client(base_);
    const auto seconds = static_cast<time_t>(config_.timeout_s);
    const auto micros = static_cast<time_t>(
        (config_.timeout_s - static_cast<double>(seconds)) * 1e6);
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);

    httplib::Headers headers;
    if (!config_.token.empty()) {
      headers.emplace("Authorization", "Bearer " + config_.token);
    }
    Json message;
    message["role"] = "user";
    message["content"] = request.prompt;
    Json body;
    body["model"] = config_.model;
    body["temperature"] = request.temperature;
    body["messages"] = Json::array({message});

    const httplib::Result result =
        client.Post(path_, headers, canonical_dump(body), "application/json");
    if (!result) {
      throw TransportError("backend request failed: " +
                           httplib::to_string(result.error()));
    }
    if (result->status != 200) {
      throw TransportError("backend returned HTTP status " +
                           std::to_string(result->status));
    }
    Json response;
    try {
      response = parse_json(result->body, "backend.response");
    } catch (const SchemaError& e) {
      throw TransportError(std::string("backend response is not JSON: ") +
                           e.what());
    }
    if (!response.is_object() || !response.contains("choices") ||
        !response["choices"].is_array() || response["choices"].empty()) {
      throw TransportError("backend response lacks choices[0]");
    }
    const Json& first = response["choices"][0];
    if (!first.is_object() || !first.contains("message") ||
        !first["message"].is_object() ||
        !first["message"].contains("content") ||
        !first["message"]["content"].is_string()) {
      throw TransportError("backend response lacks choices[0].message.content");
    }
    return first["message"]["content"].get<std::string>();
  }

 private:
  HttpBackendConfig config_;
  std::string base_;
  std::string path_;
};

// ---------------------------------------------------------------------------
// Test stubs
// ---------------------------------------------------------------------------

class AlwaysMajorBackend final : public Backend {
 public:
  explicit AlwaysMajorBackend(std::unique_ptr<Backend> inner)
      : inner_(std::move(inner)) {}

  std::string name() const override {
    return "always_major(" + inner_->name() + ")";
  }

  std::string complete(const BackendRequest& request) override {
    if (request.stage == "ivl_verify") {
      Verdict verdict;
      verdict.kind = VerdictKind::kMajor;
      verdict.unsupported_or_conflicting_claims.push_back(
          {"forced failure", "verifier stub always reports Major", {}});
      verdict.comment = "forced failure";
      return canonical_dump(to_json(verdict));
    }
    return inner_->complete(request);
  }

 private:
  std::unique_ptr<Backend> inner_;
};

class AdversarialBackend final : public Backend {
 public:
  AdversarialBackend(std::unique_ptr<Backend> inner, std::uint64_t seed)
      : inner_(std::move(inner)), rng_(seed ^ 0xadbe11c0de5eedULL) {}

  std::string name() const override {
    return "adversarial(" + inner_->name() + ")";
  }

  std::string complete(const BackendRequest& request) override {
    std::string response = inner_->complete(request);
    if (request.stage != "vrcg" && request.stage != "ivl_revise") {
      return response;
    }
    if (rng_.uniform() >= 0.5) return response;
    const int count = 1 + static_cast<int>(rng_.uniform_index(3));
    for (int i = 0; i < count; ++i) {
      const std::string fake =
          "ID_" + std::to_string(900 + rng_.uniform_index(100));
      response += "; (" + fake + ") phantom hazard reported nearby";
    }
    return response;
  }

 private:
  std::unique_ptr<Backend> inner_;
  Rng rng_;
};

}  // namespace

std::unique_ptr<Backend> make_oracle_backend() {
  return std::make_unique<OracleBackend>();
}

std::unique_ptr<Backend> make_http_backend(const HttpBackendConfig& config) {
  if (config.url.empty()) throw ConfigError("backend url must not be empty");
  return std::make_unique<HttpBackend>(config);
}

std::unique_ptr<Backend> make_http_backend_from_env() {
  HttpBackendConfig config;
  const char* url = std::getenv("BEVCOORD_BACKEND_URL");
  if (url == nullptr || *url == '\0') {
    throw ConfigError(
        "http backend requires BEVCOORD_BACKEND_URL to be set");
  }
  config.url = url;
  if (const char* token = std::getenv("BEVCOORD_BACKEND_TOKEN")) {
    config.token = token;
  }
  if (const char* model = std::getenv("BEVCOORD_BACKEND_MODEL")) {
    if (*model != '\0') config.model = model;
  }
  return make_http_backend(config);
}

std::unique_ptr<Backend> make_always_major_backend(
    std::unique_ptr<Backend> inner) {
  return std::make_unique<AlwaysMajorBackend>(std::move(inner));
}

std::unique_ptr<Backend> make_adversarial_backend(
    std::unique_ptr<Backend> inner, std::uint64_t seed) {
  return std::make_unique<AdversarialBackend>(std::move(inner), seed);
}

std::unique_ptr<Backend> make_backend(const std::string& spec) {
  if (spec == "oracle") return make_oracle_backend();
  if (spec == "http") return make_http_backend_from_env();
  if (spec == "always_major") {
    return make_always_major_backend(make_oracle_backend());
  }
  if (spec == "adversarial") {
    return make_adversarial_backend(make_oracle_backend(), 1234);
  }
  const std::string prefix = "adversarial:";
  if (spec.rfind(prefix, 0) == 0) {
    const std::string seed_text = spec.substr(prefix.size());
    char* end = nullptr;
    const unsigned long long seed = std::strtoull(seed_text.c_str(), &end, 10);
    if (end == seed_text.c_str() || *end != '\0') {
      throw ConfigError("bad adversarial seed '" + seed_text + "'");
    }
    return make_adversarial_backend(make_oracle_backend(), seed);
  }
  throw ConfigError("unknown backend '" + spec +
                    "' (expected oracle, http, always_major, adversarial)");
}

}  // namespace bevcoord
