#include "bevcoord/prompts.hpp"

#include <regex>

#include "bevcoord/errors.hpp"

namespace bevcoord {

namespace {

const char kParse[] =
    R"prompt(T_parse | Structured Scene Parsing

Role: You are a scene-graph parser for autonomous driving.

Input:
- SceneSummary S (JSON), containing a list of entities with IDs and state estimates.

Output:
- M (a structured intermediate representation) in the exact schema below.

Rules:
1) Do not invent entities, attributes, or relations.
2) You may compute ONLY deterministic derived quantities from S (e.g., speed magnitude, pairwise distance, relative direction, and "approaching" based on position/velocity). Do not infer intentions unless S explicitly contains an intent tag.
3) Use entity references strictly in the form ID_<number> (e.g., ID_17).
4) If a field is missing in S, output "unknown" for that field.

Output schema (YAML-like, keep the keys and order):

ENTITIES:
- id: ID_17
  - type: <from S>
  - position_bev_m: [x, y]
  - velocity_bev_mps: [vx, vy]
  - size_m: [l, w, h]
  - heading_rad: <value or unknown>
  - confidence: <value or unknown>
  - sources: <list>
  - semantic_attributes: <list or empty>
  - flags: <list or empty>

RELATIONS (optional; only if computable from S):
- subject: ID_17
  - relation: <ahead_of | behind_of | left_of | right_of | near | far | approaching | moving_away>
  - object: ID_35
  - evidence: <brief numeric evidence based on S, e.g., distance=8.2m>

S:
{{S}}

Now parse S into M.
)prompt";

const char kRisk[] =
    R"prompt(T_risk | Systematic Risk Assessment

Role: You are a driving safety risk assessment agent.

Input:
- M (structured scene representation)

Output:
- L_risk: a prioritized JSON array of risk items, sorted by (severity, urgency) descending.

Rules:
1) Base the assessment ONLY on M. Do not assume unobserved traffic rules, signals, or occlusions unless stated.
2) Each item must reference involved entities using ID_<number>.
3) Use severity and urgency on a 1-5 scale (5 = highest).
4) If there is insufficient evidence, output a risk with low confidence rather than fabricating details.

Output JSON schema:

[
  {
    "risk_type": "<collision | cut_in | rear_end | pedestrian_crossing | occlusion | rule_violation | unknown>",
    "involved_entity_ids": ["ID_17", "ID_35"],
    "severity": 1-5,
    "urgency": 1-5,
    "confidence": 0.0-1.0,
    "evidence": "A short, verifiable statement that cites fields/relations from M."
  },
  ...
]

M:
{{M}}

Now generate L_risk.
)prompt";

const char kReason[] =
    R"prompt(T_reason | Decision Reasoning with Grounded Justification

Role: You are an autonomous driving decision agent that must remain strictly grounded.

Inputs:
- User query Q (natural language)
- M (structured scene representation)
- L_risk (prioritized risk list)
- Optional auxiliary descriptions A (free-text; may be noisy)

Outputs:
1) D_draft (JSON decision)
2) N_draft (natural-language justification)

Rules:
1) Treat M as the primary source of truth. A can be used only to provide linguistic phrasing and MUST NOT introduce new entities or contradict M.
2) Every factual claim in N_draft must cite at least one entity ID in parentheses, e.g., "(ID_17)".
3) If evidence is insufficient, choose a conservative action and lower the confidence.
4) Do not output hidden reasoning traces; provide a concise, verifiable justification.

Decision JSON schema:

{
  "recommended_action": "<keep_lane | slow_down | stop | yield | change_lane_left | change_lane_right | follow | unknown>",
  "confidence": 0.0-1.0,
  "target_entity_ids": ["ID_17", "..."],
  "risk_summary": "One sentence summarizing the main risks considered.",
  "constraints": ["optional safety constraints or checks, if any"]
}

Q:
{{Q}}

M:
{{M}}

L_risk:
{{L_risk}}

A:
{{A}}

Now answer Q using (M, L_risk, A) and output D_draft first, then N_draft.
)prompt";

const char kVerify[] =
    R"prompt(T_verify | Introspective Verification

Role: You are a verifier. Your task is to check whether the draft decision and justification contradict the SceneSummary S.

Inputs:
- SceneSummary S (JSON)
- D_draft (decision JSON)
- N_draft (justification text)

Output:
- V (a JSON object)

Verification checklist:
1) No new entity IDs appear in D_draft or N_draft that are absent in S.
2) Any stated entity type/state (position/velocity/size) must not contradict S.
3) If a claim cannot be verified from S, mark it as unsupported.
4) Focus on factual grounding, not writing style.

Output JSON schema:

{
  "verdict": "PASS" | "FAIL",
  "unsupported_or_conflicting_claims": [
    {"claim": "...", "reason": "..."}
  ],
  "comment": "One short comment for revision."
}

S:
{{S}}

D_draft:
{{D_draft}}

N_draft:
{{N_draft}}

Now verify and output V.
)prompt";

const char kRevision[] =
    R"prompt(T_revision | Revision under Verifier Feedback

Role: You are a reviser. You must revise (D_draft, N_draft) based on verifier output V.

Inputs:
- M, L_risk, Q
- D_draft, N_draft
- V (verifier JSON)

Rules:
1) Remove or correct any unsupported/conflicting claims listed in V.
2) Keep entity references consistent (ID_<number>).
3) If conflicts cannot be resolved, choose a more conservative action and reduce confidence.

Outputs:
- D_final (JSON decision)
- N_final (justification text)

M:
{{M}}

L_risk:
{{L_risk}}

Q:
{{Q}}

D_draft:
{{D_draft}}

N_draft:
{{N_draft}}

V:
{{V}}

Now produce D_final and N_final.
)prompt";

const std::map<std::string, const char*>& template_table() {
  static const std::map<std::string, const char*> kTable = {
      {"T_parse", kParse},
      {"T_risk", kRisk},
      {"T_reason", kReason},
      {"T_verify", kVerify},
      {"T_revision", kRevision}};
  return kTable;
}

}  // namespace

const std::vector<std::string>& prompt_template_names() {
  static const std::vector<std::string> kNames = [] {
    std::vector<std::string> names;
    for (const auto& [name, text] : template_table()) names.push_back(name);
    return names;
  }();
  return kNames;
}

const std::string& prompt_template(const std::string& name) {
  const auto& table = template_table();
  const auto it = table.find(name);
  if (it == table.end()) {
    throw ConfigError("render_prompt: unknown template '" + name + "'");
  }
  static std::map<std::string, std::string> cache;
  auto [cached, inserted] = cache.try_emplace(name, it->second);
  return cached->second;
}

std::vector<std::string> prompt_slots(const std::string& name) {
  const std::string& text = prompt_template(name);
  static const std::regex kSlot(R"re(\{\{([A-Za-z_]+)\}\})re");
  std::vector<std::string> slots;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kSlot);
       it != std::sregex_iterator(); ++it) {
    slots.push_back((*it)[1].str());
  }
  return slots;
}

std::string render_prompt(const std::string& name,
                          const std::map<std::string, std::string>& slots) {
  const std::string& text = prompt_template(name);
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find("{{", pos);
    if (open == std::string::npos) {
      out.append(text, pos, std::string::npos);
      break;
    }
    const std::size_t close = text.find("}}", open + 2);
    if (close == std::string::npos) {
      throw InternalError("render_prompt: unterminated placeholder in '" +
                          name + "'");
    }
    out.append(text, pos, open - pos);
    const std::string slot = text.substr(open + 2, close - open - 2);
    const auto it = slots.find(slot);
    if (it != slots.end()) {
      out += it->second;
    } else if (name == "T_reason" && slot == "A") {
      out += "(none)";  // auxiliary description is explicitly optional
    } else {
      throw ConfigError("render_prompt: template '" + name +
                        "' is missing slot '" + slot + "'");
    }
    pos = close + 2;
  }
  return out;
}

}  // namespace bevcoord
