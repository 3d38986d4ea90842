#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bevcoord/json_io.hpp"
#include "bevcoord/types.hpp"

namespace bevcoord {

// Verifier-aware reasoning over a fused scene summary. The engine walks a
// fixed four-stage chain: structured scene parsing, systematic risk
// assessment, draft decision reasoning, and a bounded verify/revise loop. A
// draft only ships once the verifier reports it consistent with the scene
// summary; otherwise the loop revises up to k_max times, and an unverified
// result is confidence-penalized and flagged rather than silently returned.
//
// The scene summary is the single source of truth: auxiliary free-text
// context may shape phrasing but can never introduce entities, and a local
// grounding check runs after every draft so a permissive verifier cannot let
// an unknown entity id through.

using RiskList = std::vector<RiskItem>;

// M / L_risk interchange (JSON trees; field names follow the prompt schemas:
// position_bev_m, velocity_bev_mps, size_m; missing values serialize as the
// string "unknown" and parse back to nullopt).
Json to_json(const IntermediateRep& rep);
IntermediateRep intermediate_rep_from_json(const Json& j,
                                           const std::string& path);
Json to_json(const RiskList& risks);
RiskList risk_list_from_json(const Json& j, const std::string& path);

// ---------------------------------------------------------------------------
// Backend abstraction
// ---------------------------------------------------------------------------

struct BackendRequest {
  std::string stage;  // ssp | sra | vrcg | ivl_verify | ivl_revise
  std::string template_name;
  std::string prompt;
  double temperature = 0.0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  // Returns the raw completion text for an already-rendered prompt. Transport
  // failures throw TransportError; content-level problems are returned as-is
  // and handled by the engine's malformed-output policy.
  virtual std::string complete(const BackendRequest& request) = 0;
};

// Deterministic rule backend: parses the data blocks back out of each prompt
// and answers mechanically (derived relations, TTC-based risks, the decision
// ladder, grounding plus numeric-claim verification, claim-stripping
// revision). Used for reproducible runs and as the reference in tests.
std::unique_ptr<Backend> make_oracle_backend();

struct HttpBackendConfig {
  std::string url;  // full endpoint URL, e.g. http://host:8000/v1/chat/completions
  std::string token;  // optional bearer token
  std::string model = "default";
  double timeout_s = 30.0;
};

// Chat-completion HTTP backend posting {model, messages, temperature} and
// reading choices[0].message.content. make_http_backend_from_env reads
// BEVCOORD_BACKEND_URL (required), BEVCOORD_BACKEND_TOKEN and
// BEVCOORD_BACKEND_MODEL (optional).
std::unique_ptr<Backend> make_http_backend(const HttpBackendConfig& config);
std::unique_ptr<Backend> make_http_backend_from_env();

// Test stubs. The failing verifier delegates every stage except verification,
// which always returns a Major verdict. The adversarial wrapper injects 1-3
// citations of nonexistent entity ids into each draft and revision,
// exercising the grounding defenses.
std::unique_ptr<Backend> make_always_major_backend(
    std::unique_ptr<Backend> inner);
std::unique_ptr<Backend> make_adversarial_backend(
    std::unique_ptr<Backend> inner, std::uint64_t seed);

// Dispatch by name: "oracle", "http", "always_major", "adversarial" or
// "adversarial:<seed>". Unknown -> ConfigError.
std::unique_ptr<Backend> make_backend(const std::string& spec);

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

struct SsreConfig {
  int k_max = 3;
  double gamma = 0.5;  // confidence penalty factor when unverified after k_max
  std::string backend = "oracle";
  double timeout_s = 30.0;
  double temperature_parse = 0.0;   // conservative decoding for parsing
  double temperature_reason = 0.2;  // slightly freer decoding for drafting
};

SsreConfig ssre_config_from_json(const Json& j, const std::string& path);
Json to_json(const SsreConfig& config);

struct TraceRecord {
  int call_index = 0;  // 1-based, in call order; one record per backend call
  std::string stage;
  std::string template_name;
  std::string prompt;
  std::string response;
  std::optional<std::string> verdict;  // verification calls only
  std::optional<std::string> note;  // e.g. "re-ask after malformed response"
};

Json to_json(const TraceRecord& record);

struct SsreResult {
  Decision decision;
  std::string justification;
  bool verified = false;
  int rounds = 0;  // verify rounds executed
  std::vector<TraceRecord> trace;
  Json evidence;  // audit block: sra_top_risks + per-round ivl_check records
};

Json to_json(const SsreResult& result);  // trace serialized separately

// All ID_<digits> tokens in order of first appearance, deduplicated as
// strings (no numeric canonicalization: "ID_007" and "ID_7" are distinct).
std::vector<std::string> extract_entity_ids(const std::string& text);

struct GroundingViolation {
  std::string id;
  std::string where;  // "supporting_entity_ids" | "justification"
};

// Every id cited by the decision or justification must name an entity of the
// summary. Violations are data, not errors.
std::vector<GroundingViolation> validate_grounding(
    const Decision& decision, const std::string& justification,
    const SceneSummary& summary);

// Runs the four-stage chain against the backend. aux is optional non-binding
// context. At most 3 + 2*k_max backend calls on the happy path; each
// malformed response costs at most one additional re-ask. A malformed
// verification response after the re-ask counts as a Major verdict; any other
// stage that stays malformed aborts with TransportError.
SsreResult run_ssre(const SceneSummary& summary, const std::string& query,
                    const std::optional<std::string>& aux,
                    const SsreConfig& config, Backend& backend);

}  // namespace bevcoord
