#pragma once
// CLI harness: merged run configuration, artifact persistence with hashed
// manifests, and the five subcommands (simulate | fuse | evaluate | reason |
// qagen). Every artifact is written in canonical JSON, so a run is
// reproducible byte for byte from (RunConfig, seed) alone; nothing here reads
// the wall clock.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bevcoord/association.hpp"
#include "bevcoord/fusion.hpp"
#include "bevcoord/json_io.hpp"
#include "bevcoord/metrics.hpp"
#include "bevcoord/qa.hpp"
#include "bevcoord/reasoning.hpp"
#include "bevcoord/sim.hpp"
#include "bevcoord/types.hpp"

namespace bevcoord {

// Process exit codes, one per error class (see errors.hpp).
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSchema = 3;
inline constexpr int kExitTransport = 4;
inline constexpr int kExitInternal = 5;

// Merged configuration for a full run. The top-level seed is the only seed:
// it drives the simulator directly, so the sim block rejects an rng_seed key
// to keep one source of truth.
struct RunConfig {
  std::string run_id = "run";
  std::uint64_t seed = 42;
  int n_scenes = 10;
  SimConfig sim;
  AssociationConfig association;
  FusionConfig fusion;
  SsreConfig ssre;
  MetricThresholds metrics;
  QaConfig qa;
};

// Strict parse: unknown keys anywhere reject the whole config. Every numeric
// threshold is range-checked here or by the owning module's validator.
RunConfig run_config_from_json(const Json& j, const std::string& path);
Json to_json(const RunConfig& config);

// Reads and parses a config file; an empty path yields the defaults. All
// failures (unreadable file, malformed JSON, bad values) become ConfigError.
RunConfig load_run_config(const std::string& file_path);

// Lowercase hex SHA-256 of a byte string; backs the manifest file hashes.
std::string sha256_hex(const std::string& bytes);

// Whole-file text IO. Reads throw ConfigError when the file is unreadable;
// writes create parent directories and throw ConfigError on failure.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Union-of-detections ablation: every 3D detection from every agent becomes
// its own entity with no association, no gating, and no conflict resolution.
// Cameras contribute nothing (no 3D position). Entities are renumbered in
// canonical (x, y, class) order.
SceneSummary naive_union_summary(const SceneFactBundle& bundle,
                                 const FusionConfig& config);

struct SimulateOptions {
  std::string config_path;  // empty = defaults
  std::string output_dir = "out";
  std::optional<int> n_scenes;        // overrides config
  std::optional<std::uint64_t> seed;  // overrides config
  int jobs = 1;
};

// Writes scenes.jsonl, facts.jsonl, correspondence.jsonl, calibration.json,
// config.json, and manifest.json (per-file SHA-256, no wall-clock metadata).
void cmd_simulate(const SimulateOptions& opt);

struct FuseOptions {
  std::string config_path;
  std::string facts_path;        // SceneFactBundle JSONL, required
  std::string calibration_path;  // empty = built-in default rig
  std::string output_path = "summaries.jsonl";
  std::string trace_path;  // per-scene fusion trace JSONL when set
  bool no_ica = false;     // bypass association/fusion with the naive union
};

// Scenes are fused sequentially in file order: the reliability ledger carries
// state from scene to scene.
void cmd_fuse(const FuseOptions& opt);

struct EvaluateRun {
  std::string label;
  std::string summaries_path;
};

struct EvaluateOptions {
  std::string config_path;
  std::string gt_path;  // GroundTruthScene JSONL, required
  std::vector<EvaluateRun> runs;
  std::string facts_path;        // enables conflict / miss accounting
  std::string calibration_path;  // used only with facts
  std::string output_dir = "eval";
  int jobs = 1;
};

// Emits report.json, report.txt (aligned table, also printed to stdout), and
// report.svg. Scene ids must match one-to-one between ground truth and every
// run being scored.
void cmd_evaluate(const EvaluateOptions& opt);

struct ReasonOptions {
  std::string config_path;
  std::string summaries_path;  // SceneSummary JSONL, required
  std::string query;
  std::string scene_id;  // empty = every scene in the file
  std::string backend;   // overrides the config backend spec
  std::string facts_path;  // agent synopses become auxiliary context
  std::string output_path = "decisions.jsonl";
  std::string trace_path;   // backend-call audit trace JSONL when set
  std::string replay_path;  // re-run from a recorded trace instead of a backend
};

// One decision record per scene. An unverified decision is still a success
// (exit 0); only transport failures use the transport exit code.
void cmd_reason(const ReasonOptions& opt);

struct QagenOptions {
  std::string config_path;
  std::string scenes_path;  // GroundTruthScene or SceneSummary JSONL
  std::vector<std::string> families;  // empty = all four
  int per_scene = 4;
  std::optional<std::uint64_t> seed;  // overrides config
  std::string output_path = "qa.jsonl";
  int jobs = 1;
};

// Detects the input flavor per line (ground truth carries "ego", summaries
// carry "ego_state") and derives one QA seed per scene index, so output is
// independent of the job count.
void cmd_qagen(const QagenOptions& opt);

// Full argv-style entry point: parses flags, dispatches to the cmd_*
// functions, and maps the error taxonomy onto exit codes. args excludes the
// program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace bevcoord
