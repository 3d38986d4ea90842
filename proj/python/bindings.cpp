// Thin string-in / string-out bindings: every payload crosses the boundary as
// canonical JSON text, so Python sees exactly the bytes the CLI would write.

#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bevcoord/errors.hpp"
#include "bevcoord/pipeline.hpp"
#include "bevcoord/prompts.hpp"

namespace py = pybind11;

namespace {

using namespace bevcoord;

RunConfig config_from_text(const std::string& text) {
  if (text.empty()) return load_run_config("");
  return run_config_from_json(parse_json(text, "config"), "config");
}

std::string simulate_scene(const std::string& config, int scene_index) {
  const RunConfig cfg = config_from_text(config);
  const GroundTruthScene gt = generate_scene(cfg.sim, scene_index);
  const SceneObservation obs =
      observe_scene(gt, cfg.sim, default_calibration());
  Json corr = Json::array();
  for (const CorrespondenceRecord& row : obs.correspondence) {
    corr.push_back(to_json(row));
  }
  Json out;
  out["scene"] = to_json(gt);
  out["bundle"] = to_json(obs.bundle);
  out["correspondence"] = std::move(corr);
  return canonical_dump(out);
}

std::string fuse(const std::string& bundle_text, const std::string& config,
                 bool no_ica) {
  const RunConfig cfg = config_from_text(config);
  const SceneFactBundle bundle =
      fact_bundle_from_json(parse_json(bundle_text, "bundle"), "bundle");
  if (no_ica) {
    return canonical_dump(to_json(naive_union_summary(bundle, cfg.fusion)));
  }
  const std::vector<SeedEntity> seeds = associate_hierarchical(
      bundle.agents, default_calibration(), cfg.association);
  std::map<std::string, std::vector<std::string>> agent_lineage;
  for (const AgentFactSet& agent : bundle.agents) {
    agent_lineage[to_string(agent.agent_kind)] = agent.source_lineage;
  }
  SceneMeta meta;
  meta.scene_id = bundle.scene_id;
  meta.timestamp_us = bundle.timestamp_us;
  meta.ego_speed_mps = bundle.ego_speed_mps;
  const ReliabilityLedger ledger(cfg.fusion.initial_reliability,
                                 cfg.fusion.beta);
  const FusionOutcome outcome =
      fuse_scene(seeds, meta, ledger, agent_lineage, cfg.fusion);
  return canonical_dump(to_json(outcome.summary));
}

std::string evaluate(const std::string& summary_text,
                     const std::string& gt_text, const std::string& config) {
  const RunConfig cfg = config_from_text(config);
  const SceneSummary summary =
      scene_summary_from_json(parse_json(summary_text, "summary"), "summary");
  const GroundTruthScene gt =
      gt_scene_from_json(parse_json(gt_text, "gt"), "gt");
  const SceneCounts counts =
      evaluate_scene(summary, gt, nullptr, nullptr, cfg.metrics);
  const ConsistencyReport report = make_report({{gt.scene_id, counts}});
  return canonical_dump(report_to_json(report));
}

std::string reason(const std::string& summary_text, const std::string& query,
                   const std::string& backend_spec, const std::string& config) {
  RunConfig cfg = config_from_text(config);
  if (!backend_spec.empty()) cfg.ssre.backend = backend_spec;
  const SceneSummary summary =
      scene_summary_from_json(parse_json(summary_text, "summary"), "summary");
  const std::unique_ptr<Backend> backend = make_backend(cfg.ssre.backend);
  const SsreResult result =
      run_ssre(summary, query, std::nullopt, cfg.ssre, *backend);
  Json out = to_json(result);
  Json trace = Json::array();
  for (const TraceRecord& rec : result.trace) trace.push_back(to_json(rec));
  out["trace"] = std::move(trace);
  return canonical_dump(out);
}

std::string generate_qa_text(const std::string& scene_text, int n,
                             std::uint64_t seed,
                             const std::vector<std::string>& families,
                             const std::string& config) {
  const RunConfig cfg = config_from_text(config);
  const Json j = parse_json(scene_text, "scene");
  const QaScene scene =
      j.is_object() && j.contains("ego_state")
          ? qa_scene(scene_summary_from_json(j, "scene"))
          : qa_scene(gt_scene_from_json(j, "scene"));
  std::vector<QaFamily> parsed;
  if (families.empty()) {
    parsed = {QaFamily::kRelation, QaFamily::kCounting, QaFamily::kRisk,
              QaFamily::kDecision};
  } else {
    for (const std::string& name : families) {
      parsed.push_back(qa_family_from_string(name, "families"));
    }
  }
  Json out = Json::array();
  for (const QaPair& pair : generate_qa(scene, parsed, n, seed, cfg.qa)) {
    out.push_back(to_json(pair));
  }
  return canonical_dump(out);
}

std::string canonical(const std::string& text) {
  return canonical_dump(parse_json(text, "input"));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Deterministic multi-sensor scene coordination and verified reasoning "
      "core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
  py::register_exception<TransportError>(m, "TransportError",
                                         PyExc_RuntimeError);
  py::register_exception<InternalError>(m, "InternalError", PyExc_RuntimeError);

  m.def("simulate_scene", &simulate_scene, py::arg("config") = "",
        py::arg("scene_index") = 0,
        "Generate one scene; returns {scene, bundle, correspondence} JSON");
  m.def("fuse", &fuse, py::arg("bundle"), py::arg("config") = "",
        py::arg("no_ica") = false,
        "Coordinate one fact bundle into a scene summary JSON");
  m.def("evaluate", &evaluate, py::arg("summary"), py::arg("gt"),
        py::arg("config") = "",
        "Score one summary against ground truth; returns a report JSON");
  m.def("reason", &reason, py::arg("summary"), py::arg("query"),
        py::arg("backend") = "", py::arg("config") = "",
        "Run the verifier-audited reasoning chain; returns a result JSON "
        "with the backend-call trace inlined");
  m.def("generate_qa", &generate_qa_text, py::arg("scene"), py::arg("n"),
        py::arg("seed") = 42, py::arg("families") = std::vector<std::string>{},
        py::arg("config") = "",
        "Generate question-answer pairs; returns a JSON array");
  m.def("render_prompt", &render_prompt, py::arg("name"), py::arg("slots"),
        "Render a prompt template with the given slot values");
  m.def("prompt_template_names", [] { return prompt_template_names(); },
        "Available prompt template names");
  m.def("extract_entity_ids", &extract_entity_ids, py::arg("text"),
        "All ID_<digits> tokens in order of first appearance, deduplicated");
  m.def("canonical", &canonical, py::arg("text"),
        "Re-serialize JSON text into the canonical byte form");
  m.def("sha256_hex", &sha256_hex, py::arg("data"),
        "Lowercase hex SHA-256 of a byte string");
  m.def("run_cli", &run_cli, py::arg("args"),
        "Run a CLI subcommand; returns the process exit code");
#ifdef BEVCOORD_VERSION_INFO
  m.attr("__version__") = BEVCOORD_VERSION_INFO;
#else
  m.attr("__version__") = "dev";
#endif
}
