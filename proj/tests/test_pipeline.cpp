#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "bevcoord/errors.hpp"
#include "bevcoord/json_io.hpp"
#include "bevcoord/pipeline.hpp"
#include "bevcoord/reasoning.hpp"
#include "bevcoord/sim.hpp"
#include "bevcoord/types.hpp"

#include <httplib.h>

using namespace bevcoord;
namespace fs = std::filesystem;

namespace {

// Unique scratch directory per test case, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("bevcoord_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str(const std::string& child = "") const {
    return child.empty() ? path.string() : (path / child).string();
  }
};

Json default_config_json() { return to_json(RunConfig{}); }

}  // namespace

TEST_CASE("run config rejects unknown keys and a nested seed") {
  const Json base = default_config_json();
  CHECK_NOTHROW(run_config_from_json(base, "config"));

  Json extra = base;
  extra["typo_key"] = 1;
  CHECK_THROWS_AS(run_config_from_json(extra, "config"), ConfigError);

  Json nested = base;
  nested["sim"]["typo_key"] = 1;
  CHECK_THROWS_AS(run_config_from_json(nested, "config"), ConfigError);

  // The top-level seed is the only seed; a sim-level one is a config error.
  Json double_seed = base;
  double_seed["sim"]["rng_seed"] = 7;
  CHECK_THROWS_AS(run_config_from_json(double_seed, "config"), ConfigError);

  Json bad_range = base;
  bad_range["fusion"]["reliability_beta"] = 1.5;
  CHECK_THROWS_AS(run_config_from_json(bad_range, "config"), ConfigError);
}

TEST_CASE("run config round-trips and propagates the seed into the world") {
  RunConfig cfg;
  cfg.run_id = "trip";
  cfg.seed = 777;
  cfg.n_scenes = 3;
  cfg.sim.min_entities = 4;
  const Json j = to_json(cfg);
  const RunConfig back = run_config_from_json(j, "config");
  CHECK(canonical_dump(to_json(back)) == canonical_dump(j));
  CHECK(back.seed == 777);
  CHECK(back.sim.rng_seed == 777);
  CHECK(back.sim.min_entities == 4);

  // Empty path means defaults.
  const RunConfig defaults = load_run_config("");
  CHECK(defaults.run_id == "run");
  CHECK(defaults.seed == 42);
}

TEST_CASE("sha256 matches published vectors") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("text file io creates parents and reports missing files") {
  TempDir tmp("textio");
  const std::string path = tmp.str("nested/dir/file.txt");
  write_text_file(path, "payload\n");
  CHECK(read_text_file(path) == "payload\n");
  CHECK_THROWS_AS(read_text_file(tmp.str("absent.txt")), ConfigError);
}

TEST_CASE("simulation output is byte-stable across runs and thread counts") {
  TempDir a("sim_a"), b("sim_b"), c("sim_c");
  SimulateOptions opt;
  opt.n_scenes = 3;
  opt.seed = 31337;

  opt.output_dir = a.str();
  cmd_simulate(opt);
  opt.output_dir = b.str();
  cmd_simulate(opt);
  opt.output_dir = c.str();
  opt.jobs = 4;
  cmd_simulate(opt);

  const std::string manifest = read_text_file(a.str("manifest.json"));
  CHECK(manifest == read_text_file(b.str("manifest.json")));
  CHECK(manifest == read_text_file(c.str("manifest.json")));

  // The manifest inventories every artifact with its content hash.
  const Json m = parse_json(manifest, "manifest.json");
  CHECK(m.at("seed").get<std::uint64_t>() == 31337u);
  CHECK(m.at("n_scenes").get<int>() == 3);
  REQUIRE(m.contains("files"));
  for (const auto& [name, sha] : m.at("files").items()) {
    const std::string body = read_text_file(a.str(name));
    CHECK(sha256_hex(body) == sha.get<std::string>());
  }
  CHECK(m.at("files").contains("scenes.jsonl"));
  CHECK(m.at("files").contains("facts.jsonl"));
  CHECK(m.at("files").contains("correspondence.jsonl"));
  CHECK(m.at("files").contains("calibration.json"));
  CHECK(m.at("files").contains("config.json"));

  // The effective config echo re-parses under the same strict rules.
  const RunConfig echoed = load_run_config(a.str("config.json"));
  CHECK(echoed.seed == 31337u);
}

TEST_CASE("the naive union keeps every 3d detection as its own entity") {
  SimConfig sim;
  sim.rng_seed = 64;
  const GroundTruthScene scene = generate_scene(sim, 0);
  const SceneObservation obs = observe_scene(scene, sim, default_calibration());

  FusionConfig fusion;
  const SceneSummary summary = naive_union_summary(obs.bundle, fusion);
  // Every non-camera 3D detection survives as its own entity. Radar may
  // contribute fewer than one cluster per object when a return draw is thin.
  std::size_t expected = 0;
  std::size_t lidar_count = 0;
  for (const AgentFactSet& agent : obs.bundle.agents) {
    if (agent.agent_kind == AgentKind::kCamera) continue;
    expected += agent.detections_3d.size();
    if (agent.agent_kind == AgentKind::kLidar) {
      lidar_count = agent.detections_3d.size();
    }
  }
  CHECK(summary.entities.size() == expected);
  CHECK(lidar_count == scene.entities.size());
  CHECK(summary.entities.size() >= 2 * scene.entities.size());
  for (const auto& e : summary.entities) {
    CHECK_NOTHROW(validate(e, "naive"));
    CHECK(e.sources.size() == 1);
    REQUIRE(e.lineage.count("position"));
    CHECK(e.lineage.at("position").rule == "naive_union");
  }
  const SceneSummary again = naive_union_summary(obs.bundle, fusion);
  CHECK(canonical_dump(to_json(again)) == canonical_dump(to_json(summary)));
}

TEST_CASE("the full command chain runs and stays consistent") {
  TempDir tmp("chain");
  Json cfg = default_config_json();
  cfg["run_id"] = "chain";
  cfg["seed"] = 99;
  cfg["n_scenes"] = 2;
  cfg["sim"]["min_entities"] = 3;
  cfg["sim"]["max_entities"] = 5;
  const std::string cfg_path = tmp.str("config.json");
  write_text_file(cfg_path, canonical_dump_line(cfg));

  const std::string out = tmp.str("out");
  CHECK(run_cli({"simulate", "--config", cfg_path, "--out", out}) == 0);

  const std::string facts = out + "/facts.jsonl";
  const std::string calib = out + "/calibration.json";
  const std::string scenes = out + "/scenes.jsonl";
  const std::string fused = tmp.str("fused.jsonl");
  const std::string naive = tmp.str("naive.jsonl");
  CHECK(run_cli({"fuse", "--config", cfg_path, "--facts", facts,
                 "--calibration", calib, "--out", fused}) == 0);
  CHECK(run_cli({"fuse", "--config", cfg_path, "--facts", facts,
                 "--calibration", calib, "--out", naive, "--no-ica"}) == 0);

  // Tracing is an ica-path feature; the naive route has nothing to trace.
  CHECK(run_cli({"fuse", "--config", cfg_path, "--facts", facts,
                 "--calibration", calib, "--out", tmp.str("x.jsonl"),
                 "--no-ica", "--trace", tmp.str("t.jsonl")}) == 2);

  const std::string eval_dir = tmp.str("eval");
  CHECK(run_cli({"evaluate", "--config", cfg_path, "--gt", scenes, "--run",
                 "ica=" + fused, "--run", "naive_union=" + naive, "--facts",
                 facts, "--calibration", calib, "--out", eval_dir}) == 0);
  const Json report =
      parse_json(read_text_file(eval_dir + "/report.json"), "report.json");
  REQUIRE(report.contains("ica"));
  REQUIRE(report.contains("naive_union"));
  CHECK(report["ica"]["totals"]["scenes"].get<int>() == 2);
  CHECK(fs::exists(eval_dir + "/report.txt"));
  CHECK(fs::exists(eval_dir + "/report.svg"));

  const std::string decisions = tmp.str("decisions.jsonl");
  const std::string trace = tmp.str("trace.jsonl");
  CHECK(run_cli({"reason", "--config", cfg_path, "--summaries", fused,
                 "--query", "Is it safe to continue?", "--facts", facts,
                 "--out", decisions, "--trace", trace}) == 0);
  const std::vector<Json> decision_lines =
      parse_jsonl(read_text_file(decisions), "decisions.jsonl");
  REQUIRE(decision_lines.size() == 2);
  for (const Json& line : decision_lines) {
    CHECK(line.contains("scene_id"));
    CHECK(line.at("result").contains("decision"));
  }

  // Replaying the recorded trace must reproduce the decisions byte for byte.
  const std::string replayed = tmp.str("replayed.jsonl");
  CHECK(run_cli({"reason", "--config", cfg_path, "--summaries", fused,
                 "--query", "Is it safe to continue?", "--facts", facts,
                 "--out", replayed, "--replay", trace}) == 0);
  CHECK(read_text_file(replayed) == read_text_file(decisions));

  // Replay and a live backend are mutually exclusive.
  CHECK(run_cli({"reason", "--config", cfg_path, "--summaries", fused,
                 "--query", "q", "--backend", "oracle", "--replay", trace,
                 "--out", tmp.str("y.jsonl")}) == 2);

  const std::string qa = tmp.str("qa.jsonl");
  CHECK(run_cli({"qagen", "--config", cfg_path, "--scenes", scenes, "--out",
                 qa}) == 0);
  const std::vector<Json> qa_lines = parse_jsonl(read_text_file(qa), "qa.jsonl");
  CHECK(qa_lines.size() == 2 * 4);  // default four pairs per scene
  for (const Json& line : qa_lines) CHECK(line.at("mode") == "ground_truth");

  // Summary-mode generation from fused output.
  const std::string qa_sum = tmp.str("qa_summary.jsonl");
  CHECK(run_cli({"qagen", "--config", cfg_path, "--scenes", fused, "--out",
                 qa_sum, "--families", "risk,decision"}) == 0);
  for (const Json& line :
       parse_jsonl(read_text_file(qa_sum), "qa_summary.jsonl")) {
    CHECK(line.at("mode") == "summary");
    const std::string family = line.at("family").get<std::string>();
    CHECK((family == "risk" || family == "decision"));
  }
}

TEST_CASE("evaluation demands an exact scene correspondence") {
  TempDir tmp("evalmismatch");
  Json cfg = default_config_json();
  cfg["n_scenes"] = 2;
  const std::string cfg_path = tmp.str("config.json");
  write_text_file(cfg_path, canonical_dump_line(cfg));

  const std::string out = tmp.str("out");
  REQUIRE(run_cli({"simulate", "--config", cfg_path, "--out", out}) == 0);
  const std::string fused = tmp.str("fused.jsonl");
  REQUIRE(run_cli({"fuse", "--config", cfg_path, "--facts",
                   out + "/facts.jsonl", "--calibration",
                   out + "/calibration.json", "--out", fused}) == 0);

  // Dropping one summary line leaves a ground-truth scene uncovered.
  const std::vector<Json> lines =
      parse_jsonl(read_text_file(fused), "fused.jsonl");
  REQUIRE(lines.size() == 2);
  write_text_file(tmp.str("short.jsonl"), canonical_dump_line(lines[0]));
  CHECK(run_cli({"evaluate", "--config", cfg_path, "--gt",
                 out + "/scenes.jsonl", "--run",
                 "ica=" + tmp.str("short.jsonl"), "--out",
                 tmp.str("e1")}) == 3);

  // A summary for a scene the ground truth does not know is just as fatal.
  Json alien = lines[0];
  alien["scene_id"] = "scene_9999";
  write_text_file(tmp.str("alien.jsonl"),
                  canonical_dump_line(lines[0]) + canonical_dump_line(lines[1]) +
                      canonical_dump_line(alien));
  CHECK(run_cli({"evaluate", "--config", cfg_path, "--gt",
                 out + "/scenes.jsonl", "--run",
                 "ica=" + tmp.str("alien.jsonl"), "--out",
                 tmp.str("e2")}) == 3);
}

TEST_CASE("exit codes separate config, schema, and transport failures") {
  TempDir tmp("exitcodes");

  CHECK(run_cli({"definitely-not-a-subcommand"}) == 2);
  CHECK(run_cli({"simulate", "--no-such-flag"}) == 2);
  CHECK(run_cli({"simulate", "--config", tmp.str("missing.json"), "--out",
                 tmp.str("out")}) == 2);

  write_text_file(tmp.str("bad_key.json"), "{\"not_a_key\":1}\n");
  CHECK(run_cli({"simulate", "--config", tmp.str("bad_key.json"), "--out",
                 tmp.str("out")}) == 2);

  // Malformed data files are schema errors, not config errors.
  write_text_file(tmp.str("bad.jsonl"), "{\"scene_id\": oops}\n");
  CHECK(run_cli({"fuse", "--facts", tmp.str("bad.jsonl"), "--calibration",
                 tmp.str("bad.jsonl"), "--out", tmp.str("s.jsonl")}) == 3);

  // An unreachable live backend is a transport failure.
  TempDir sim("exit_sim");
  REQUIRE(run_cli({"simulate", "--config", "", "--out", sim.str(),
                   "--scenes", "1"}) == 0);
  const std::string fused = tmp.str("fused.jsonl");
  REQUIRE(run_cli({"fuse", "--facts", sim.str("facts.jsonl"), "--calibration",
                   sim.str("calibration.json"), "--out", fused}) == 0);
  setenv("BEVCOORD_BACKEND_URL", "http://127.0.0.1:9/nope", 1);
  CHECK(run_cli({"reason", "--summaries", fused, "--query", "q", "--backend",
                 "http", "--out", tmp.str("d.jsonl")}) == 4);
  unsetenv("BEVCOORD_BACKEND_URL");
}

TEST_CASE("the http backend speaks the chat-completion wire format") {
  httplib::Server server;
  std::string seen_body;
  server.Post("/v1/chat/completions",
              [&](const httplib::Request& req, httplib::Response& res) {
                seen_body = req.body;
                Json reply;
                reply["choices"] = Json::array();
                Json choice;
                choice["message"]["content"] = "canned completion";
                reply["choices"].push_back(choice);
                res.set_content(reply.dump(), "application/json");
              });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread serve([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpBackendConfig cfg;
  cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.model = "test-model";
  auto backend = make_http_backend(cfg);
  BackendRequest request{"vrcg", "T_reason", "prompt text", 0.2};
  CHECK(backend->complete(request) == "canned completion");

  const Json body = parse_json(seen_body, "request body");
  CHECK(body.at("model") == "test-model");
  CHECK(body.at("temperature").get<double>() == doctest::Approx(0.2));
  REQUIRE(body.at("messages").is_array());
  CHECK(body.at("messages")[0].at("content") == "prompt text");

  // A failing status code surfaces as a transport error.
  server.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("boom", "text/plain");
  });
  HttpBackendConfig bad = cfg;
  bad.url = "http://127.0.0.1:" + std::to_string(port) + "/broken";
  auto broken = make_http_backend(bad);
  CHECK_THROWS_AS(broken->complete(request), TransportError);

  server.stop();
  serve.join();
}

TEST_CASE("replay refuses traces from a different conversation") {
  TempDir tmp("replaydrift");
  const std::string out = tmp.str("out");
  REQUIRE(run_cli({"simulate", "--config", "", "--out", out, "--scenes",
                   "1"}) == 0);
  const std::string fused = tmp.str("fused.jsonl");
  REQUIRE(run_cli({"fuse", "--facts", out + "/facts.jsonl", "--calibration",
                   out + "/calibration.json", "--out", fused}) == 0);
  const std::string trace = tmp.str("trace.jsonl");
  REQUIRE(run_cli({"reason", "--summaries", fused, "--query", "q", "--out",
                   tmp.str("d.jsonl"), "--trace", trace}) == 0);

  // Truncating the trace exhausts it mid-conversation.
  const std::vector<Json> records = parse_jsonl(read_text_file(trace), "trace");
  REQUIRE(records.size() >= 2);
  std::string truncated;
  for (std::size_t i = 0; i + 1 < records.size(); ++i) {
    truncated += canonical_dump_line(records[i]);
  }
  write_text_file(tmp.str("short.jsonl"), truncated);
  CHECK(run_cli({"reason", "--summaries", fused, "--query", "q", "--out",
                 tmp.str("d2.jsonl"), "--replay", tmp.str("short.jsonl")}) ==
        4);
}
