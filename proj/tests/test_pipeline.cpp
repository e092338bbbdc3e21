#include <doctest.h>

#include <fstream>
#include <sstream>

#include "lapcam/pipeline.hpp"
#include "lapcam/supervision.hpp"

namespace fs = std::filesystem;
using namespace lapcam;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const char* name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

PipelineConfig small_config() {
  auto cfg = default_pipeline_config();
  cfg.scenario.cycles = 4;
  cfg.simulation.duration = 5.0;
  cfg.miner.gaae.epochs = 20;
  return cfg;
}

}  // namespace

TEST_CASE("config: defaults, overrides and rejection") {
  const auto d = parse_config("");
  CHECK(d.miner.k == 3);
  CHECK(d.ablation_grid == std::vector<int>{8, 10, 12, 14, 16});
  CHECK(d.control.recover_time == 25.0);

  const auto c = parse_config("version: lapcam-1\nminer: {k: 5, seed: 9}\ncontrol: {k_f: [1.5, 2.5]}\n"
                              "detector: {tau_F: 0.3}\nablation: {grid: [2, 3]}\n");
  CHECK(c.miner.k == 5);
  CHECK(c.miner.seed == 9u);
  CHECK(c.control.k_f == Eigen::Vector2d(1.5, 2.5));
  REQUIRE(c.detector.tau_F.has_value());
  CHECK(*c.detector.tau_F == 0.3);
  CHECK_FALSE(c.detector.tau_C.has_value());
  CHECK(c.ablation_grid == std::vector<int>{2, 3});

  CHECK_THROWS_AS(parse_config("bogus: 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("miner: {kk: 3}\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("miner: {k: three}\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("version: lapcam-0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("miner: [1, 2]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("control: {lambda_min: 0.95}\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("simulation: {home: [0, 0, 0]}\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("arm: {dh: [[0, 0, 0]]}\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("scenario: {kind: surgery}\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("{unclosed"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/lapcam.yaml"), ConfigError);
}

TEST_CASE("shipped config matches the built-in defaults") {
  const auto path = fs::path(LAPCAM_SOURCE_DIR) / "config" / "default.yaml";
  const auto c = load_config(path);
  const auto d = default_pipeline_config();
  CHECK(c.scenario.kind == d.scenario.kind);
  CHECK(c.scenario.seed == d.scenario.seed);
  CHECK(c.miner.k == d.miner.k);
  CHECK(c.miner.alpha == d.miner.alpha);
  CHECK(c.detector.tau_def == d.detector.tau_def);
  CHECK(c.control.k_rcm == d.control.k_rcm);
  CHECK(c.control.s_z == d.control.s_z);
  REQUIRE(c.arm.n() == d.arm.n());
  for (int k = 0; k < d.arm.n(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    CHECK(c.arm.dh[i].alpha == d.arm.dh[i].alpha);
    CHECK(c.arm.dh[i].d == d.arm.dh[i].d);
    CHECK(c.arm.joint_limits[i] == d.arm.joint_limits[i]);
  }
  CHECK(c.simulation.home == d.simulation.home);
  CHECK(c.ablation_grid == d.ablation_grid);
}

TEST_CASE("generator contracts") {
  Scenario quiet;
  quiet.seed = 3;
  quiet.duration = 120.0;
  const auto g = generate_scenario(quiet);
  CHECK(g.truth.empty());
  // false-positive budget: one event per minute of pure noise
  CHECK(parse_stream(g.stream, DetectorConfig{}).size() <= 2);

  Scenario ramp;
  ramp.duration = 20.0;
  ramp.z0 = 100.0;
  PlantedEvent adv;
  adv.label = EventLabel::DepthAdvance;
  adv.t_s = 5.0;
  adv.t_e = 8.0;
  adv.dz = -20.0;
  ramp.planted.push_back(adv);
  const auto r = generate_scenario(ramp);
  REQUIRE(r.truth.size() == 1);
  CHECK(r.truth[0].label == EventLabel::DepthAdvance);
  CHECK(r.truth[0].dz == -20.0);

  auto overlap = ramp;
  adv.t_s = 7.0;
  adv.t_e = 9.0;
  overlap.planted.push_back(adv);
  CHECK_THROWS_AS(generate_scenario(overlap), ConfigError);

  const auto dir = fresh_dir("lapcam_gen");
  auto cfg = small_config();
  stage_generate(cfg, dir / "a");
  stage_generate(cfg, dir / "b");
  CHECK(slurp(dir / "a" / artifact::kStream) == slurp(dir / "b" / artifact::kStream));
  CHECK(slurp(dir / "a" / artifact::kTruth) == slurp(dir / "b" / artifact::kTruth));
  fs::remove_all(dir);
}

TEST_CASE("sha256 digests") {
  const auto dir = fresh_dir("lapcam_sha");
  fs::create_directories(dir / "sub");
  std::ofstream(dir / "abc.txt", std::ios::binary) << "abc";
  std::ofstream(dir / "sub" / "empty.txt", std::ios::binary);
  CHECK(sha256_file(dir / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_file(dir / "sub" / "empty.txt") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  write_manifest(dir);
  const auto m = nlohmann::json::parse(slurp(dir / artifact::kManifest));
  CHECK(m["files"].size() == 2);
  CHECK(m["files"].contains("sub/empty.txt"));
  CHECK_FALSE(m["files"].contains(artifact::kManifest));
  CHECK_THROWS_AS(sha256_file(dir / "missing"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("pipeline: artifacts, stage errors and reruns") {
  const auto cfg = small_config();
  const auto dir = fresh_dir("lapcam_pipe");

  try {
    stage_respond(cfg, dir);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).rfind("respond:", 0) == 0);
  }
  CHECK_THROWS_AS(run_pipeline(cfg, dir, "polish"), ConfigError);

  run_pipeline(cfg, dir);
  for (const char* f : {artifact::kStream, artifact::kTruth, artifact::kEvents, artifact::kResponded, artifact::kGraph,
                        artifact::kModel, artifact::kSamples, artifact::kTrajectory, artifact::kEvaluation,
                        artifact::kManifest}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / f));
  }
  const auto manifest = slurp(dir / artifact::kManifest);
  const auto eval = nlohmann::json::parse(slurp(dir / artifact::kEvaluation));
  CHECK(eval["mining"]["k"] == 3);
  CHECK(eval["simulation"]["rows"] == 500);
  CHECK(eval["simulation"]["max_rcm_error"].get<double>() <= 1e-4);

  // deleting intermediates and rerunning from a stage reproduces everything downstream
  for (const auto& [stage, victims] : std::vector<std::pair<std::string, std::vector<const char*>>>{
           {"graph", {artifact::kGraph, artifact::kModel, artifact::kSamples, artifact::kTrajectory}},
           {"supervise", {artifact::kSamples, artifact::kTrajectory, artifact::kEvaluation}}}) {
    CAPTURE(stage);
    for (const char* v : victims) fs::remove_all(dir / v);
    run_pipeline(cfg, dir, stage);
    CHECK(slurp(dir / artifact::kManifest) == manifest);
  }

  fs::remove_all(dir / artifact::kModel);
  CHECK_THROWS_AS(stage_simulate(cfg, dir), DataError);
  fs::remove_all(dir);
}

TEST_CASE("ablation report") {
  const auto cfg = small_config();
  const auto dir = fresh_dir("lapcam_abl");
  for (const char* s : {"generate", "parse", "respond", "graph"}) run_stage(s, cfg, dir);
  const auto g = load_graph(dir / artifact::kGraph);
  const auto raw = load_events(dir / artifact::kResponded);
  const auto modes = truth_modes(raw, load_truth(dir / artifact::kTruth));

  const auto one = ablate_k(g, raw, modes, cfg.miner, {3});
  REQUIRE(one.rows.size() == 1);
  CHECK(one.best_k == 3);

  const auto sweep = ablate_k(g, raw, modes, cfg.miner, {2, 3, 4});
  REQUIRE(sweep.rows.size() == 3);
  CHECK(sweep.rows[1].k == 3);
  CHECK(sweep.rows[1].purity >= sweep.rows[0].purity);

  CHECK_THROWS(ablate_k(g, raw, modes, cfg.miner, {static_cast<int>(g.events.size())}));

  save_ablation(sweep, dir / "ablation.csv");
  const auto text = slurp(dir / "ablation.csv");
  CHECK(text.rfind("# ablation", 0) == 0);
  CHECK(text.find("k,purity,nmi,var_intra,empty_clusters\n") != std::string::npos);
  CHECK_THROWS_AS(ablate_k(g, raw, modes, cfg.miner, {}), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("predictor schedule maps contamination clusters to withdraw") {
  const auto cfg = small_config();
  const auto dir = fresh_dir("lapcam_sched");
  for (const char* s : {"generate", "parse", "respond", "graph", "mine"}) run_stage(s, cfg, dir);
  const auto g = load_graph(dir / artifact::kGraph);
  const auto m = load_model(dir / artifact::kModel);
  const auto sched = predictor_schedule(g.events, m, 3);
  REQUIRE(sched.size() == g.events.size());
  int withdraws = 0;
  for (std::size_t i = 0; i < sched.size(); ++i) {
    if (i > 0) CHECK(sched[i].first >= sched[i - 1].first);
    CHECK(sched[i].second.source == "predictor");
    withdraws += sched[i].second.withdraw;
  }
  int contamination = 0;
  for (const auto& e : g.events) contamination += e.label == EventLabel::LensContamination;
  CHECK(withdraws == contamination);
  fs::remove_all(dir);
}

TEST_CASE("flow direction and truth modes") {
  EventRecord e;
  CHECK(std::isnan(flow_direction(e)));
  e.mask[desc::kAction] = e.mask[desc::kAction + 1] = true;
  e.x[desc::kAction] = 0.0;
  e.x[desc::kAction + 1] = 2.0;
  CHECK(flow_direction(e) == doctest::Approx(M_PI / 2));

  e.t_s = 1.0;
  e.t_e = 3.0;
  e.video_id = "v";
  TruthEvent a{"v", EventLabel::Interaction, 0.0, 2.0, 4}, b{"v", EventLabel::Interaction, 1.0, 3.2, 7},
      other{"w", EventLabel::Interaction, 1.0, 3.0, 9};
  CHECK(truth_modes({e}, {a, b, other}) == std::vector<int>{7});
  CHECK(truth_modes({e}, {other}) == std::vector<int>{-1});
}
