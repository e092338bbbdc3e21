#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "lapcam/common.hpp"
#include "lapcam/pipeline.hpp"
#include "lapcam/scenario.hpp"
#include "lapcam/supervision.hpp"

namespace fs = std::filesystem;
using namespace lapcam;

namespace {

PipelineConfig config_from(const std::string& path) {
  return path.empty() ? default_pipeline_config() : load_config(path);
}

void print_summary(const fs::path& dir) {
  std::ifstream in(dir / artifact::kEvaluation);
  if (!in) return;
  std::cout << in.rdbuf();
}

int run(int argc, char** argv) {
  CLI::App app{"Event-driven laparoscope camera control toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out = "out";
  app.add_option("-c,--config", config_path, "YAML config file")->check(CLI::ExistingFile);
  app.add_option("-o,--out", out, "artifact directory");

  for (const auto& name : stage_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " stage");
    sub->callback([&, name] {
      const auto cfg = config_from(config_path);
      fs::create_directories(out);
      run_stage(name, cfg, out);
      write_manifest(out);
      if (name == "evaluate") print_summary(out);
    });
  }

  std::string from = "generate";
  auto* pipe = app.add_subcommand("pipeline", "run every stage and write the manifest");
  pipe->add_option("--from", from, "first stage to run");
  pipe->callback([&] {
    run_pipeline(config_from(config_path), out, from);
    print_summary(out);
  });

  std::vector<int> grid;
  auto* abl = app.add_subcommand("ablate-k", "re-cluster the mined graph for each K");
  abl->add_option("--grid", grid, "cluster counts (default from config)");
  abl->callback([&] {
    auto cfg = config_from(config_path);
    if (!grid.empty()) cfg.ablation_grid = grid;
    const fs::path dir = out;
    for (const char* f : {artifact::kGraph, artifact::kResponded, artifact::kTruth}) {
      if (!fs::exists(dir / f)) throw DataError(std::string("ablate-k: missing input ") + (dir / f).string());
    }
    const auto g = load_graph(dir / artifact::kGraph);
    const auto raw = load_events(dir / artifact::kResponded);
    const auto truth = load_truth(dir / artifact::kTruth);
    const auto rep = ablate_k(g, raw, truth_modes(raw, truth), cfg.miner, cfg.ablation_grid);
    save_ablation(rep, dir / "ablation.csv");
    std::cout << "k,purity,nmi,var_intra,empty_clusters\n";
    for (const auto& r : rep.rows) {
      std::cout << r.k << ',' << r.purity << ',' << r.nmi << ',' << r.var_intra << ',' << r.empty_clusters
                << (r.empty_clusters > 0 ? "  (empty clusters)" : "") << '\n';
    }
    std::cout << "best_k " << rep.best_k << '\n';
  });

  std::string script;
  double duration = -1.0;
  auto* ovr = app.add_subcommand("override", "drive the simulator from command lines on stdin");
  ovr->add_option("--script", script, "read commands from a file instead of stdin")->check(CLI::ExistingFile);
  ovr->add_option("--duration", duration, "episode length in seconds");
  ovr->callback([&] {
    auto cfg = config_from(config_path);
    if (duration > 0.0) cfg.simulation.duration = duration;
    std::vector<std::pair<double, SimCommand>> cmds;
    if (script.empty()) {
      cmds = parse_override_script(std::cin);
    } else {
      std::ifstream in(script);
      cmds = parse_override_script(in);
    }
    ScheduledSource ov(std::move(cmds));
    std::optional<ScheduledSource> primary;
    std::optional<OverrideSource> merged;
    CommandSource* src = &ov;
    const fs::path dir = out;
    if (fs::exists(dir / artifact::kModel) && fs::exists(dir / artifact::kGraph)) {
      primary.emplace(predictor_schedule(load_graph(dir / artifact::kGraph).events, load_model(dir / artifact::kModel),
                                         cfg.supervision.min_shared));
      merged.emplace(&*primary, &ov);
      src = &*merged;
    }
    const auto setup = make_setup(cfg.arm, cfg.simulation.home, cfg.simulation.lambda0, cfg.simulation.target_offset_px);
    const auto& K = setup.scene.camera.K;
    const auto traj = run_episode(setup.arm, setup.scene, cfg.control, setup.initial,
                                  Setpoint{{K(0, 2), K(1, 2)}, cfg.simulation.lambda0}, src, cfg.simulation.duration);
    fs::create_directories(dir);
    save_trajectory(traj, dir / "trajectory_override.csv");
    double max_rcm = 0.0;
    for (const auto& r : traj.rows) {
      if (!r.command.empty()) std::cout << r.t << ' ' << r.command << '\n';
      max_rcm = std::max(max_rcm, r.rcm_error);
    }
    std::cout << "rows " << traj.rows.size() << " max_rcm_error " << max_rcm << '\n';
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violated: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
