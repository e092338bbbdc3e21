#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lapcam/camera_response.hpp"
#include "lapcam/event_graph.hpp"
#include "lapcam/events.hpp"
#include "lapcam/miner.hpp"
#include "lapcam/scenario.hpp"
#include "lapcam/sim.hpp"

namespace lapcam {

struct ScenarioSection {
  std::string kind = "modes";  // modes | detection | cleaning
  std::uint64_t seed = 31;
  int cycles = 10;         // modes
  double duration = 120.0;  // detection, s
  int height = 16;
  int width = 16;
  bool clean = false;

  Scenario build() const;
};

struct SupervisionSection {
  double rate_hz = 10.0;
  std::uint64_t seed = 7;
  int min_shared = 3;
};

struct SimulationSection {
  double duration = 30.0;
  double target_offset_px = 80.0;
  Eigen::VectorXd home = default_home();
  double lambda0 = 0.5;
  std::optional<std::filesystem::path> override_script;
};

struct PipelineConfig {
  ScenarioSection scenario;
  DetectorConfig detector;
  ResponseConfig response;
  GraphParams graph;
  MinerConfig miner;
  SupervisionSection supervision;
  ControlConfig control;
  ArmModel arm = ArmModel::default_arm();
  SimulationSection simulation;
  std::vector<int> ablation_grid{8, 10, 12, 14, 16};

  void validate() const;
};

PipelineConfig default_pipeline_config();

/// YAML with per-module sections; unknown keys are a ConfigError.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& yaml_text);

/// Artifact names inside an output directory.
namespace artifact {
inline constexpr const char* kStream = "stream.csv";
inline constexpr const char* kTruth = "truth.csv";
inline constexpr const char* kEvents = "events.csv";
inline constexpr const char* kResponded = "responded.csv";
inline constexpr const char* kGraph = "graph";
inline constexpr const char* kModel = "model";
inline constexpr const char* kSamples = "samples.csv";
inline constexpr const char* kTrajectory = "trajectory.csv";
inline constexpr const char* kEvaluation = "evaluation.json";
inline constexpr const char* kManifest = "manifest.json";
}  // namespace artifact

// Each stage reads only the serialized outputs of earlier stages from `dir`
// and throws DataError naming the stage when one is missing.
void stage_generate(const PipelineConfig& cfg, const std::filesystem::path& dir);
void stage_parse(const PipelineConfig& cfg, const std::filesystem::path& dir);
void stage_respond(const PipelineConfig& cfg, const std::filesystem::path& dir);
void stage_graph(const PipelineConfig& cfg, const std::filesystem::path& dir);
void stage_mine(const PipelineConfig& cfg, const std::filesystem::path& dir);
void stage_supervise(const PipelineConfig& cfg, const std::filesystem::path& dir);
void stage_simulate(const PipelineConfig& cfg, const std::filesystem::path& dir);
void stage_evaluate(const PipelineConfig& cfg, const std::filesystem::path& dir);

const std::vector<std::string>& stage_names();
void run_stage(const std::string& name, const PipelineConfig& cfg, const std::filesystem::path& dir);

/// Runs every stage from `from` onwards, then writes the manifest.
void run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& dir, const std::string& from = "generate");

std::string sha256_file(const std::filesystem::path& path);
/// Sorted relative path -> SHA-256 of every regular file except the manifest.
nlohmann::json build_manifest(const std::filesystem::path& dir);
void write_manifest(const std::filesystem::path& dir);

/// Planted mode of each event: the truth interval with the largest tIoU, -1 if none.
std::vector<int> truth_modes(const std::vector<EventRecord>& events, const std::vector<TruthEvent>& truth);

/// Angle of the interval-mean background flow, NaN without a valid response.
double flow_direction(const EventRecord& raw);

struct AblationRow {
  int k = 0;
  double purity = 0.0;
  double nmi = 0.0;
  double var_intra = 0.0;
  int empty_clusters = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  int best_k = 0;  // highest purity, ties to higher NMI, then smaller K
};

AblationReport ablate_k(const AttributedEventGraph& g, const std::vector<EventRecord>& raw,
                        const std::vector<int>& truth_mode, const MinerConfig& cfg, const std::vector<int>& grid);
void save_ablation(const AblationReport& r, const std::filesystem::path& path);

/// Predictor decisions on the event stream as timed simulator commands.
std::vector<std::pair<double, SimCommand>> predictor_schedule(const std::vector<EventRecord>& raw,
                                                              const StrategyModel& model, int min_shared);

}  // namespace lapcam
