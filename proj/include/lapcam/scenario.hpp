#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lapcam/events.hpp"
#include "lapcam/signal.hpp"

namespace lapcam {

struct PlantedEvent {
  EventLabel label = EventLabel::Interaction;
  double t_s = 0.0;
  double t_e = 0.0;
  int mode = -1;           // planted strategy mode, -1 when not part of one
  double pan_u = 0.0;      // camera pan during the event, px/frame
  double pan_v = 0.0;
  double dz = 0.0;         // depth ramps: working-distance change, mm
  double coverage = 0.15;  // contamination: fraction of the ROI covered
};

/// Working-distance change with no event expected (slow enough to stay
/// under the depth-rate threshold).
struct DepthDrift {
  double t_s = 0.0;
  double t_e = 0.0;
  double dz = 0.0;
};

struct NoiseConfig {
  double flow = 0.02;           // px/frame
  double depth = 1.0;           // mm
  double intensity = 2.0;
  double lowvis_flicker = 0.02;  // per-pixel, per-frame probability
  double respiration = 0.005;   // px/frame, rotating background motion
};

struct Scenario {
  std::uint64_t seed = 1;
  std::string video_id = "synthetic";
  double duration = 60.0;
  double fps = 30.0;
  int height = 16;
  int width = 16;
  double z0 = 100.0;
  std::vector<PlantedEvent> planted;
  std::vector<DepthDrift> drifts;
  NoiseConfig noise;
  bool clean = false;  // zero channel noise; respiration is kept

  /// Throws ConfigError on out-of-range or overlapping same-label plants.
  void validate() const;
};

struct TruthEvent {
  std::string video_id;
  EventLabel label = EventLabel::Interaction;
  double t_s = 0.0;
  double t_e = 0.0;
  int mode = -1;
  double du = 0.0;
  double dv = 0.0;
  double dz = 0.0;
  friend bool operator==(const TruthEvent&, const TruthEvent&) = default;
};

struct GeneratedScenario {
  SignalStream stream;
  std::vector<TruthEvent> truth;
};

GeneratedScenario generate_scenario(const Scenario& spec);

void save_truth(const std::vector<TruthEvent>& truth, const std::filesystem::path& path);
std::vector<TruthEvent> load_truth(const std::filesystem::path& path);

/// Repeating cycle of all five event types.
Scenario detection_scenario(std::uint64_t seed, double duration, bool clean, int height = 16,
                            int width = 16);

/// Three planted strategy modes: interaction with a rightward pan, controlled
/// depth advance, and lens contamination with a static camera.
Scenario mode_scenario(std::uint64_t seed, int cycles, int height = 16, int width = 16);

/// Contamination under fog, followed by a retreat during which the fog lifts.
Scenario cleaning_scenario(std::uint64_t seed);

}  // namespace lapcam
