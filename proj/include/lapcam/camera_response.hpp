#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lapcam/events.hpp"
#include "lapcam/signal.hpp"

namespace lapcam {

struct FlowSampleSet {
  std::vector<PixelPoint> points;
  std::vector<PixelPoint> vectors;  // (u, v) flow in px/frame
  int frame_index = 0;
};

struct MotionIncrement {
  double du = 0.0;
  double dv = 0.0;
  double dz = 0.0;
  bool valid = false;     // translation estimate usable
  bool dz_valid = false;
  double inlier_ratio = 0.0;
};

struct RansacConfig {
  double inlier_px = 1.5;
  int iters = 100;
  double min_inlier_frac = 0.5;
  std::uint64_t seed = 0;
};

struct BackgroundRegion {
  MaskGrid mask;
  double fraction = 0.0;
  bool valid = false;
};

/// not tool, not border, visible. `view_ok = false` empties the visibility
/// mask (frame below the sharpness threshold).
BackgroundRegion background_region(const SignalFrame& frame, const std::optional<MaskGrid>& border,
                                   int height, int width, bool view_ok = true,
                                   double min_fraction = 0.2);

FlowSampleSet background_samples(const SignalFrame& frame, const MaskGrid& region, int frame_index);

MotionIncrement fit_translation(const FlowSampleSet& samples, const RansacConfig& cfg);

/// z_tilde(t+1) - z_tilde(t); empty when either sample is invalid.
std::optional<double> axial_increment(const ScalarSeries& z_tilde, std::size_t t);

struct ResponseConfig {
  RansacConfig ransac;
  double min_valid_fraction = 0.2;
  // inlier_px is given at the reference resolution and scaled to the grid.
  double reference_resolution = 512.0;
};

/// One increment per frame: the camera motion from frame t to t+1.
std::vector<MotionIncrement> frame_increments(const SignalStream& stream, const StreamSignals& sig,
                                              const ResponseConfig& cfg);

struct IntervalResponse {
  CameraResponse response;
  int valid_increments = 0;
  double mean_inlier_ratio = 0.0;
};

/// Sums valid increments over frames of [t_s, t_e) and takes dz from the first
/// and last valid z_tilde samples inside the interval.
IntervalResponse aggregate_interval(const std::vector<MotionIncrement>& increments,
                                    const ScalarSeries& z_tilde, double t_s, double t_e);

/// Fills the action dimensions of every event of this stream.
std::vector<EventRecord> respond_events(const std::vector<EventRecord>& events, const SignalStream& stream,
                                        const DetectorConfig& dcfg, const ResponseConfig& cfg);

}  // namespace lapcam
