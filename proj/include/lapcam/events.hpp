#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lapcam/signal.hpp"

namespace lapcam {

enum class EventLabel { Interaction, DepthAdvance, DepthRetreat, VisibilityDegradation, LensContamination };

inline constexpr int kNumEventLabels = 5;

std::string_view label_name(EventLabel label);
EventLabel parse_label(std::string_view name);

inline constexpr int kDescriptorDim = 24;

/// Descriptor layout.
namespace desc {
inline constexpr int kToolSpeed = 0;    // mean, peak, var (px/s)
inline constexpr int kGrasperRate = 3;  // mean, peak, var of |dtheta/dt| (rad/s)
inline constexpr int kDeform = 6;       // mean, peak, var of S_def
inline constexpr int kDepthDir = 9;     // sign of the working-distance change
inline constexpr int kDepthAbs = 10;    // |dz| over the interval (mm)
inline constexpr int kDepthRate = 11;   // mean axial rate (mm/s)
inline constexpr int kSharpness = 12;   // q25, q50, q75 of F
inline constexpr int kContrast = 15;    // q25, q50, q75 of C
inline constexpr int kContam = 18;      // q25, q50, q75 of S_cont
inline constexpr int kAction = 21;      // du, dv (px), dz (mm)
}  // namespace desc

const std::array<const char*, kDescriptorDim>& descriptor_names();

using Descriptor = std::array<double, kDescriptorDim>;
using DescriptorMask = std::array<std::uint8_t, kDescriptorDim>;

struct EventRecord {
  std::string video_id;
  EventLabel label = EventLabel::Interaction;
  double t_s = 0.0;
  double t_e = 0.0;
  Descriptor x{};
  DescriptorMask mask{};
  nlohmann::json provenance = nlohmann::json::object();

  double duration() const { return t_e - t_s; }
  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

struct DetectorConfig {
  double tau_def = 1.8;
  double tau_p = 2.0;        // px/frame at the reference resolution
  double tau_theta = 0.05;   // rad/frame
  double delta_def_coeff = 1.2;  // Delta_def = coeff * tau_def * T_min * fps
  double tau_z = 2.0;        // mm/s
  double delta_min_coeff = 0.08;
  // Fixed view-quality thresholds; when unset they are calibrated per stream
  // as vq_scale * percentile(series, vq_percentile).
  std::optional<double> tau_F;
  std::optional<double> tau_C;
  double vq_percentile = 50.0;
  double vq_scale = 0.5;
  double tau_persist = 0.9;
  double tau_cont = 0.12;
  double t_min = 0.6;        // s
  double k_w = 0.8;          // s
  double r_act = 60.0;       // px at the reference resolution
  double bridge_gap = 0.3;   // s
  double hysteresis_ratio = 0.7;
  double eps = 1e-6;
  double cutoff_hz = 2.5;
  int savgol_window = 11;
  int savgol_degree = 3;
  double reference_resolution = 512.0;
  double severe_lowvis_frac = 0.5;  // of the ROI; such frames are occlusion gaps
  double restore_window = 2.0;      // s after a retreat to look for F/C recovery

  void validate() const;
  /// Grid pixels per reference pixel.
  double pixel_scale(int height, int width) const {
    return std::min(height, width) / reference_resolution;
  }
};

/// All per-frame series the detectors and descriptors read.
struct StreamSignals {
  double fps = 30.0;
  ScalarSeries s_def;
  ScalarSeries tool_speed;    // px/s
  ScalarSeries grasper_rate;  // rad/s, signed
  ScalarSeries z;             // raw working distance
  ScalarSeries z_tilde;
  ScalarSeries z_rate;        // mm/s
  ScalarSeries F;
  ScalarSeries C;
  ScalarSeries s_cont;
  double tau_F = 0.0;
  double tau_C = 0.0;
  std::vector<std::string> limitations;
};

// Per-frame series
ScalarSeries deformation_score_raw(const SignalStream& stream, const DetectorConfig& cfg);
ScalarSeries deformation_score(const SignalStream& stream, const DetectorConfig& cfg);
ScalarSeries working_distance_raw(const SignalStream& stream);
ScalarSeries working_distance(const SignalStream& stream, const DetectorConfig& cfg);
std::pair<ScalarSeries, ScalarSeries> view_quality_series(const SignalStream& stream);
ScalarSeries contamination_score(const SignalStream& stream, const DetectorConfig& cfg);

/// Time derivative (per second) by central differences, falling back to a
/// one-sided difference at run ends. Invalid where no stencil fits.
ScalarSeries derivative(const ScalarSeries& s);

StreamSignals compute_signals(const SignalStream& stream, const DetectorConfig& cfg);

// Detectors
std::vector<EventRecord> detect_interaction(const SignalStream& stream, const StreamSignals& sig,
                                            const DetectorConfig& cfg);
std::vector<EventRecord> detect_depth_change(const SignalStream& stream, const StreamSignals& sig,
                                             const DetectorConfig& cfg);
std::vector<EventRecord> detect_visibility_degradation(const SignalStream& stream,
                                                       const StreamSignals& sig,
                                                       const DetectorConfig& cfg);
/// `retreats` are used only to set the cleaning-confirmed flag in provenance.
std::vector<EventRecord> detect_contamination(const SignalStream& stream, const StreamSignals& sig,
                                              const DetectorConfig& cfg,
                                              const std::vector<EventRecord>& retreats = {});

std::vector<EventRecord> detect_interaction(const SignalStream& stream, const DetectorConfig& cfg);
std::vector<EventRecord> detect_depth_change(const SignalStream& stream, const DetectorConfig& cfg);
std::vector<EventRecord> detect_visibility_degradation(const SignalStream& stream,
                                                       const DetectorConfig& cfg);
std::vector<EventRecord> detect_contamination(const SignalStream& stream, const DetectorConfig& cfg);

/// Sorted by (t_s, label, t_e). Throws InvariantError on same-label overlap.
std::vector<EventRecord> fuse_events(const std::vector<std::vector<EventRecord>>& branches);

struct CameraResponse {
  std::optional<double> du;
  std::optional<double> dv;
  std::optional<double> dz;
};

/// Fills the state part of the descriptor from the stream series and the
/// action part from `response`. Dimensions are masked by event type and by
/// data availability.
EventRecord build_descriptor(const EventRecord& e, const StreamSignals& sig,
                             const std::optional<CameraResponse>& response);

/// Sets only the action dimensions.
void set_action(EventRecord& e, const std::optional<CameraResponse>& response);

/// Runs every detector, fuses and fills state descriptors (action masked).
std::vector<EventRecord> parse_stream(const SignalStream& stream, const DetectorConfig& cfg);

/// Within-video z-score, dataset-level [p5,p95] -> [-1,1] with clip at 1.5,
/// then row-wise l2 over valid dimensions.
std::vector<EventRecord> normalize_descriptors(const std::vector<EventRecord>& events);

// Event file
void save_events(const std::vector<EventRecord>& events, const std::filesystem::path& path);
std::vector<EventRecord> load_events(const std::filesystem::path& path);
std::string format_event_row(const EventRecord& e);

}  // namespace lapcam
