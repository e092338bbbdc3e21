#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lapcam/common.hpp"

namespace lapcam {

/// Row-major H x W grid.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

struct Flow {
  float u = 0.0f;
  float v = 0.0f;
  friend bool operator==(const Flow&, const Flow&) = default;
};

using RealGrid = Grid<float>;
using MaskGrid = Grid<std::uint8_t>;
using FlowGrid = Grid<Flow>;

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

/// One timestamped sample of every per-frame channel. Channels that were not
/// recorded stay empty; nothing is zero-filled.
struct SignalFrame {
  double t = 0.0;
  std::optional<PixelPoint> tool_tip;
  std::optional<double> grasper_angle;
  std::optional<FlowGrid> flow;  // pixels/frame, motion from this frame to the next
  std::optional<RealGrid> depth;      // mm
  std::optional<RealGrid> intensity;  // 0-255 equivalent
  std::optional<MaskGrid> low_vis;
  std::optional<MaskGrid> tool_mask;
  std::optional<MaskGrid> surg_roi;

  friend bool operator==(const SignalFrame&, const SignalFrame&) = default;
};

struct SignalStream {
  std::string video_id;
  double fps = 30.0;
  int height = 0;
  int width = 0;
  std::vector<SignalFrame> frames;
  std::optional<MaskGrid> border_mask;  // fixed per stream, stored in a sidecar file

  std::size_t size() const noexcept { return frames.size(); }
  std::vector<double> times() const;

  /// Index of the first frame with t >= time (clamped to size()).
  std::size_t index_at(double time) const;

  /// Throws IntegrityError / DataError on any violated stream invariant.
  void validate() const;

  friend bool operator==(const SignalStream&, const SignalStream&) = default;
};

/// A per-frame scalar signal with per-sample validity.
struct ScalarSeries {
  std::vector<double> t;
  std::vector<double> v;
  std::vector<bool> valid;

  ScalarSeries() = default;
  explicit ScalarSeries(std::vector<double> times)
      : t(std::move(times)), v(t.size(), 0.0), valid(t.size(), false) {}

  std::size_t size() const noexcept { return t.size(); }
  void set(std::size_t i, double value) {
    v[i] = value;
    valid[i] = true;
  }
  void invalidate(std::size_t i) {
    v[i] = 0.0;
    valid[i] = false;
  }
  std::size_t valid_count() const;
  void check() const;
};

// ---------------------------------------------------------------------------
// Stream file I/O

inline const std::vector<std::string>& all_stream_columns() {
  static const std::vector<std::string> cols = {"t",     "tool_u",    "tool_v", "theta",
                                                "flow",  "depth",     "intensity",
                                                "lowvis", "toolmask", "surgroi"};
  return cols;
}

/// Which column groups a stream file carries. Empty means "take them from the
/// file header, or the full set if the header does not list them".
struct StreamSchema {
  std::vector<std::string> columns;
};

SignalStream load_stream(const std::filesystem::path& path, const StreamSchema& schema = {});

/// Writes the stream and, when present, its border mask to `<path>.border`.
/// Columns whose channel is absent in every frame are dropped from the header.
void save_stream(const SignalStream& stream, const std::filesystem::path& path);

std::filesystem::path border_sidecar_path(const std::filesystem::path& stream_path);

// ---------------------------------------------------------------------------
// Temporal filters

/// Savitzky-Golay smoothing. Each maximal run of valid samples is filtered on
/// its own; near run ends the local polynomial fit of the first/last window is
/// evaluated, so polynomials of order <= degree pass through unchanged.
ScalarSeries savgol_smooth(const ScalarSeries& s, int window = 11, int degree = 3);

/// Second-order Butterworth low-pass run forward and backward. Valid runs are
/// filtered independently with odd-reflection padding.
ScalarSeries lowpass_zero_phase(const ScalarSeries& s, double cutoff_hz, double fps);

}  // namespace lapcam
