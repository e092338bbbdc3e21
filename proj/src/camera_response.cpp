#include "lapcam/camera_response.hpp"
#include "lapcam/stats.hpp"

#include <cmath>
#include <random>

namespace lapcam {

BackgroundRegion background_region(const SignalFrame& frame, const std::optional<MaskGrid>& border,
                                   int height, int width, bool view_ok, double min_fraction) {
  BackgroundRegion out;
  out.mask = MaskGrid(height, width, 0);
  if (!view_ok) return out;
  std::size_t on = 0;
  for (std::size_t p = 0; p < out.mask.size(); ++p) {
    const bool tool = frame.tool_mask && (*frame.tool_mask)[p];
    const bool edge = border && (*border)[p];
    const bool hidden = frame.low_vis && (*frame.low_vis)[p];
    if (!tool && !edge && !hidden) {
      out.mask[p] = 1;
      ++on;
    }
  }
  out.fraction = out.mask.size() ? static_cast<double>(on) / static_cast<double>(out.mask.size()) : 0.0;
  out.valid = out.fraction >= min_fraction;
  return out;
}

FlowSampleSet background_samples(const SignalFrame& frame, const MaskGrid& region, int frame_index) {
  FlowSampleSet s;
  s.frame_index = frame_index;
  if (!frame.flow) return s;
  for (int r = 0; r < region.rows(); ++r) {
    for (int c = 0; c < region.cols(); ++c) {
      if (!region(r, c)) continue;
      const auto& f = (*frame.flow)(r, c);
      s.points.push_back({static_cast<double>(c), static_cast<double>(r)});
      s.vectors.push_back({f.u, f.v});
    }
  }
  return s;
}

MotionIncrement fit_translation(const FlowSampleSet& samples, const RansacConfig& cfg) {
  require_config(cfg.inlier_px > 0.0 && cfg.iters > 0, "RANSAC needs inlier_px > 0 and iters > 0");
  MotionIncrement m;
  const auto& v = samples.vectors;
  const std::size_t n = v.size();
  if (n < 3) return m;

  std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(samples.frame_index) + 1);
  const double thr2 = cfg.inlier_px * cfg.inlier_px;
  std::size_t best_count = 0;
  std::size_t best_idx = 0;
  for (int it = 0; it < cfg.iters; ++it) {
    const std::size_t j = static_cast<std::size_t>(rng() % n);
    std::size_t count = 0;
    for (const auto& x : v) {
      const double du = x.u - v[j].u;
      const double dv = x.v - v[j].v;
      if (du * du + dv * dv <= thr2) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best_idx = j;
    }
  }
  double su = 0.0, sv = 0.0;
  for (const auto& x : v) {
    const double du = x.u - v[best_idx].u;
    const double dv = x.v - v[best_idx].v;
    if (du * du + dv * dv <= thr2) {
      su += x.u;
      sv += x.v;
    }
  }
  m.du = su / static_cast<double>(best_count);
  m.dv = sv / static_cast<double>(best_count);
  m.inlier_ratio = static_cast<double>(best_count) / static_cast<double>(n);
  m.valid = m.inlier_ratio >= cfg.min_inlier_frac;
  return m;
}

std::optional<double> axial_increment(const ScalarSeries& z_tilde, std::size_t t) {
  if (t + 1 >= z_tilde.size() || !z_tilde.valid[t] || !z_tilde.valid[t + 1]) return std::nullopt;
  return z_tilde.v[t + 1] - z_tilde.v[t];
}

std::vector<MotionIncrement> frame_increments(const SignalStream& stream, const StreamSignals& sig,
                                              const ResponseConfig& cfg) {
  RansacConfig rc = cfg.ransac;
  rc.inlier_px *= std::min(stream.height, stream.width) / cfg.reference_resolution;
  std::vector<MotionIncrement> out(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto& f = stream.frames[i];
    const bool view_ok = sig.F.valid[i] && sig.F.v[i] >= sig.tau_F;
    const auto bg = background_region(f, stream.border_mask, stream.height, stream.width, view_ok,
                                      cfg.min_valid_fraction);
    MotionIncrement m;
    if (bg.valid && f.flow && i + 1 < stream.size()) {
      m = fit_translation(background_samples(f, bg.mask, static_cast<int>(i)), rc);
    }
    if (const auto dz = axial_increment(sig.z_tilde, i)) {
      m.dz = *dz;
      m.dz_valid = true;
    }
    out[i] = m;
  }
  return out;
}

IntervalResponse aggregate_interval(const std::vector<MotionIncrement>& increments,
                                    const ScalarSeries& z_tilde, double t_s, double t_e) {
  const auto& t = z_tilde.t;
  const auto b = static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), t_s - 1e-9) - t.begin());
  const auto e = static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), t_e - 1e-9) - t.begin());
  require_config(b <= e && e <= increments.size(), "interval outside the stream");

  IntervalResponse out;
  double su = 0.0, sv = 0.0, ratio = 0.0;
  for (std::size_t k = b; k < e; ++k) {
    if (!increments[k].valid) continue;
    su += increments[k].du;
    sv += increments[k].dv;
    ratio += increments[k].inlier_ratio;
    ++out.valid_increments;
  }
  if (out.valid_increments > 0) {
    out.response.du = su;
    out.response.dv = sv;
    out.mean_inlier_ratio = ratio / out.valid_increments;
  }
  std::optional<std::size_t> first, last;
  for (std::size_t k = b; k < e; ++k) {
    if (!z_tilde.valid[k]) continue;
    if (!first) first = k;
    last = k;
  }
  if (first) out.response.dz = z_tilde.v[*last] - z_tilde.v[*first];
  return out;
}

std::vector<EventRecord> respond_events(const std::vector<EventRecord>& events, const SignalStream& stream,
                                        const DetectorConfig& dcfg, const ResponseConfig& cfg) {
  const auto sig = compute_signals(stream, dcfg);
  const auto inc = frame_increments(stream, sig, cfg);
  std::vector<EventRecord> out = events;
  std::vector<double> zs;
  for (std::size_t i = 0; i < sig.z_tilde.v.size(); ++i) {
    if (sig.z_tilde.valid[i]) zs.push_back(sig.z_tilde.v[i]);
  }
  const double pixel_scale = std::min(stream.height, stream.width) / 512.0;
  for (auto& e : out) {
    if (e.video_id != stream.video_id) continue;
    const auto r = aggregate_interval(inc, sig.z_tilde, e.t_s, e.t_e);
    set_action(e, r.response);
    e.provenance["valid_increments"] = r.valid_increments;
    e.provenance["inlier_ratio"] = r.mean_inlier_ratio;
    e.provenance["pixel_scale"] = pixel_scale;
    if (!zs.empty()) e.provenance["working_distance"] = stats::median(zs);
  }
  return out;
}

}  // namespace lapcam
