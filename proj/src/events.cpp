#include "lapcam/events.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "lapcam/stats.hpp"
#include "lapcam/text_io.hpp"

namespace lapcam {

namespace {

constexpr std::array<std::string_view, kNumEventLabels> kLabelNames = {
    "Interaction", "DepthAdvance", "DepthRetreat", "VisibilityDegradation", "LensContamination"};

}  // namespace

std::string_view label_name(EventLabel label) {
  return kLabelNames[static_cast<std::size_t>(label)];
}

EventLabel parse_label(std::string_view name) {
  for (std::size_t i = 0; i < kLabelNames.size(); ++i) {
    if (kLabelNames[i] == name) return static_cast<EventLabel>(i);
  }
  throw DataError("unknown event label '" + std::string(name) + "'");
}

const std::array<const char*, kDescriptorDim>& descriptor_names() {
  static const std::array<const char*, kDescriptorDim> names = {
      "speed_mean", "speed_peak", "speed_var", "grasp_mean", "grasp_peak", "grasp_var",
      "sdef_mean",  "sdef_peak",  "sdef_var",  "depth_dir",  "depth_abs",  "depth_rate",
      "F_q25",      "F_q50",      "F_q75",     "C_q25",      "C_q50",      "C_q75",
      "cont_q25",   "cont_q50",   "cont_q75",  "du",         "dv",         "dz"};
  return names;
}

void DetectorConfig::validate() const {
  for (double x : {tau_def, tau_p, tau_theta, delta_def_coeff, tau_z, delta_min_coeff, tau_persist,
                   tau_cont, t_min, k_w, r_act, bridge_gap, eps, cutoff_hz, vq_scale,
                   reference_resolution, restore_window}) {
    require_config(x > 0.0 && std::isfinite(x), "detector thresholds must be positive");
  }
  require_config(hysteresis_ratio > 0.0 && hysteresis_ratio < 1.0, "hysteresis_ratio must lie in (0,1)");
  require_config(tau_persist <= 1.0, "tau_persist must lie in (0,1]");
  require_config(vq_percentile >= 0.0 && vq_percentile <= 100.0, "vq_percentile must lie in [0,100]");
  require_config(!tau_F || *tau_F > 0.0, "tau_F must be positive");
  require_config(!tau_C || *tau_C > 0.0, "tau_C must be positive");
  require_config(severe_lowvis_frac > 0.0 && severe_lowvis_frac <= 1.0,
                 "severe_lowvis_frac must lie in (0,1]");
}

namespace {

struct Run {
  std::size_t b = 0;
  std::size_t e = 0;  // exclusive
  std::size_t len() const { return e - b; }
};

std::vector<Run> runs_of(const std::vector<bool>& on) {
  std::vector<Run> runs;
  std::size_t i = 0;
  while (i < on.size()) {
    if (!on[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < on.size() && on[j]) ++j;
    runs.push_back({i, j});
    i = j;
  }
  return runs;
}

bool in_roi(const SignalFrame& f, std::size_t i) {
  return !f.surg_roi || (*f.surg_roi)[i] != 0;
}

double interval_end(const std::vector<double>& t, std::size_t e, double fps) {
  return t[e - 1] + 1.0 / fps;
}

/// Frame range [b, e) covered by [t_s, t_e).
Run frames_of(const std::vector<double>& t, double t_s, double t_e) {
  const auto lo = std::lower_bound(t.begin(), t.end(), t_s - 1e-9);
  const auto hi = std::lower_bound(t.begin(), t.end(), t_e - 1e-9);
  return {static_cast<std::size_t>(lo - t.begin()), static_cast<std::size_t>(hi - t.begin())};
}

EventRecord make_event(const std::string& video, EventLabel label, const std::vector<double>& t,
                       const Run& r, double fps) {
  EventRecord e;
  e.video_id = video;
  e.label = label;
  e.t_s = t[r.b];
  e.t_e = interval_end(t, r.e, fps);
  return e;
}

double duration_of(const Run& r, double fps) { return static_cast<double>(r.len()) / fps; }

}  // namespace

// ---------------------------------------------------------------------------
// Per-frame series

ScalarSeries derivative(const ScalarSeries& s) {
  ScalarSeries d(s.t);
  const std::size_t n = s.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!s.valid[i]) continue;
    const bool has_prev = i > 0 && s.valid[i - 1];
    const bool has_next = i + 1 < n && s.valid[i + 1];
    if (has_prev && has_next) {
      d.set(i, (s.v[i + 1] - s.v[i - 1]) / (s.t[i + 1] - s.t[i - 1]));
    } else if (has_next) {
      d.set(i, (s.v[i + 1] - s.v[i]) / (s.t[i + 1] - s.t[i]));
    } else if (has_prev) {
      d.set(i, (s.v[i] - s.v[i - 1]) / (s.t[i] - s.t[i - 1]));
    }
  }
  return d;
}

ScalarSeries deformation_score_raw(const SignalStream& stream, const DetectorConfig& cfg) {
  ScalarSeries out(stream.times());
  const int h = stream.height;
  const int w = stream.width;
  const double r = cfg.r_act * cfg.pixel_scale(h, w);
  std::vector<double> near, ref;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto& f = stream.frames[i];
    if (!f.flow || !f.tool_tip) continue;
    if (f.low_vis) {
      std::size_t roi = 0, low = 0;
      for (std::size_t p = 0; p < f.low_vis->size(); ++p) {
        if (!in_roi(f, p)) continue;
        ++roi;
        low += (*f.low_vis)[p];
      }
      if (roi > 0 && static_cast<double>(low) > cfg.severe_lowvis_frac * static_cast<double>(roi)) continue;
    }
    near.clear();
    ref.clear();
    const double tu = f.tool_tip->u;
    const double tv = f.tool_tip->v;
    for (int row = 0; row < h; ++row) {
      for (int col = 0; col < w; ++col) {
        const std::size_t p = static_cast<std::size_t>(row) * w + col;
        const auto& fl = (*f.flow)[p];
        const double mag = std::hypot(static_cast<double>(fl.u), static_cast<double>(fl.v));
        const double du = col - tu;
        const double dv = row - tv;
        if (du * du + dv * dv <= r * r) {
          near.push_back(mag);
        } else if (in_roi(f, p) && !(f.tool_mask && (*f.tool_mask)[p])) {
          ref.push_back(mag);
        }
      }
    }
    if (near.empty() || ref.empty()) continue;
    out.set(i, stats::median_inplace(near) / (stats::median_inplace(ref) + cfg.eps));
  }
  return out;
}

ScalarSeries deformation_score(const SignalStream& stream, const DetectorConfig& cfg) {
  return savgol_smooth(deformation_score_raw(stream, cfg), cfg.savgol_window, cfg.savgol_degree);
}

ScalarSeries working_distance_raw(const SignalStream& stream) {
  ScalarSeries z(stream.times());
  std::vector<double> vals;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto& f = stream.frames[i];
    if (!f.depth) continue;
    vals.clear();
    for (std::size_t p = 0; p < f.depth->size(); ++p) {
      const double d = (*f.depth)[p];
      if (in_roi(f, p) && std::isfinite(d)) vals.push_back(d);
    }
    if (!vals.empty()) z.set(i, stats::median_inplace(vals));
  }
  return z;
}

ScalarSeries working_distance(const SignalStream& stream, const DetectorConfig& cfg) {
  return lowpass_zero_phase(working_distance_raw(stream), cfg.cutoff_hz, stream.fps);
}

std::pair<ScalarSeries, ScalarSeries> view_quality_series(const SignalStream& stream) {
  ScalarSeries F(stream.times());
  ScalarSeries C(stream.times());
  const int h = stream.height;
  const int w = stream.width;
  std::vector<double> mags;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto& f = stream.frames[i];
    if (!f.intensity) continue;
    const auto& img = *f.intensity;
    const auto grad = [&](int row, int col, bool along_cols) {
      const int n = along_cols ? w : h;
      const int k = along_cols ? col : row;
      if (n < 2) return 0.0;
      const auto at = [&](int j) {
        return static_cast<double>(along_cols ? img(row, j) : img(j, col));
      };
      if (k == 0) return at(1) - at(0);
      if (k == n - 1) return at(n - 1) - at(n - 2);
      return 0.5 * (at(k + 1) - at(k - 1));
    };
    mags.clear();
    double sum = 0.0;
    std::vector<double> roi_vals;
    for (int row = 0; row < h; ++row) {
      for (int col = 0; col < w; ++col) {
        const std::size_t p = static_cast<std::size_t>(row) * w + col;
        if (!in_roi(f, p)) continue;
        mags.push_back(std::hypot(grad(row, col, true), grad(row, col, false)));
        roi_vals.push_back(img[p]);
        sum += img[p];
      }
    }
    if (mags.empty()) continue;
    F.set(i, stats::median_inplace(mags));
    const double mu = sum / static_cast<double>(roi_vals.size());
    if (mu != 0.0) {
      double acc = 0.0;
      for (double x : roi_vals) acc += (x - mu) * (x - mu);
      C.set(i, std::sqrt(acc / static_cast<double>(roi_vals.size())) / mu);
    }
  }
  return {F, C};
}

ScalarSeries contamination_score(const SignalStream& stream, const DetectorConfig& cfg) {
  ScalarSeries s(stream.times());
  const auto k = static_cast<std::size_t>(std::ceil(cfg.k_w * stream.fps - 1e-9));
  const std::size_t npix = static_cast<std::size_t>(stream.height) * stream.width;
  std::vector<int> count(npix, 0);
  std::size_t missing = 0;
  const auto add = [&](const SignalFrame& f, int sign) {
    if (!f.low_vis) {
      missing = sign > 0 ? missing + 1 : missing - 1;
      return;
    }
    for (std::size_t p = 0; p < npix; ++p) count[p] += sign * (*f.low_vis)[p];
  };
  for (std::size_t i = 0; i < stream.size(); ++i) {
    add(stream.frames[i], +1);
    if (i >= k) add(stream.frames[i - k], -1);
    if (i + 1 < k || missing > 0) continue;
    const auto& f = stream.frames[i];
    std::size_t roi = 0, hit = 0;
    for (std::size_t p = 0; p < npix; ++p) {
      if (!in_roi(f, p)) continue;
      ++roi;
      if (static_cast<double>(count[p]) / static_cast<double>(k) > cfg.tau_persist) ++hit;
    }
    if (roi > 0) s.set(i, static_cast<double>(hit) / static_cast<double>(roi));
  }
  return s;
}

StreamSignals compute_signals(const SignalStream& stream, const DetectorConfig& cfg) {
  cfg.validate();
  StreamSignals sig;
  sig.fps = stream.fps;
  const auto t = stream.times();

  const auto has = [&](auto pred) { return std::any_of(stream.frames.begin(), stream.frames.end(), pred); };
  if (!has([](const SignalFrame& f) { return f.flow.has_value(); })) sig.limitations.emplace_back("flow absent");
  if (!has([](const SignalFrame& f) { return f.tool_tip.has_value(); })) sig.limitations.emplace_back("tool_tip absent");
  if (!has([](const SignalFrame& f) { return f.grasper_angle.has_value(); })) sig.limitations.emplace_back("grasper_angle absent");
  if (!has([](const SignalFrame& f) { return f.tool_mask.has_value(); })) sig.limitations.emplace_back("tool_mask absent");
  if (!has([](const SignalFrame& f) { return f.depth.has_value(); })) sig.limitations.emplace_back("depth absent");
  if (!has([](const SignalFrame& f) { return f.intensity.has_value(); })) sig.limitations.emplace_back("intensity absent");
  if (!has([](const SignalFrame& f) { return f.low_vis.has_value(); })) sig.limitations.emplace_back("low_vis absent");
  if (!has([](const SignalFrame& f) { return f.surg_roi.has_value(); })) sig.limitations.emplace_back("surg_roi absent, full grid used");

  sig.s_def = deformation_score(stream, cfg);

  ScalarSeries tu(t), tv(t), theta(t);
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto& f = stream.frames[i];
    if (f.tool_tip) {
      tu.set(i, f.tool_tip->u);
      tv.set(i, f.tool_tip->v);
    }
    if (f.grasper_angle) theta.set(i, *f.grasper_angle);
  }
  const auto du = derivative(tu);
  const auto dv = derivative(tv);
  sig.tool_speed = ScalarSeries(t);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (du.valid[i] && dv.valid[i]) sig.tool_speed.set(i, std::hypot(du.v[i], dv.v[i]));
  }
  sig.grasper_rate = derivative(theta);

  sig.z = working_distance_raw(stream);
  sig.z_tilde = lowpass_zero_phase(sig.z, cfg.cutoff_hz, stream.fps);
  sig.z_rate = derivative(sig.z_tilde);

  auto [F, C] = view_quality_series(stream);
  sig.F = std::move(F);
  sig.C = std::move(C);
  const auto calibrate = [&](const ScalarSeries& s) {
    std::vector<double> vals;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.valid[i]) vals.push_back(s.v[i]);
    }
    return cfg.vq_scale * stats::percentile(vals, cfg.vq_percentile);
  };
  sig.tau_F = cfg.tau_F ? *cfg.tau_F : calibrate(sig.F);
  sig.tau_C = cfg.tau_C ? *cfg.tau_C : calibrate(sig.C);

  sig.s_cont = contamination_score(stream, cfg);
  return sig;
}

// ---------------------------------------------------------------------------
// Detectors

std::vector<EventRecord> detect_interaction(const SignalStream& stream, const StreamSignals& sig,
                                            const DetectorConfig& cfg) {
  const auto& s = sig.s_def;
  const std::size_t n = s.size();
  const double tau_p_frame = cfg.tau_p * cfg.pixel_scale(stream.height, stream.width);
  const bool speed_known = sig.tool_speed.valid_count() > 0;
  const bool rate_known = sig.grasper_rate.valid_count() > 0;

  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (!s.valid[i] || !(s.v[i] > cfg.tau_def)) continue;
    bool intent = !speed_known && !rate_known;
    if (speed_known && sig.tool_speed.valid[i] && sig.tool_speed.v[i] / sig.fps > tau_p_frame) intent = true;
    if (rate_known && sig.grasper_rate.valid[i] &&
        std::abs(sig.grasper_rate.v[i]) / sig.fps > cfg.tau_theta) {
      intent = true;
    }
    core[i] = intent;
  }

  auto runs = runs_of(core);
  const auto max_gap = static_cast<std::size_t>(std::llround(cfg.bridge_gap * sig.fps));
  const double floor = cfg.hysteresis_ratio * cfg.tau_def;
  std::vector<Run> merged;
  for (const auto& r : runs) {
    if (!merged.empty()) {
      auto& last = merged.back();
      const std::size_t gap = r.b - last.e;
      bool bridge = gap <= max_gap;
      for (std::size_t k = last.e; bridge && k < r.b; ++k) bridge = s.valid[k] && s.v[k] > floor;
      if (bridge) {
        last.e = r.e;
        continue;
      }
    }
    merged.push_back(r);
  }

  const double delta_def = cfg.delta_def_coeff * cfg.tau_def * cfg.t_min * sig.fps;
  std::vector<EventRecord> out;
  for (const auto& r : merged) {
    if (duration_of(r, sig.fps) < cfg.t_min - 1e-9) continue;
    double energy = 0.0, peak = 0.0;
    for (std::size_t k = r.b; k < r.e; ++k) {
      if (!s.valid[k]) continue;
      energy += s.v[k];
      peak = std::max(peak, s.v[k]);
    }
    if (!(energy > delta_def)) continue;
    auto e = make_event(stream.video_id, EventLabel::Interaction, s.t, r, sig.fps);
    e.provenance["detector"] = "interaction";
    e.provenance["energy"] = energy;
    e.provenance["peak_sdef"] = peak;
    e.provenance["tau_def"] = cfg.tau_def;
    e.provenance["delta_def"] = delta_def;
    std::vector<std::string> lim;
    if (!speed_known) lim.emplace_back("tool speed unavailable");
    if (!rate_known) lim.emplace_back("grasper rate unavailable");
    e.provenance["limitations"] = lim;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<EventRecord> detect_depth_change(const SignalStream& stream, const StreamSignals& sig,
                                             const DetectorConfig& cfg) {
  const auto& zr = sig.z_rate;
  const auto& zt = sig.z_tilde;
  const std::size_t n = zr.size();
  std::vector<double> zvals;
  for (std::size_t i = 0; i < sig.z.size(); ++i) {
    if (sig.z.valid[i]) zvals.push_back(sig.z.v[i]);
  }
  if (zvals.empty()) return {};
  const double delta_min = cfg.delta_min_coeff * stats::median(zvals);

  std::vector<EventRecord> out;
  for (int sign : {-1, +1}) {
    std::vector<bool> on(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      on[i] = zr.valid[i] && zt.valid[i] && sign * zr.v[i] > cfg.tau_z;
    }
    for (const auto& r : runs_of(on)) {
      if (duration_of(r, sig.fps) < cfg.t_min - 1e-9) continue;
      const double dz = zt.v[r.e - 1] - zt.v[r.b];
      if (!(std::abs(dz) > delta_min)) continue;
      auto e = make_event(stream.video_id, sign < 0 ? EventLabel::DepthAdvance : EventLabel::DepthRetreat,
                          zt.t, r, sig.fps);
      e.provenance["detector"] = "depth";
      e.provenance["dz"] = dz;
      e.provenance["delta_min"] = delta_min;
      e.provenance["tau_z"] = cfg.tau_z;
      out.push_back(std::move(e));
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t_s < b.t_s; });
  return out;
}

std::vector<EventRecord> detect_visibility_degradation(const SignalStream& stream,
                                                       const StreamSignals& sig,
                                                       const DetectorConfig& cfg) {
  const auto& F = sig.F;
  const auto& C = sig.C;
  const std::size_t n = F.size();
  if (sig.tau_F <= 0.0 || sig.tau_C <= 0.0) return {};
  const double exit_F = sig.tau_F / cfg.hysteresis_ratio;
  const double exit_C = sig.tau_C / cfg.hysteresis_ratio;

  std::vector<bool> on(n, false);
  bool active = false;
  for (std::size_t i = 0; i < n; ++i) {
    const bool ok = F.valid[i] && C.valid[i];
    if (!active) {
      active = ok && F.v[i] < sig.tau_F && C.v[i] < sig.tau_C;
    } else {
      active = ok && F.v[i] < exit_F && C.v[i] < exit_C;
    }
    on[i] = active;
  }
  std::vector<EventRecord> out;
  for (const auto& r : runs_of(on)) {
    if (duration_of(r, sig.fps) < cfg.t_min - 1e-9) continue;
    auto e = make_event(stream.video_id, EventLabel::VisibilityDegradation, F.t, r, sig.fps);
    double fmin = F.v[r.b], cmin = C.v[r.b];
    for (std::size_t k = r.b; k < r.e; ++k) {
      fmin = std::min(fmin, F.v[k]);
      cmin = std::min(cmin, C.v[k]);
    }
    e.provenance["detector"] = "visibility";
    e.provenance["tau_F"] = sig.tau_F;
    e.provenance["tau_C"] = sig.tau_C;
    e.provenance["min_F"] = fmin;
    e.provenance["min_C"] = cmin;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<EventRecord> detect_contamination(const SignalStream& stream, const StreamSignals& sig,
                                              const DetectorConfig& cfg,
                                              const std::vector<EventRecord>& retreats) {
  const auto& s = sig.s_cont;
  const std::size_t n = s.size();
  std::vector<bool> on(n, false);
  for (std::size_t i = 0; i < n; ++i) on[i] = s.valid[i] && s.v[i] > cfg.tau_cont;

  const auto clear = [&](std::size_t i) {
    return sig.F.valid[i] && sig.C.valid[i] && sig.F.v[i] > sig.tau_F && sig.C.v[i] > sig.tau_C;
  };

  std::vector<EventRecord> out;
  for (const auto& r : runs_of(on)) {
    if (duration_of(r, sig.fps) < cfg.t_min - 1e-9) continue;
    auto e = make_event(stream.video_id, EventLabel::LensContamination, s.t, r, sig.fps);
    double peak = 0.0;
    for (std::size_t k = r.b; k < r.e; ++k) peak = std::max(peak, s.v[k]);

    bool confirmed = false;
    double restored_at = 0.0;
    for (const auto& rt : retreats) {
      if (rt.label != EventLabel::DepthRetreat || rt.t_s < e.t_s - 1e-9) continue;
      const auto w = frames_of(s.t, rt.t_s, rt.t_e + cfg.restore_window);
      for (std::size_t k = std::max<std::size_t>(w.b, 1); k < w.e; ++k) {
        if (clear(k) && !clear(k - 1)) {
          confirmed = true;
          restored_at = s.t[k];
          break;
        }
      }
      if (confirmed) break;
    }
    e.provenance["detector"] = "contamination";
    e.provenance["peak_scont"] = peak;
    e.provenance["tau_cont"] = cfg.tau_cont;
    e.provenance["confirmed"] = confirmed;
    if (confirmed) e.provenance["restored_at"] = restored_at;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<EventRecord> detect_interaction(const SignalStream& stream, const DetectorConfig& cfg) {
  return detect_interaction(stream, compute_signals(stream, cfg), cfg);
}

std::vector<EventRecord> detect_depth_change(const SignalStream& stream, const DetectorConfig& cfg) {
  return detect_depth_change(stream, compute_signals(stream, cfg), cfg);
}

std::vector<EventRecord> detect_visibility_degradation(const SignalStream& stream,
                                                       const DetectorConfig& cfg) {
  return detect_visibility_degradation(stream, compute_signals(stream, cfg), cfg);
}

std::vector<EventRecord> detect_contamination(const SignalStream& stream, const DetectorConfig& cfg) {
  const auto sig = compute_signals(stream, cfg);
  return detect_contamination(stream, sig, cfg, detect_depth_change(stream, sig, cfg));
}

std::vector<EventRecord> fuse_events(const std::vector<std::vector<EventRecord>>& branches) {
  std::vector<EventRecord> all;
  for (const auto& b : branches) all.insert(all.end(), b.begin(), b.end());
  std::stable_sort(all.begin(), all.end(), [](const EventRecord& a, const EventRecord& b) {
    if (a.video_id != b.video_id) return a.video_id < b.video_id;
    if (a.t_s != b.t_s) return a.t_s < b.t_s;
    if (a.label != b.label) return a.label < b.label;
    return a.t_e < b.t_e;
  });
  for (int l = 0; l < kNumEventLabels; ++l) {
    const EventRecord* prev = nullptr;
    for (const auto& e : all) {
      if (static_cast<int>(e.label) != l) continue;
      if (prev && prev->video_id == e.video_id) {
        require_invariant(e.t_s >= prev->t_e - 1e-9,
                          "overlapping " + std::string(label_name(e.label)) + " events at t=" +
                              text::format(e.t_s));
      }
      prev = &e;
    }
  }
  return all;
}

// ---------------------------------------------------------------------------
// Descriptors

namespace {

struct Summary {
  bool any = false;
  double mean = 0.0;
  double peak = 0.0;
  double var = 0.0;
  std::array<double, 3> q{};
};

Summary summarize(const ScalarSeries& s, const Run& r, bool absolute) {
  std::vector<double> vals;
  for (std::size_t k = r.b; k < r.e && k < s.size(); ++k) {
    if (s.valid[k]) vals.push_back(absolute ? std::abs(s.v[k]) : s.v[k]);
  }
  Summary out;
  if (vals.empty()) return out;
  out.any = true;
  out.mean = stats::mean(vals);
  out.var = stats::variance(vals);
  out.peak = *std::max_element(vals.begin(), vals.end());
  out.q = {stats::percentile(vals, 25.0), stats::percentile(vals, 50.0), stats::percentile(vals, 75.0)};
  return out;
}

void put(EventRecord& e, int dim, double value) {
  e.x[dim] = value;
  e.mask[dim] = 1;
}

void put_moments(EventRecord& e, int dim, const Summary& s) {
  if (!s.any) return;
  put(e, dim, s.mean);
  put(e, dim + 1, s.peak);
  put(e, dim + 2, s.var);
}

void put_quartiles(EventRecord& e, int dim, const Summary& s) {
  if (!s.any) return;
  for (int k = 0; k < 3; ++k) put(e, dim + k, s.q[k]);
}

}  // namespace

void set_action(EventRecord& e, const std::optional<CameraResponse>& response) {
  for (int k = 0; k < 3; ++k) {
    e.x[desc::kAction + k] = 0.0;
    e.mask[desc::kAction + k] = 0;
  }
  if (!response) return;
  if (response->du) put(e, desc::kAction, *response->du);
  if (response->dv) put(e, desc::kAction + 1, *response->dv);
  if (response->dz) put(e, desc::kAction + 2, *response->dz);
}

EventRecord build_descriptor(const EventRecord& in, const StreamSignals& sig,
                             const std::optional<CameraResponse>& response) {
  EventRecord e = in;
  e.x.fill(0.0);
  e.mask.fill(0);
  const Run r = frames_of(sig.s_def.t, e.t_s, e.t_e);

  switch (e.label) {
    case EventLabel::Interaction:
      put_moments(e, desc::kToolSpeed, summarize(sig.tool_speed, r, false));
      put_moments(e, desc::kGrasperRate, summarize(sig.grasper_rate, r, true));
      put_moments(e, desc::kDeform, summarize(sig.s_def, r, false));
      break;
    case EventLabel::DepthAdvance:
    case EventLabel::DepthRetreat: {
      std::optional<std::size_t> first, last;
      for (std::size_t k = r.b; k < r.e; ++k) {
        if (!sig.z_tilde.valid[k]) continue;
        if (!first) first = k;
        last = k;
      }
      if (first) {
        const double dz = sig.z_tilde.v[*last] - sig.z_tilde.v[*first];
        put(e, desc::kDepthDir, static_cast<double>((dz > 0.0) - (dz < 0.0)));
        put(e, desc::kDepthAbs, std::abs(dz));
      }
      const auto rate = summarize(sig.z_rate, r, false);
      if (rate.any) put(e, desc::kDepthRate, rate.mean);
      break;
    }
    case EventLabel::VisibilityDegradation:
    case EventLabel::LensContamination:
      put_quartiles(e, desc::kSharpness, summarize(sig.F, r, false));
      put_quartiles(e, desc::kContrast, summarize(sig.C, r, false));
      put_quartiles(e, desc::kContam, summarize(sig.s_cont, r, false));
      break;
  }
  set_action(e, response);
  return e;
}

std::vector<EventRecord> parse_stream(const SignalStream& stream, const DetectorConfig& cfg) {
  const auto sig = compute_signals(stream, cfg);
  auto inter = detect_interaction(stream, sig, cfg);
  auto depth = detect_depth_change(stream, sig, cfg);
  auto vis = detect_visibility_degradation(stream, sig, cfg);
  auto cont = detect_contamination(stream, sig, cfg, depth);
  auto fused = fuse_events({inter, depth, vis, cont});
  for (auto& e : fused) {
    e = build_descriptor(e, sig, std::nullopt);
    if (!sig.limitations.empty()) e.provenance["stream_limitations"] = sig.limitations;
  }
  return fused;
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

// Summation over sorted values keeps results independent of event order.
std::pair<double, double> sorted_moments(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mu = sum / static_cast<double>(v.size());
  std::vector<double> sq;
  sq.reserve(v.size());
  for (double x : v) sq.push_back((x - mu) * (x - mu));
  std::sort(sq.begin(), sq.end());
  double acc = 0.0;
  for (double x : sq) acc += x;
  return {mu, std::sqrt(acc / static_cast<double>(v.size()))};
}

}  // namespace

std::vector<EventRecord> normalize_descriptors(const std::vector<EventRecord>& events) {
  std::vector<EventRecord> out = events;
  std::vector<std::string> videos;
  for (const auto& e : out) videos.push_back(e.video_id);
  std::sort(videos.begin(), videos.end());
  videos.erase(std::unique(videos.begin(), videos.end()), videos.end());

  for (const auto& vid : videos) {
    for (int d = 0; d < kDescriptorDim; ++d) {
      std::vector<double> vals;
      for (const auto& e : out) {
        if (e.video_id == vid && e.mask[d]) vals.push_back(e.x[d]);
      }
      if (vals.empty()) continue;
      const auto [mu, sigma] = sorted_moments(vals);
      for (auto& e : out) {
        if (e.video_id != vid || !e.mask[d]) continue;
        e.x[d] = sigma > 0.0 ? (e.x[d] - mu) / sigma : 0.0;
      }
    }
  }

  for (int d = 0; d < kDescriptorDim; ++d) {
    std::vector<double> vals;
    for (const auto& e : out) {
      if (e.mask[d]) vals.push_back(e.x[d]);
    }
    if (vals.empty()) continue;
    const double p5 = stats::percentile(vals, 5.0);
    const double p95 = stats::percentile(vals, 95.0);
    const double span = p95 - p5;
    for (auto& e : out) {
      if (!e.mask[d]) continue;
      e.x[d] = span > 1e-12 ? std::clamp(-1.0 + 2.0 * (e.x[d] - p5) / span, -1.5, 1.5) : 0.0;
    }
  }

  for (auto& e : out) {
    double sq = 0.0;
    for (int d = 0; d < kDescriptorDim; ++d) {
      if (e.mask[d]) sq += e.x[d] * e.x[d];
    }
    const double norm = std::sqrt(sq);
    for (int d = 0; d < kDescriptorDim; ++d) {
      if (!e.mask[d]) {
        e.x[d] = 0.0;
      } else {
        e.x[d] = norm < 1e-9 ? 0.0 : e.x[d] / norm;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Event file

std::string format_event_row(const EventRecord& e) {
  std::string row = e.video_id;
  row += ',';
  row += label_name(e.label);
  row += ',';
  text::append(row, e.t_s);
  row += ',';
  text::append(row, e.t_e);
  for (double x : e.x) {
    row += ',';
    text::append(row, x);
  }
  for (auto m : e.mask) {
    row += ',';
    row += static_cast<char>('0' + m);
  }
  row += ',';
  row += e.provenance.dump();
  return row;
}

void save_events(const std::vector<EventRecord>& events, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write event file " + path.string());
  std::string header = "# events version=";
  header += kFormatVersion;
  header += " dims=" + std::to_string(kDescriptorDim) + "\n# columns: video_id,label,t_s,t_e";
  for (const char* n : descriptor_names()) header += std::string(",x:") + n;
  for (const char* n : descriptor_names()) header += std::string(",m:") + n;
  header += ",provenance\n";
  out << header;
  for (const auto& e : events) out << format_event_row(e) << '\n';
}

std::vector<EventRecord> load_events(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event file " + path.string());
  std::vector<EventRecord> events;
  std::string line;
  std::size_t lineno = 0;
  constexpr int kFixed = 4 + 2 * kDescriptorDim;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::size_t pos = 0;
    std::vector<std::string_view> fields;
    const std::string_view sv(line);
    for (int k = 0; k < kFixed; ++k) {
      const auto c = sv.find(',', pos);
      if (c == std::string_view::npos) throw ParseError("event row has too few fields", lineno);
      fields.push_back(text::trim(sv.substr(pos, c - pos)));
      pos = c + 1;
    }
    EventRecord e;
    e.video_id = std::string(fields[0]);
    try {
      e.label = parse_label(fields[1]);
    } catch (const DataError& err) {
      throw ParseError(err.what(), lineno);
    }
    if (!text::try_parse(fields[2], e.t_s) || !text::try_parse(fields[3], e.t_e)) {
      throw ParseError("bad event time", lineno);
    }
    for (int d = 0; d < kDescriptorDim; ++d) {
      if (!text::try_parse(fields[4 + d], e.x[d])) throw ParseError("bad descriptor value", lineno);
      const auto m = fields[4 + kDescriptorDim + d];
      if (m != "0" && m != "1") throw ParseError("mask entries must be 0 or 1", lineno);
      e.mask[d] = m == "1" ? 1 : 0;
    }
    try {
      e.provenance = nlohmann::json::parse(sv.substr(pos));
    } catch (const nlohmann::json::exception&) {
      throw ParseError("bad provenance json", lineno);
    }
    if (!(e.t_s < e.t_e)) throw IntegrityError("line " + std::to_string(lineno) + ": event has t_s >= t_e");
    events.push_back(std::move(e));
  }
  return events;
}

}  // namespace lapcam
