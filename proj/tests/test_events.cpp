#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>

#include "lapcam/events.hpp"
#include "lapcam/metrics.hpp"
#include "lapcam/scenario.hpp"

using namespace lapcam;

namespace {

using FrameFn = std::function<void(std::size_t, SignalFrame&)>;

SignalStream make_stream(std::size_t n, int h, int w, const FrameFn& fill, double fps = 30.0) {
  SignalStream s;
  s.video_id = "hand";
  s.fps = fps;
  s.height = h;
  s.width = w;
  for (std::size_t i = 0; i < n; ++i) {
    SignalFrame f;
    f.t = static_cast<double>(i) / fps;
    fill(i, f);
    s.frames.push_back(std::move(f));
  }
  return s;
}

// Flow magnitude `near` inside a disk of radius r around (cx, cy), 1 elsewhere.
FlowGrid disk_flow(int h, int w, double cx, double cy, double r, float near) {
  FlowGrid g(h, w, Flow{1.0f, 0.0f});
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      if ((col - cx) * (col - cx) + (row - cy) * (row - cy) <= r * r) g(row, col) = Flow{0.0f, near};
    }
  }
  return g;
}

// Deformation stream on a 32x32 grid with the grasper always moving.
SignalStream deformation_stream(std::size_t n, const std::function<float(std::size_t)>& near) {
  return make_stream(n, 32, 32, [&](std::size_t i, SignalFrame& f) {
    f.tool_tip = PixelPoint{16.0, 16.0};
    f.grasper_angle = 0.1 * static_cast<double>(i);
    f.flow = disk_flow(32, 32, 16, 16, 60.0 * 32 / 512, near(i));
    f.tool_mask = MaskGrid(32, 32, 0);
    (*f.tool_mask)(16, 16) = 1;
  });
}

RealGrid constant_grid(int h, int w, float v) { return RealGrid(h, w, v); }

RealGrid checkerboard(int h, int w, double lo, double hi) {
  RealGrid g(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) g(r, c) = static_cast<float>((r + c) % 2 ? hi : lo);
  }
  return g;
}

RealGrid texture(int h, int w, double amp, double base) {
  RealGrid g(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) g(r, c) = static_cast<float>(base + amp * std::sin(2.0 * M_PI * (r + 2 * c) / 5.3));
  }
  return g;
}

EventRecord ev(EventLabel l, double ts, double te) {
  EventRecord e;
  e.video_id = "v";
  e.label = l;
  e.t_s = ts;
  e.t_e = te;
  return e;
}

// numpy-style linear percentile, written independently of the library.
double np_percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

TEST_CASE("deformation score on planted grids") {
  DetectorConfig cfg;
  {
    auto s = deformation_stream(1, [](std::size_t) { return 4.0f; });
    auto raw = deformation_score_raw(s, cfg);
    REQUIRE(raw.valid[0]);
    CHECK(raw.v[0] == doctest::Approx(4.0 / (1.0 + 1e-6)).epsilon(1e-12));
  }
  {
    auto s = deformation_stream(1, [](std::size_t) { return 1.0f; });
    CHECK(deformation_score_raw(s, cfg).v[0] == doctest::Approx(1.0).epsilon(1e-5));
  }
  {
    auto s = deformation_stream(1, [](std::size_t) { return 0.0f; });
    for (auto& f : s.frames) f.flow = FlowGrid(32, 32, Flow{});
    auto raw = deformation_score_raw(s, cfg);
    REQUIRE(raw.valid[0]);
    CHECK(raw.v[0] == 0.0);
  }
  {
    auto s = deformation_stream(1, [](std::size_t) { return 4.0f; });
    s.frames[0].tool_tip = PixelPoint{-500.0, -500.0};
    CHECK_FALSE(deformation_score_raw(s, cfg).valid[0]);
  }
  {
    auto s = deformation_stream(1, [](std::size_t) { return 4.0f; });
    s.frames[0].low_vis = MaskGrid(32, 32, 1);
    CHECK_FALSE(deformation_score_raw(s, cfg).valid[0]);
  }
}

TEST_CASE("interaction detection on a planted window") {
  DetectorConfig cfg;
  // Frames 60..119 deform (2 s at 30 fps).
  auto s = deformation_stream(240, [](std::size_t i) { return (i >= 60 && i < 120) ? 4.0f : 1.0f; });
  auto ev = detect_interaction(s, cfg);
  REQUIRE(ev.size() == 1);
  CHECK(std::abs(ev[0].t_s - 2.0) <= 2.0 / 30 + 1e-9);
  CHECK(std::abs(ev[0].t_e - 4.0) <= 2.0 / 30 + 1e-9);
  CHECK(ev[0].duration() >= cfg.t_min);
}

TEST_CASE("short spike is rejected by the duration floor") {
  DetectorConfig cfg;
  auto s = deformation_stream(240, [](std::size_t i) { return (i >= 60 && i < 69) ? 4.0f : 1.0f; });
  CHECK(detect_interaction(s, cfg).empty());
}

TEST_CASE("lull above the hysteresis floor is bridged") {
  DetectorConfig cfg;
  // 1 s, 0.2 s at 1.5 (between 0.7*1.8 and 1.8), 1 s.
  auto near = [](std::size_t i) -> float {
    if (i >= 60 && i < 90) return 4.0f;
    if (i >= 90 && i < 96) return 1.5f;
    if (i >= 96 && i < 126) return 4.0f;
    return 1.0f;
  };
  auto s = deformation_stream(240, near);
  auto sig = compute_signals(s, cfg);
  auto merged = detect_interaction(s, sig, cfg);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].t_s <= 2.0 + 1e-9 + 2.0 / 30);
  CHECK(merged[0].t_e >= 4.2 - 2.0 / 30);

  cfg.bridge_gap = 0.1;
  CHECK(detect_interaction(s, compute_signals(s, cfg), cfg).size() == 2);
}

TEST_CASE("interaction needs kinematic intent") {
  DetectorConfig cfg;
  auto s = deformation_stream(240, [](std::size_t i) { return (i >= 60 && i < 120) ? 4.0f : 1.0f; });
  for (auto& f : s.frames) f.grasper_angle = 0.3;
  CHECK(detect_interaction(s, cfg).empty());
  for (auto& f : s.frames) f.grasper_angle.reset();
  for (auto& f : s.frames) f.tool_tip = PixelPoint{16.0, 16.0};
  CHECK(detect_interaction(s, cfg).empty());
}

TEST_CASE("raising tau_def never adds interaction events") {
  auto s = deformation_stream(300, [](std::size_t i) {
    if (i >= 30 && i < 90) return 4.0f;
    if (i >= 150 && i < 200) return 2.5f;
    return 1.0f;
  });
  std::size_t prev = 1000;
  for (double tau : {1.2, 1.8, 2.2, 3.0, 5.0}) {
    DetectorConfig cfg;
    cfg.tau_def = tau;
    const auto n = detect_interaction(s, cfg).size();
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("working distance is the ROI median") {
  DetectorConfig cfg;
  {
    auto s = make_stream(60, 8, 8, [](std::size_t, SignalFrame& f) { f.depth = constant_grid(8, 8, 80.0f); });
    auto z = working_distance(s, cfg);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.v[i] == doctest::Approx(80.0).epsilon(1e-12));
  }
  {
    auto s = make_stream(1, 8, 8, [](std::size_t, SignalFrame& f) {
      f.depth = RealGrid(8, 8, 60.0f);
      for (int r = 4; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) (*f.depth)(r, c) = 100.0f;
      }
    });
    CHECK(working_distance_raw(s).v[0] == doctest::Approx(80.0));
  }
  {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<float> u(70.0f, 90.0f);
    RealGrid clean(10, 10);
    for (auto& x : clean.values()) x = u(rng);
    RealGrid dirty = clean;
    // Corrupt 10% of the pixels, all drawn from above the median.
    std::vector<std::size_t> idx(100);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return clean[a] < clean[b]; });
    std::vector<std::size_t> upper(idx.begin() + 50, idx.end());
    std::shuffle(upper.begin(), upper.end(), rng);
    for (int k = 0; k < 10; ++k) dirty[upper[k]] = 999.0f;
    auto a = make_stream(1, 10, 10, [&](std::size_t, SignalFrame& f) { f.depth = clean; });
    auto b = make_stream(1, 10, 10, [&](std::size_t, SignalFrame& f) { f.depth = dirty; });
    CHECK(working_distance_raw(a).v[0] == doctest::Approx(working_distance_raw(b).v[0]).epsilon(1e-12));
  }
  {
    auto s = make_stream(1, 4, 4, [](std::size_t, SignalFrame& f) {
      f.depth = constant_grid(4, 4, 80.0f);
      f.surg_roi = MaskGrid(4, 4, 0);
    });
    CHECK_FALSE(working_distance_raw(s).valid[0]);
  }
}

namespace {

// z profile in mm, constant over the grid.
SignalStream depth_stream(std::size_t n, const std::function<double(double)>& z) {
  return make_stream(n, 4, 4, [&](std::size_t i, SignalFrame& f) {
    f.depth = constant_grid(4, 4, static_cast<float>(z(static_cast<double>(i) / 30.0)));
  });
}

}  // namespace

TEST_CASE("depth ramp is an advance; its reverse a retreat") {
  DetectorConfig cfg;
  auto ramp = [](double t) {
    if (t < 2.0) return 100.0;
    if (t < 4.0) return 100.0 - 10.0 * (t - 2.0);
    return 80.0;
  };
  auto s = depth_stream(180, ramp);
  auto ev = detect_depth_change(s, cfg);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].label == EventLabel::DepthAdvance);
  std::vector<double> raw;
  for (int i = 0; i < 180; ++i) raw.push_back(static_cast<float>(ramp(i / 30.0)));
  CHECK(ev[0].provenance["delta_min"].get<double>() == doctest::Approx(0.08 * np_percentile(raw, 50)));
  CHECK(std::abs(ev[0].provenance["dz"].get<double>()) > 7.2);
  CHECK(ev[0].t_s < 2.5);
  CHECK(ev[0].t_e > 3.5);

  auto r = depth_stream(180, [&](double t) { return 180.0 - ramp(t); });
  auto er = detect_depth_change(r, cfg);
  REQUIRE(er.size() == 1);
  CHECK(er[0].label == EventLabel::DepthRetreat);
}

TEST_CASE("small depth drift is rejected by the scale-adaptive floor") {
  DetectorConfig cfg;
  // 3 mm over 1 s around a median of 90: fast enough, too small.
  auto s = depth_stream(180, [](double t) {
    if (t < 2.0) return 88.5;
    if (t < 3.0) return 88.5 + 3.0 * (t - 2.0);
    return 91.5;
  });
  CHECK(detect_depth_change(s, cfg).empty());
  cfg.delta_min_coeff = 0.01;
  CHECK(detect_depth_change(s, cfg).size() == 1);
}

TEST_CASE("derivative uses central differences with one-sided ends") {
  ScalarSeries s({0.0, 0.1, 0.2, 0.3});
  for (std::size_t i = 0; i < 4; ++i) s.set(i, static_cast<double>(i * i));
  auto d = derivative(s);
  CHECK(d.v[0] == doctest::Approx(10.0));
  CHECK(d.v[1] == doctest::Approx(20.0));
  CHECK(d.v[2] == doctest::Approx(40.0));
  CHECK(d.v[3] == doctest::Approx(50.0));
}

TEST_CASE("view quality: sharpness and contrast") {
  {
    auto s = make_stream(1, 4, 4, [](std::size_t, SignalFrame& f) { f.intensity = constant_grid(4, 4, 50.0f); });
    auto [F, C] = view_quality_series(s);
    CHECK(F.v[0] == 0.0);
    CHECK(C.v[0] == 0.0);
  }
  {
    auto s = make_stream(1, 4, 4, [](std::size_t, SignalFrame& f) { f.intensity = checkerboard(4, 4, 0.0, 100.0); });
    auto [F, C] = view_quality_series(s);
    CHECK(F.v[0] == doctest::Approx(100.0));
    CHECK(C.v[0] == doctest::Approx(1.0));
  }
  {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> u(10.0f, 200.0f);
    RealGrid g(6, 6);
    for (auto& x : g.values()) x = u(rng);
    RealGrid g2 = g;
    for (auto& x : g2.values()) x *= 2.0f;
    auto a = make_stream(1, 6, 6, [&](std::size_t, SignalFrame& f) { f.intensity = g; });
    auto b = make_stream(1, 6, 6, [&](std::size_t, SignalFrame& f) { f.intensity = g2; });
    CHECK(view_quality_series(a).second.v[0] == doctest::Approx(view_quality_series(b).second.v[0]).epsilon(1e-9));
  }
  {
    auto s = make_stream(1, 4, 4, [](std::size_t, SignalFrame& f) { f.intensity = constant_grid(4, 4, 0.0f); });
    CHECK_FALSE(view_quality_series(s).second.valid[0]);
  }
}

namespace {

SignalStream vis_stream(std::size_t n, std::size_t b, std::size_t e, const std::function<RealGrid()>& degraded) {
  return make_stream(n, 12, 12, [&](std::size_t i, SignalFrame& f) {
    f.intensity = (i >= b && i < e) ? degraded() : texture(12, 12, 40.0, 120.0);
  });
}

DetectorConfig fixed_vq() {
  DetectorConfig cfg;
  cfg.tau_F = 10.0;
  cfg.tau_C = 0.1;
  return cfg;
}

}  // namespace

TEST_CASE("visibility degradation needs low sharpness and low contrast") {
  auto smoke = [] { return texture(12, 12, 1.0, 200.0); };
  auto two_tone = [] {
    RealGrid g(12, 12, 10.0f);
    for (int r = 0; r < 12; ++r) {
      for (int c = 6; c < 12; ++c) g(r, c) = 250.0f;
    }
    return g;
  };
  {
    auto ev = detect_visibility_degradation(vis_stream(150, 60, 105, smoke), fixed_vq());
    REQUIRE(ev.size() == 1);
    CHECK(ev[0].t_s == doctest::Approx(2.0));
    CHECK(ev[0].t_e == doctest::Approx(3.5));
  }
  CHECK(detect_visibility_degradation(vis_stream(150, 60, 105, two_tone), fixed_vq()).empty());
  CHECK(detect_visibility_degradation(vis_stream(150, 60, 72, smoke), fixed_vq()).empty());
}

TEST_CASE("visibility hysteresis keeps a run through a partial recovery") {
  auto cfg = fixed_vq();
  // C of the middle frames is 0.12: above tau_C, below tau_C / 0.7.
  auto s = make_stream(150, 12, 12, [](std::size_t i, SignalFrame& f) {
    if (i >= 40 && i < 110) {
      f.intensity = texture(12, 12, 1.0, 100.0);
      // Two flat bands: F stays 0 while C rises to 0.12.
      if (i >= 70 && i < 75) {
        RealGrid g(12, 12);
        for (int r = 0; r < 12; ++r) {
          for (int c = 0; c < 12; ++c) g(r, c) = static_cast<float>(r < 6 ? 88.0 : 112.0);
        }
        f.intensity = g;
      }
    } else {
      f.intensity = texture(12, 12, 40.0, 120.0);
    }
  });
  auto [F, C] = view_quality_series(s);
  REQUIRE(C.v[72] > 0.1);
  REQUIRE(C.v[72] < 0.1 / 0.7);
  auto ev = detect_visibility_degradation(s, cfg);
  CHECK(ev.size() == 1);
}

TEST_CASE("contamination score") {
  DetectorConfig cfg;
  const std::size_t k = 24;
  {
    auto s = make_stream(40, 10, 10, [](std::size_t, SignalFrame& f) {
      f.low_vis = MaskGrid(10, 10, 0);
      for (int p = 0; p < 12; ++p) (*f.low_vis)[p] = 1;
    });
    auto sc = contamination_score(s, cfg);
    for (std::size_t i = 0; i < k - 1; ++i) CHECK_FALSE(sc.valid[i]);
    for (std::size_t i = k - 1; i < 40; ++i) CHECK(sc.v[i] == doctest::Approx(0.12));
  }
  {
    auto s = make_stream(40, 10, 10, [](std::size_t i, SignalFrame& f) {
      f.low_vis = MaskGrid(10, 10, static_cast<std::uint8_t>(i % 2));
    });
    auto sc = contamination_score(s, cfg);
    for (std::size_t i = k - 1; i < 40; ++i) CHECK(sc.v[i] == 0.0);
  }
  {
    auto s = make_stream(40, 10, 10, [](std::size_t, SignalFrame& f) { f.low_vis = MaskGrid(10, 10, 0); });
    auto sc = contamination_score(s, cfg);
    CHECK(sc.valid[k - 1]);
    CHECK(sc.v[k - 1] == 0.0);
  }
}

namespace {

SignalStream blob_stream(int pixels) {
  return make_stream(180, 10, 10, [&](std::size_t i, SignalFrame& f) {
    f.intensity = texture(10, 10, 40.0, 120.0);
    f.low_vis = MaskGrid(10, 10, 0);
    if (i >= 30 && i < 120) {
      for (int p = 0; p < pixels; ++p) (*f.low_vis)[p] = 1;
    }
  });
}

}  // namespace

TEST_CASE("contamination detection and cleaning confirmation") {
  DetectorConfig cfg;
  auto hit = detect_contamination(blob_stream(15), cfg);
  REQUIRE(hit.size() == 1);
  CHECK(hit[0].provenance["confirmed"] == false);
  CHECK(detect_contamination(blob_stream(8), cfg).empty());

  auto g = generate_scenario(cleaning_scenario(7));
  auto events = parse_stream(g.stream, cfg);
  int contam = 0;
  for (const auto& e : events) {
    if (e.label != EventLabel::LensContamination) continue;
    ++contam;
    CHECK(e.provenance["confirmed"] == true);
  }
  CHECK(contam == 1);
}

TEST_CASE("fusion keeps concurrent events and sorts") {
  auto a = ev(EventLabel::Interaction, 1, 3);
  auto b = ev(EventLabel::DepthAdvance, 2, 4);
  auto f = fuse_events({{b}, {a}});
  REQUIRE(f.size() == 2);
  CHECK(f[0].label == EventLabel::Interaction);
  CHECK(f[1].label == EventLabel::DepthAdvance);

  CHECK(fuse_events({{}, {}}).empty());

  auto x = ev(EventLabel::Interaction, 5, 6);
  auto y = ev(EventLabel::DepthRetreat, 0, 1);
  auto z = ev(EventLabel::LensContamination, 2.5, 3);
  auto s = fuse_events({{x, y, z}});
  CHECK(s[0].t_s == 0);
  CHECK(s[1].t_s == 2.5);
  CHECK(s[2].t_s == 5);

  CHECK_THROWS_AS(fuse_events({{ev(EventLabel::Interaction, 0, 2)}, {ev(EventLabel::Interaction, 1, 3)}}),
                  InvariantError);
}

TEST_CASE("descriptor masks follow the event type") {
  const std::vector<double> t = [] {
    std::vector<double> v(90);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i) / 30.0;
    return v;
  }();
  StreamSignals sig;
  sig.fps = 30;
  for (auto* s : {&sig.s_def, &sig.tool_speed, &sig.grasper_rate, &sig.z, &sig.z_tilde, &sig.z_rate, &sig.F,
                  &sig.C, &sig.s_cont}) {
    *s = ScalarSeries(t);
    for (std::size_t i = 0; i < t.size(); ++i) s->set(i, 1.0);
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    sig.tool_speed.set(i, 5.0);
    sig.z_tilde.set(i, 100.0 - static_cast<double>(i) * 0.2);
  }

  auto adv = build_descriptor(ev(EventLabel::DepthAdvance, 0.5, 2.5), sig, std::nullopt);
  for (int d = 0; d < 9; ++d) CHECK(adv.mask[d] == 0);
  for (int d = desc::kDepthDir; d < desc::kDepthDir + 3; ++d) CHECK(adv.mask[d] == 1);
  CHECK(adv.x[desc::kDepthDir] == -1.0);
  for (int d = desc::kAction; d < kDescriptorDim; ++d) CHECK(adv.mask[d] == 0);

  auto inter = build_descriptor(ev(EventLabel::Interaction, 0.5, 2.5), sig, CameraResponse{1.0, 2.0, 3.0});
  CHECK(inter.x[desc::kToolSpeed] == 5.0);
  CHECK(inter.x[desc::kToolSpeed + 1] == 5.0);
  CHECK(inter.x[desc::kToolSpeed + 2] == 0.0);
  for (int d = desc::kDepthDir; d < desc::kAction; ++d) CHECK(inter.mask[d] == 0);
  CHECK(inter.x[desc::kAction + 2] == 3.0);

  auto vis = build_descriptor(ev(EventLabel::VisibilityDegradation, 0.5, 2.5), sig, std::nullopt);
  for (int d = 0; d < desc::kSharpness; ++d) CHECK(vis.mask[d] == 0);
  for (int d = desc::kSharpness; d < desc::kAction; ++d) CHECK(vis.mask[d] == 1);

  for (const auto& e : {adv, inter, vis}) {
    for (int d = 0; d < kDescriptorDim; ++d) {
      if (!e.mask[d]) CHECK(e.x[d] == 0.0);
    }
  }
}

TEST_CASE("event file round trip is bit-exact") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  std::vector<EventRecord> events;
  for (int i = 0; i < 20; ++i) {
    auto e = ev(static_cast<EventLabel>(i % kNumEventLabels), i * 0.1 + 1.0 / 3.0, i * 0.1 + 2.0 / 3.0);
    for (int d = 0; d < kDescriptorDim; ++d) {
      e.mask[d] = (d + i) % 4 != 0;
      e.x[d] = e.mask[d] ? u(rng) / 7.0 : 0.0;
    }
    e.provenance = {{"detector", "x,y"}, {"value", u(rng)}, {"limitations", {"a", "b"}}};
    events.push_back(e);
  }
  const auto path = std::filesystem::temp_directory_path() / "lapcam_events_test.csv";
  save_events(events, path);
  auto back = load_events(path);
  CHECK(back == events);
  std::filesystem::remove(path);
}

TEST_CASE("normalization") {
  SUBCASE("identical descriptors collapse to zero") {
    std::vector<EventRecord> events(3, ev(EventLabel::Interaction, 0, 1));
    for (auto& e : events) {
      for (int d = 0; d < 9; ++d) {
        e.mask[d] = 1;
        e.x[d] = 2.5;
      }
    }
    for (const auto& e : normalize_descriptors(events)) {
      for (double x : e.x) CHECK(x == 0.0);
    }
  }

  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<EventRecord> events;
  for (int i = 0; i < 60; ++i) {
    auto e = ev(EventLabel::Interaction, i, i + 1);
    e.video_id = i < 30 ? "a" : "b";
    for (int d = 0; d < 6; ++d) {
      e.mask[d] = 1;
      e.x[d] = (i < 30 ? 1.0 : 5.0) * g(rng) + d;
    }
    events.push_back(e);
  }
  events[7].x[0] = 100.0 * 30.0;  // planted outlier

  SUBCASE("unit rows and agreement with an independent pipeline") {
    auto out = normalize_descriptors(events);
    // Oracle: z-score per video, percentile scaling per dimension, clip, l2.
    std::vector<std::array<double, 6>> y(events.size());
    for (int d = 0; d < 6; ++d) {
      for (const char* vid : {"a", "b"}) {
        double mu = 0, n = 0;
        for (const auto& e : events) {
          if (e.video_id == vid) {
            mu += e.x[d];
            ++n;
          }
        }
        mu /= n;
        double var = 0;
        for (const auto& e : events) {
          if (e.video_id == vid) var += (e.x[d] - mu) * (e.x[d] - mu);
        }
        const double sd = std::sqrt(var / n);
        for (std::size_t i = 0; i < events.size(); ++i) {
          if (events[i].video_id == vid) y[i][d] = (events[i].x[d] - mu) / sd;
        }
      }
      std::vector<double> col;
      for (const auto& r : y) col.push_back(r[d]);
      const double p5 = np_percentile(col, 5), p95 = np_percentile(col, 95);
      for (auto& r : y) r[d] = std::clamp(2.0 * (r[d] - p5) / (p95 - p5) - 1.0, -1.5, 1.5);
    }
    CHECK(y[7][0] == 1.5);
    for (std::size_t i = 0; i < events.size(); ++i) {
      double n2 = 0;
      for (double v : y[i]) n2 += v * v;
      double out2 = 0;
      for (int d = 0; d < 6; ++d) {
        CHECK(out[i].x[d] == doctest::Approx(y[i][d] / std::sqrt(n2)).epsilon(1e-10));
        out2 += out[i].x[d] * out[i].x[d];
      }
      CHECK(std::abs(std::sqrt(out2) - 1.0) < 1e-9);
      for (int d = 6; d < kDescriptorDim; ++d) CHECK(out[i].x[d] == 0.0);
    }
  }

  SUBCASE("order stable") {
    auto out = normalize_descriptors(events);
    std::vector<std::size_t> perm(events.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<EventRecord> shuffled;
    for (auto p : perm) shuffled.push_back(events[p]);
    auto out2 = normalize_descriptors(shuffled);
    for (std::size_t k = 0; k < perm.size(); ++k) CHECK(out2[k].x == out[perm[k]].x);
  }
}

TEST_CASE("clean planted scenario: every branch detected at tIoU 0.5") {
  auto g = generate_scenario(detection_scenario(21, 60.0, true));
  auto events = parse_stream(g.stream, DetectorConfig{});
  std::vector<LabeledInterval> pred, truth;
  for (const auto& e : events) pred.push_back(to_interval(e));
  for (const auto& t : g.truth) truth.push_back(to_interval(t));
  auto rep = match_events(pred, truth, 0.5);
  for (int k = 0; k < kNumEventLabels; ++k) {
    CAPTURE(k);
    CHECK(rep.present[k]);
    CHECK(rep.per_class[k].f1 == 1.0);
  }
}

TEST_CASE("parsing is deterministic") {
  auto g = generate_scenario(detection_scenario(5, 40.0, false));
  auto a = parse_stream(g.stream, DetectorConfig{});
  auto b = parse_stream(g.stream, DetectorConfig{});
  std::string sa, sb;
  for (const auto& e : a) sa += format_event_row(e) + "\n";
  for (const auto& e : b) sb += format_event_row(e) + "\n";
  CHECK(sa == sb);
  CHECK_FALSE(a.empty());
}

TEST_CASE("detector configuration is validated") {
  DetectorConfig cfg;
  cfg.hysteresis_ratio = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = DetectorConfig{};
  cfg.tau_persist = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = DetectorConfig{};
  cfg.tau_def = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
