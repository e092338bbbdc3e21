#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "lapcam/signal.hpp"

using namespace lapcam;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "lapcam_test_signal";
  fs::create_directories(dir);
  return dir / name;
}

SignalStream small_stream() {
  SignalStream s;
  s.video_id = "v01";
  s.fps = 30.0;
  s.height = 2;
  s.width = 3;
  for (int i = 0; i < 3; ++i) {
    SignalFrame f;
    f.t = i / 30.0;
    f.tool_tip = PixelPoint{1.25 + i, 0.5};
    f.grasper_angle = 0.1 * i;
    f.flow = FlowGrid(2, 3, Flow{0.125f, -0.3f});
    f.depth = RealGrid(2, 3, 80.5f + i);
    f.intensity = RealGrid(2, 3, 120.0f);
    f.low_vis = MaskGrid(2, 3, 0);
    (*f.low_vis)(1, 2) = 1;
    f.tool_mask = MaskGrid(2, 3, 0);
    f.surg_roi = MaskGrid(2, 3, 1);
    s.frames.push_back(f);
  }
  s.border_mask = MaskGrid(2, 3, 0);
  (*s.border_mask)(0, 0) = 1;
  return s;
}

ScalarSeries series_of(std::size_t n, double fps, auto fn) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = i / fps;
  ScalarSeries s(t);
  for (std::size_t i = 0; i < n; ++i) s.set(i, fn(t[i]));
  return s;
}

// Amplitude of the bin nearest `freq` over a window with an integer number of periods.
double dft_amplitude(const std::vector<double>& x, std::size_t begin, std::size_t len, double freq,
                     double fps) {
  double re = 0.0, im = 0.0;
  for (std::size_t n = 0; n < len; ++n) {
    const double ang = 2.0 * std::numbers::pi * freq * static_cast<double>(n) / fps;
    re += x[begin + n] * std::cos(ang);
    im -= x[begin + n] * std::sin(ang);
  }
  return 2.0 * std::hypot(re, im) / static_cast<double>(len);
}

}  // namespace

TEST_CASE("stream round trip keeps every channel") {
  const auto s = small_stream();
  const auto path = tmp_file("roundtrip.csv");
  save_stream(s, path);
  const auto back = load_stream(path);
  CHECK(back.size() == 3);
  CHECK(back.fps == 30.0);
  CHECK(back == s);
}

TEST_CASE("duplicate timestamp is an integrity error") {
  const auto path = tmp_file("dup.csv");
  {
    std::ofstream out(path);
    out << "#fps=30 #H=1 #W=1 #video=d #columns=t,theta\n0,0.1\n0.0333333,0.2\n0.0333333,0.3\n";
  }
  CHECK_THROWS_AS(load_stream(path), IntegrityError);
}

TEST_CASE("missing grasper column leaves grasper absent") {
  auto s = small_stream();
  for (auto& f : s.frames) f.grasper_angle.reset();
  const auto path = tmp_file("nograsp.csv");
  save_stream(s, path);
  {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header.find("theta") == std::string::npos);
  }
  const auto back = load_stream(path);
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK_FALSE(back.frames[i].grasper_angle.has_value());
    CHECK(back.frames[i].tool_tip.has_value());
    CHECK(back.frames[i].depth == s.frames[i].depth);
  }
}

TEST_CASE("malformed row reports its line") {
  const auto path = tmp_file("bad.csv");
  {
    std::ofstream out(path);
    out << "#fps=10 #H=1 #W=1 #video=b #columns=t,theta\n0,0.1\n0.1,abc\n";
  }
  try {
    load_stream(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("non-binary mask is rejected") {
  const auto path = tmp_file("mask.csv");
  {
    std::ofstream out(path);
    out << "#fps=10 #H=1 #W=2 #video=b #columns=t,lowvis\n0,0,2\n";
  }
  CHECK_THROWS_AS(load_stream(path), DataError);
}

TEST_CASE("savgol reproduces low order polynomials") {
  const auto ramp = series_of(40, 30.0, [](double t) { return 2.0 * t; });
  const auto r = savgol_smooth(ramp, 11, 3);
  for (std::size_t i = 0; i < ramp.size(); ++i) CHECK(r.v[i] == doctest::Approx(ramp.v[i]).epsilon(1e-12));

  const auto flat = series_of(25, 30.0, [](double) { return 7.5; });
  const auto c = savgol_smooth(flat, 11, 3);
  for (double x : c.v) CHECK(x == doctest::Approx(7.5).epsilon(1e-12));

  CHECK_THROWS_AS(savgol_smooth(flat, 3, 3), ConfigError);
  CHECK_THROWS_AS(savgol_smooth(flat, 10, 3), ConfigError);
}

TEST_CASE("savgol matches an independent window fit and reduces noise") {
  std::mt19937 rng(5);
  std::normal_distribution<double> noise(0.0, 0.05);
  const auto cubic = [](double t) { return 0.3 * t * t * t - t * t + 0.5 * t + 1.0; };
  auto s = series_of(90, 30.0, cubic);
  for (auto& x : s.v) x += noise(rng);
  const auto out = savgol_smooth(s, 11, 3);

  // Oracle: normal equations of a cubic fit over the centred window.
  for (std::size_t i = 5; i + 5 < s.size(); ++i) {
    double m[4][5] = {};
    for (int k = -5; k <= 5; ++k) {
      double pw[4] = {1.0, double(k), double(k * k), double(k * k * k)};
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) m[a][b] += pw[a] * pw[b];
        m[a][4] += pw[a] * s.v[i + k];
      }
    }
    for (int p = 0; p < 4; ++p) {
      for (int r = p + 1; r < 4; ++r) {
        const double f = m[r][p] / m[p][p];
        for (int c = p; c < 5; ++c) m[r][c] -= f * m[p][c];
      }
    }
    double coef[4];
    for (int p = 3; p >= 0; --p) {
      double acc = m[p][4];
      for (int c = p + 1; c < 4; ++c) acc -= m[p][c] * coef[c];
      coef[p] = acc / m[p][p];
    }
    CHECK(out.v[i] == doctest::Approx(coef[0]).epsilon(1e-9));
  }

  double rms_in = 0.0, rms_out = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double truth = cubic(s.t[i]);
    rms_in += (s.v[i] - truth) * (s.v[i] - truth);
    rms_out += (out.v[i] - truth) * (out.v[i] - truth);
  }
  CHECK(rms_out < rms_in);
}

TEST_CASE("savgol filters valid runs separately") {
  auto s = series_of(30, 30.0, [](double t) { return t < 0.5 ? 1.0 : 5.0; });
  s.invalidate(14);
  s.invalidate(15);
  const auto out = savgol_smooth(s, 11, 3);
  CHECK_FALSE(out.valid[14]);
  CHECK_FALSE(out.valid[15]);
  for (std::size_t i = 0; i < 14; ++i) CHECK(out.v[i] == doctest::Approx(1.0));
  for (std::size_t i = 16; i < 30; ++i) CHECK(out.v[i] == doctest::Approx(5.0));
}

TEST_CASE("zero phase low-pass") {
  const double fps = 30.0;
  const auto flat = series_of(200, fps, [](double) { return 3.0; });
  const auto f = lowpass_zero_phase(flat, 2.5, fps);
  for (double x : f.v) CHECK(std::abs(x - 3.0) <= 1e-9);

  // 0.2 Hz: 20 s = 4 periods, measured on the central 10 s (2 periods).
  const auto slow = series_of(600, fps, [](double t) { return std::sin(2.0 * std::numbers::pi * 0.2 * t); });
  const auto ls = lowpass_zero_phase(slow, 2.5, fps);
  CHECK(dft_amplitude(ls.v, 150, 300, 0.2, fps) >= 0.99);

  const auto fast = series_of(600, fps, [](double t) { return std::sin(2.0 * std::numbers::pi * 10.0 * t); });
  const auto lf = lowpass_zero_phase(fast, 2.5, fps);
  CHECK(dft_amplitude(lf.v, 150, 300, 10.0, fps) <= 0.05);

  // Zero phase: a symmetric bump stays centred.
  const auto bump = series_of(121, fps, [](double t) { return std::exp(-(t - 2.0) * (t - 2.0) / 0.1); });
  const auto lb = lowpass_zero_phase(bump, 2.5, fps);
  const auto peak = std::max_element(lb.v.begin(), lb.v.end()) - lb.v.begin();
  CHECK(peak == 60);

  CHECK_THROWS_AS(lowpass_zero_phase(flat, 15.0, fps), ConfigError);
  CHECK_THROWS_AS(lowpass_zero_phase(flat, 0.0, fps), ConfigError);
}
