#include "lapcam/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "lapcam/text_io.hpp"

namespace lapcam {

void Scenario::validate() const {
  require_config(fps > 0.0, "scenario fps must be positive");
  require_config(duration > 0.0, "scenario duration must be positive");
  require_config(height >= 4 && width >= 4, "scenario grid must be at least 4x4");
  require_config(z0 > 0.0, "scenario z0 must be positive");
  for (const auto& p : planted) {
    require_config(p.t_s >= 0.0 && p.t_e <= duration + 1e-9 && p.t_s < p.t_e,
                   "planted event outside the scenario duration");
    require_config(p.coverage >= 0.0 && p.coverage <= 1.0, "contamination coverage must lie in [0,1]");
  }
  for (std::size_t i = 0; i < planted.size(); ++i) {
    for (std::size_t j = i + 1; j < planted.size(); ++j) {
      const auto& a = planted[i];
      const auto& b = planted[j];
      if (a.label == b.label && a.t_s < b.t_e && b.t_s < a.t_e) {
        throw ConfigError("overlapping planted " + std::string(label_name(a.label)) + " events");
      }
    }
  }
  for (const auto& d : drifts) {
    require_config(d.t_s < d.t_e, "depth drift must have t_s < t_e");
  }
}

namespace {

double quantize(double x) { return std::round(x * 1000.0) / 1000.0; }

struct FrameSpan {
  long b = 0;
  long e = 0;  // exclusive
  bool contains(long i) const { return i >= b && i < e; }
};

FrameSpan span_of(double t_s, double t_e, double fps) {
  return {static_cast<long>(std::ceil(t_s * fps - 1e-9)), static_cast<long>(std::ceil(t_e * fps - 1e-9))};
}

double ramp_fraction(long i, const FrameSpan& s) {
  if (i <= s.b) return 0.0;
  if (i >= s.e) return 1.0;
  return static_cast<double>(i - s.b) / static_cast<double>(s.e - s.b);
}

}  // namespace

GeneratedScenario generate_scenario(const Scenario& spec) {
  spec.validate();
  const int h = spec.height;
  const int w = spec.width;
  const std::size_t npix = static_cast<std::size_t>(h) * w;
  const double fps = spec.fps;
  const long nframes = static_cast<long>(std::floor(spec.duration * fps + 1e-9));
  const double scale = std::min(h, w) / 512.0;
  const int margin = std::max(1, std::min(h, w) / 16);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  MaskGrid roi(h, w, 0);
  MaskGrid border(h, w, 0);
  std::vector<std::size_t> roi_pixels;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const bool inner = r >= margin && r < h - margin && c >= margin && c < w - margin;
      roi(r, c) = inner ? 1 : 0;
      border(r, c) = inner ? 0 : 1;
      if (inner) roi_pixels.push_back(static_cast<std::size_t>(r) * w + c);
    }
  }

  struct Active {
    const PlantedEvent* p;
    FrameSpan span;
    std::vector<std::size_t> blob;
  };
  std::vector<Active> plants;
  for (const auto& p : spec.planted) {
    Active a{&p, span_of(p.t_s, p.t_e, fps), {}};
    if (p.label == EventLabel::LensContamination) {
      const double cr = margin + unif(rng) * (h - 2 * margin - 1);
      const double cc = margin + unif(rng) * (w - 2 * margin - 1);
      std::vector<std::pair<double, std::size_t>> by_dist;
      for (auto px : roi_pixels) {
        const double dr = static_cast<double>(px / w) - cr;
        const double dc = static_cast<double>(px % w) - cc;
        by_dist.emplace_back(dr * dr + dc * dc, px);
      }
      std::sort(by_dist.begin(), by_dist.end());
      const auto count = static_cast<std::size_t>(std::llround(p.coverage * static_cast<double>(roi_pixels.size())));
      for (std::size_t k = 0; k < count && k < by_dist.size(); ++k) a.blob.push_back(by_dist[k].second);
    }
    plants.push_back(std::move(a));
  }
  std::vector<FrameSpan> drift_spans;
  for (const auto& d : spec.drifts) drift_spans.push_back(span_of(d.t_s, d.t_e, fps));

  const double noise_on = spec.clean ? 0.0 : 1.0;
  const double tool_speed = 8.0 * scale;  // px/frame
  const double circle_r = 0.08 * std::min(h, w);
  const double omega = tool_speed / circle_r;
  const double anchor_u = 0.35 * w;
  const double anchor_v = 0.55 * h;
  const double deform_r = 90.0 * scale;
  const double deform_amp = 1.0;
  const double period = w / 2.5;

  GeneratedScenario out;
  auto& s = out.stream;
  s.video_id = spec.video_id;
  s.fps = fps;
  s.height = h;
  s.width = w;
  s.border_mask = border;
  s.frames.reserve(static_cast<std::size_t>(nframes));

  double tool_angle = 0.0;
  double pan_off_u = 0.0;
  double pan_off_v = 0.0;

  for (long i = 0; i < nframes; ++i) {
    SignalFrame f;
    f.t = static_cast<double>(i) / fps;

    bool interacting = false;
    bool smoke = false;
    double pan_u = 0.0, pan_v = 0.0;
    double z_base = spec.z0;
    const Active* contam = nullptr;
    for (const auto& a : plants) {
      const auto& p = *a.p;
      if (p.label == EventLabel::DepthAdvance || p.label == EventLabel::DepthRetreat) {
        z_base += p.dz * ramp_fraction(i, a.span);
      }
      if (!a.span.contains(i)) continue;
      switch (p.label) {
        case EventLabel::Interaction:
          interacting = true;
          break;
        case EventLabel::VisibilityDegradation:
          smoke = true;
          break;
        case EventLabel::LensContamination:
          contam = &a;
          break;
        default:
          break;
      }
      pan_u += p.pan_u;
      pan_v += p.pan_v;
    }
    for (std::size_t k = 0; k < drift_spans.size(); ++k) {
      z_base += spec.drifts[k].dz * ramp_fraction(i, drift_spans[k]);
    }

    if (interacting) tool_angle += omega;
    const double tip_u = anchor_u + circle_r * std::cos(tool_angle);
    const double tip_v = anchor_v + circle_r * std::sin(tool_angle);
    f.tool_tip = PixelPoint{quantize(tip_u), quantize(tip_v)};
    f.grasper_angle = quantize(0.3 + (interacting ? 0.2 * std::sin(2.0 * std::numbers::pi * 1.0 * f.t) : 0.0));

    const double resp_ang = 2.0 * std::numbers::pi * 0.25 * f.t;
    const double resp_u = spec.noise.respiration * std::cos(resp_ang);
    const double resp_v = spec.noise.respiration * std::sin(resp_ang);

    FlowGrid flow(h, w);
    RealGrid depth(h, w);
    RealGrid inten(h, w);
    MaskGrid lowvis(h, w, 0);
    MaskGrid tool(h, w, 0);

    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const std::size_t p = static_cast<std::size_t>(r) * w + c;
        double fu = pan_u + resp_u;
        double fv = pan_v + resp_v;
        const double du = c - f.tool_tip->u;
        const double dv = r - f.tool_tip->v;
        const double d = std::hypot(du, dv);
        if (interacting && d <= deform_r) {
          if (d > 1e-9) {
            fu += deform_amp * du / d;
            fv += deform_amp * dv / d;
          } else {
            fu += deform_amp;
          }
        }
        if (d <= 0.8) tool[p] = 1;
        fu += noise_on * spec.noise.flow * gauss(rng);
        fv += noise_on * spec.noise.flow * gauss(rng);
        flow[p] = Flow{static_cast<float>(quantize(fu)), static_cast<float>(quantize(fv))};

        const double pat = 0.1 * (c - 0.5 * (w - 1)) / w;
        depth[p] = static_cast<float>(quantize(z_base * (1.0 + pat) + noise_on * spec.noise.depth * gauss(rng)));

        const double tex = std::sin(2.0 * std::numbers::pi * (c - pan_off_u) / period) *
                           std::cos(2.0 * std::numbers::pi * (r - pan_off_v) / period);
        double I = 120.0 + 40.0 * tex;
        if (smoke) I = 0.15 * I + 0.85 * 220.0;
        inten[p] = static_cast<float>(I);
      }
    }
    if (contam) {
      for (auto p : contam->blob) {
        lowvis[p] = 1;
        inten[p] = 200.0f;
      }
    }
    for (std::size_t p = 0; p < npix; ++p) {
      const double I = inten[p] + noise_on * spec.noise.intensity * gauss(rng);
      inten[p] = static_cast<float>(quantize(std::clamp(I, 0.0, 255.0)));
      if (noise_on > 0.0 && unif(rng) < spec.noise.lowvis_flicker) lowvis[p] = 1;
    }

    f.flow = std::move(flow);
    f.depth = std::move(depth);
    f.intensity = std::move(inten);
    f.low_vis = std::move(lowvis);
    f.tool_mask = std::move(tool);
    f.surg_roi = roi;
    s.frames.push_back(std::move(f));

    pan_off_u += pan_u;
    pan_off_v += pan_v;
  }

  for (const auto& a : plants) {
    const auto& p = *a.p;
    TruthEvent t;
    t.video_id = spec.video_id;
    t.label = p.label;
    t.t_s = static_cast<double>(a.span.b) / fps;
    t.t_e = static_cast<double>(a.span.e) / fps;
    t.mode = p.mode;
    const double n = static_cast<double>(a.span.e - a.span.b);
    t.du = p.pan_u * n;
    t.dv = p.pan_v * n;
    t.dz = (p.label == EventLabel::DepthAdvance || p.label == EventLabel::DepthRetreat) ? p.dz : 0.0;
    out.truth.push_back(t);
  }
  std::sort(out.truth.begin(), out.truth.end(), [](const TruthEvent& a, const TruthEvent& b) {
    if (a.t_s != b.t_s) return a.t_s < b.t_s;
    return a.label < b.label;
  });
  return out;
}

void save_truth(const std::vector<TruthEvent>& truth, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write truth file " + path.string());
  std::string buf = std::string("# truth version=") + kFormatVersion + "\n# video_id,label,t_s,t_e,mode,du,dv,dz\n";
  for (const auto& t : truth) {
    buf += t.video_id + "," + std::string(label_name(t.label)) + ",";
    text::append(buf, t.t_s);
    buf += ',';
    text::append(buf, t.t_e);
    buf += "," + std::to_string(t.mode) + ",";
    text::append(buf, t.du);
    buf += ',';
    text::append(buf, t.dv);
    buf += ',';
    text::append(buf, t.dz);
    buf += '\n';
  }
  out << buf;
}

std::vector<TruthEvent> load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open truth file " + path.string());
  std::vector<TruthEvent> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto f = text::split_view(line, ',');
    if (f.size() != 8) throw ParseError("truth row needs 8 fields", lineno);
    TruthEvent t;
    t.video_id = std::string(f[0]);
    try {
      t.label = parse_label(f[1]);
      t.t_s = text::parse_double(f[2]);
      t.t_e = text::parse_double(f[3]);
      t.mode = static_cast<int>(text::parse_int(f[4]));
      t.du = text::parse_double(f[5]);
      t.dv = text::parse_double(f[6]);
      t.dz = text::parse_double(f[7]);
    } catch (const DataError& e) {
      throw ParseError(e.what(), lineno);
    }
    out.push_back(t);
  }
  return out;
}

Scenario detection_scenario(std::uint64_t seed, double duration, bool clean, int height, int width) {
  Scenario sc;
  sc.seed = seed;
  sc.video_id = "det" + std::to_string(seed);
  sc.duration = duration;
  sc.height = height;
  sc.width = width;
  sc.clean = clean;
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::uniform_real_distribution<double> jit(-1.0, 1.0);
  constexpr double kCycle = 30.0;
  for (double t0 = 0.0; t0 + kCycle <= duration + 1e-9; t0 += kCycle) {
    const auto add = [&](EventLabel l, double start, double len, double dz = 0.0) {
      PlantedEvent p;
      p.label = l;
      p.t_s = t0 + start + 0.4 * jit(rng);
      p.t_e = p.t_s + len + 0.3 * jit(rng);
      p.dz = dz;
      sc.planted.push_back(p);
    };
    add(EventLabel::Interaction, 2.0, 2.0);
    add(EventLabel::DepthAdvance, 7.0, 2.0, -20.0);
    add(EventLabel::DepthRetreat, 12.0, 2.0, 20.0);
    add(EventLabel::VisibilityDegradation, 17.0, 1.5);
    add(EventLabel::LensContamination, 22.0, 2.5);
  }
  return sc;
}

Scenario mode_scenario(std::uint64_t seed, int cycles, int height, int width) {
  Scenario sc;
  sc.seed = seed;
  sc.video_id = "modes" + std::to_string(seed);
  sc.height = height;
  sc.width = width;
  constexpr double kCycle = 24.0;
  sc.duration = kCycle * cycles;
  std::mt19937_64 rng(seed ^ 0x3a0dULL);
  std::uniform_real_distribution<double> jit(-1.0, 1.0);
  for (int c = 0; c < cycles; ++c) {
    const double t0 = kCycle * c;
    PlantedEvent inter;
    inter.label = EventLabel::Interaction;
    inter.mode = 0;
    inter.t_s = t0 + 1.0 + 0.2 * jit(rng);
    inter.t_e = inter.t_s + 2.2 + 0.3 * jit(rng);
    inter.pan_u = 0.1 + 0.02 * jit(rng);
    sc.planted.push_back(inter);

    PlantedEvent adv;
    adv.label = EventLabel::DepthAdvance;
    adv.mode = 1;
    adv.t_s = t0 + 5.0 + 0.2 * jit(rng);
    adv.t_e = adv.t_s + 2.0 + 0.2 * jit(rng);
    adv.dz = -12.0 + 2.0 * jit(rng);
    sc.planted.push_back(adv);
    sc.drifts.push_back({t0 + 8.0, t0 + 18.0, -adv.dz});

    PlantedEvent cont;
    cont.label = EventLabel::LensContamination;
    cont.mode = 2;
    cont.t_s = t0 + 19.5 + 0.2 * jit(rng);
    cont.t_e = cont.t_s + 2.5 + 0.3 * jit(rng);
    cont.coverage = 0.17 + 0.03 * jit(rng);
    sc.planted.push_back(cont);
  }
  return sc;
}

Scenario cleaning_scenario(std::uint64_t seed) {
  Scenario sc;
  sc.seed = seed;
  sc.video_id = "clean" + std::to_string(seed);
  sc.duration = 12.0;
  sc.z0 = 80.0;
  PlantedEvent cont;
  cont.label = EventLabel::LensContamination;
  cont.t_s = 2.0;
  cont.t_e = 5.0;
  cont.coverage = 0.2;
  PlantedEvent fog;
  fog.label = EventLabel::VisibilityDegradation;
  fog.t_s = 2.0;
  fog.t_e = 6.5;
  PlantedEvent retreat;
  retreat.label = EventLabel::DepthRetreat;
  retreat.t_s = 5.0;
  retreat.t_e = 7.0;
  retreat.dz = 20.0;
  sc.planted = {cont, fog, retreat};
  return sc;
}

}  // namespace lapcam
