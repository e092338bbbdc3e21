#include "lapcam/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>

#include "lapcam/common.hpp"
#include "lapcam/metrics.hpp"
#include "lapcam/supervision.hpp"
#include "lapcam/text_io.hpp"

namespace fs = std::filesystem;

namespace lapcam {

namespace {

fs::path need(const fs::path& dir, const char* name, const char* stage) {
  const auto p = dir / name;
  if (!fs::exists(p)) throw DataError(std::string(stage) + ": missing input " + p.string());
  return p;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

double finite_or_nan(std::optional<double> v) { return v ? *v : std::numeric_limits<double>::quiet_NaN(); }

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::vector<std::vector<double>> cluster_attributes(const std::vector<EventRecord>& raw) {
  std::vector<std::vector<double>> a;
  a.reserve(raw.size());
  for (const auto& e : raw) {
    const double dz = e.mask[desc::kAction + 2] ? e.x[desc::kAction + 2] : 0.0;
    const double f = flow_direction(e);
    a.push_back({dz, std::isfinite(f) ? f : 0.0});
  }
  return a;
}

}  // namespace

void stage_generate(const PipelineConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  const auto gen = generate_scenario(cfg.scenario.build());
  save_stream(gen.stream, dir / artifact::kStream);
  save_truth(gen.truth, dir / artifact::kTruth);
}

void stage_parse(const PipelineConfig& cfg, const fs::path& dir) {
  const auto stream = load_stream(need(dir, artifact::kStream, "parse"));
  save_events(parse_stream(stream, cfg.detector), dir / artifact::kEvents);
}

void stage_respond(const PipelineConfig& cfg, const fs::path& dir) {
  const auto stream = load_stream(need(dir, artifact::kStream, "respond"));
  const auto events = load_events(need(dir, artifact::kEvents, "respond"));
  save_events(respond_events(events, stream, cfg.detector, cfg.response), dir / artifact::kResponded);
}

void stage_graph(const PipelineConfig& cfg, const fs::path& dir) {
  const auto raw = load_events(need(dir, artifact::kResponded, "graph"));
  require_config(!raw.empty(), "graph: no events to connect");
  const auto g = build_graph(normalize_descriptors(raw), cfg.graph);
  fs::remove_all(dir / artifact::kGraph);
  save_graph(g, dir / artifact::kGraph);
}

void stage_mine(const PipelineConfig& cfg, const fs::path& dir) {
  const auto g = load_graph(need(dir, artifact::kGraph, "mine"));
  const auto raw = load_events(need(dir, artifact::kResponded, "mine"));
  const auto m = mine_strategies(g, raw, cfg.miner);
  fs::remove_all(dir / artifact::kModel);
  save_model(m, dir / artifact::kModel);
}

void stage_supervise(const PipelineConfig& cfg, const fs::path& dir) {
  const auto raw = load_events(need(dir, artifact::kResponded, "supervise"));
  const auto m = load_model(need(dir, artifact::kModel, "supervise"));
  if (m.labels.size() != raw.size()) throw IntegrityError("supervise: model and events differ in length");
  const auto samples = propagate_labels(raw, m.labels, m.event_directions, m.U, cfg.supervision.rate_hz);
  save_samples(balance(samples, cfg.supervision.seed).samples, dir / artifact::kSamples);
}

std::vector<std::pair<double, SimCommand>> predictor_schedule(const std::vector<EventRecord>& normalized,
                                                              const StrategyModel& model, int min_shared) {
  const auto& withdraw_name = strategy_taxonomy()[10];
  std::vector<std::pair<double, SimCommand>> out;
  for (const auto& e : normalized) {
    const auto p = prototype_predict(e.x, e.mask, model, min_shared);
    SimCommand c;
    c.source = "predictor";
    if (model.clusters[static_cast<std::size_t>(p.s_hat)].name == withdraw_name) {
      c.withdraw = true;
    } else {
      c.d = p.d_hat;
    }
    // decisions become available once the event has ended
    out.emplace_back(e.t_e, c);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

void stage_simulate(const PipelineConfig& cfg, const fs::path& dir) {
  const auto g = load_graph(need(dir, artifact::kGraph, "simulate"));
  const auto m = load_model(need(dir, artifact::kModel, "simulate"));
  const auto setup = make_setup(cfg.arm, cfg.simulation.home, cfg.simulation.lambda0, cfg.simulation.target_offset_px);

  ScheduledSource primary(predictor_schedule(g.events, m, cfg.supervision.min_shared));
  std::optional<ScheduledSource> override_src;
  std::optional<OverrideSource> merged;
  CommandSource* src = &primary;
  if (cfg.simulation.override_script) {
    std::ifstream in(*cfg.simulation.override_script);
    require_config(static_cast<bool>(in), "simulate: cannot open override script");
    override_src.emplace(parse_override_script(in));
    merged.emplace(&primary, &*override_src);
    src = &*merged;
  }
  const auto& K = setup.scene.camera.K;
  const Setpoint centre{{K(0, 2), K(1, 2)}, cfg.simulation.lambda0};
  const auto traj = run_episode(setup.arm, setup.scene, cfg.control, setup.initial, centre, src, cfg.simulation.duration);
  save_trajectory(traj, dir / artifact::kTrajectory);
}

void stage_evaluate(const PipelineConfig& cfg, const fs::path& dir) {
  const auto truth = load_truth(need(dir, artifact::kTruth, "evaluate"));
  const auto raw = load_events(need(dir, artifact::kResponded, "evaluate"));
  const auto m = load_model(need(dir, artifact::kModel, "evaluate"));
  const auto samples = load_samples(need(dir, artifact::kSamples, "evaluate"));
  const auto traj = load_trajectory(need(dir, artifact::kTrajectory, "evaluate"));
  if (m.labels.size() != raw.size()) throw IntegrityError("evaluate: model and events differ in length");

  nlohmann::json out;
  out["version"] = kFormatVersion;

  std::vector<LabeledInterval> pred, tru;
  for (const auto& e : raw) pred.push_back(to_interval(e));
  for (const auto& t : truth) tru.push_back(to_interval(t));
  const auto match = match_events(pred, tru, 0.5);
  auto& ev = out["events"];
  ev["detected"] = raw.size();
  ev["truth"] = truth.size();
  ev["macro_f1"] = num(match.macro_f1);
  ev["mean_tiou"] = num(match.mean_tiou);
  ev["depth_mae"] = num(finite_or_nan(match.depth_mae));
  for (int c = 0; c < kNumEventLabels; ++c) {
    if (!match.present[static_cast<std::size_t>(c)]) continue;
    const auto& s = match.per_class[static_cast<std::size_t>(c)];
    ev["per_class"][std::string(label_name(static_cast<EventLabel>(c)))] = {
        {"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}, {"f1", num(s.f1)}};
  }

  const auto modes = truth_modes(raw, truth);
  std::vector<int> p, t;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (modes[i] < 0) continue;
    p.push_back(m.labels[i]);
    t.push_back(modes[i]);
  }
  auto& mi = out["mining"];
  mi["k"] = m.k;
  mi["scored_events"] = p.size();
  mi["purity"] = p.empty() ? nlohmann::json(nullptr) : num(purity(p, t));
  mi["nmi"] = p.empty() ? nlohmann::json(nullptr) : num(nmi(p, t));
  mi["var_intra"] = num(var_intra(cluster_attributes(raw), m.labels).mean);
  for (const auto& c : m.clusters) mi["clusters"].push_back({{"name", c.name}, {"members", c.members}});

  std::size_t zero = 0;
  for (const auto& s : samples) zero += s.d_star == Direction{0, 0, 0};
  out["supervision"] = {{"samples", samples.size()}, {"zero_direction", zero}};

  std::vector<double> tt, lam, lam_d;
  std::vector<PixelPoint> f, fd;
  std::vector<std::array<double, 3>> pos, vel;
  std::vector<bool> withdrawing;
  std::vector<std::vector<PixelPoint>> tracks(traj.rows.empty() ? 0 : traj.rows.front().features.size());
  double max_rcm = 0.0;
  for (const auto& r : traj.rows) {
    tt.push_back(r.t);
    lam.push_back(r.lambda);
    lam_d.push_back(r.lambda_d);
    f.push_back({r.f.x(), r.f.y()});
    fd.push_back({r.f_d.x(), r.f_d.y()});
    pos.push_back({r.cam_pos.x(), r.cam_pos.y(), r.cam_pos.z()});
    vel.push_back({r.cam_vel.x(), r.cam_vel.y(), r.cam_vel.z()});
    withdrawing.push_back((r.flags & flags::kWithdraw) != 0);
    for (std::size_t k = 0; k < tracks.size(); ++k) tracks[k].push_back({r.features[k].x(), r.features[k].y()});
    max_rcm = std::max(max_rcm, r.rcm_error);
  }
  auto& sim = out["simulation"];
  sim["rows"] = traj.rows.size();
  if (!traj.rows.empty()) {
    const double fps = 1.0 / traj.dt;
    const auto [e_depth, e_depth_rel] = depth_errors(lam, lam_d);
    const auto R = hf_ratio(pos, fps);
    const Eigen::Matrix3d K = CameraModel{}.K;
    sim["max_rcm_error"] = num(max_rcm);
    sim["centering_error"] = num(centering_error(f, fd));
    sim["shaking_index"] = num(shaking_index(tracks));
    sim["hf_ratio"] = {num(R[0]), num(R[1]), num(R[2])};
    sim["depth_error"] = num(e_depth);
    sim["depth_error_rel"] = num(e_depth_rel);
    sim["pose_jitter"] = num(pose_jitter(vel, fps));
    sim["pose_jitter_rms"] = num(pose_jitter(vel, fps, 2.0, true));
    sim["time_to_target"] =
        num(finite_or_nan(time_to_target(tt, f, {K(0, 2), K(1, 2)}, cfg.control.feature_tol, 0.0)));
    sim["recovery_time"] = num(finite_or_nan(recovery_time(tt, withdrawing)));
  }
  write_json(out, dir / artifact::kEvaluation);
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"generate", "parse",     "respond",  "graph",
                                                 "mine",     "supervise", "simulate", "evaluate"};
  return names;
}

void run_stage(const std::string& name, const PipelineConfig& cfg, const fs::path& dir) {
  static const std::map<std::string, std::function<void(const PipelineConfig&, const fs::path&)>> stages = {
      {"generate", stage_generate}, {"parse", stage_parse},         {"respond", stage_respond},
      {"graph", stage_graph},       {"mine", stage_mine},           {"supervise", stage_supervise},
      {"simulate", stage_simulate}, {"evaluate", stage_evaluate}};
  const auto it = stages.find(name);
  require_config(it != stages.end(), "unknown stage '" + name + "'");
  it->second(cfg, dir);
}

void run_pipeline(const PipelineConfig& cfg, const fs::path& dir, const std::string& from) {
  cfg.validate();
  const auto& names = stage_names();
  const auto start = std::find(names.begin(), names.end(), from);
  require_config(start != names.end(), "unknown stage '" + from + "'");
  fs::create_directories(dir);
  for (auto it = start; it != names.end(); ++it) run_stage(*it, cfg, dir);
  write_manifest(dir);
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  require_invariant(ctx && EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) == 1, "sha256 init failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require_invariant(EVP_DigestFinal_ex(ctx.get(), md, &len) == 1, "sha256 final failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

nlohmann::json build_manifest(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir).generic_string();
    if (rel == artifact::kManifest) continue;
    files[rel] = sha256_file(entry.path());
  }
  nlohmann::json j;
  j["version"] = kFormatVersion;
  j["files"] = files;
  return j;
}

void write_manifest(const fs::path& dir) { write_json(build_manifest(dir), dir / artifact::kManifest); }

std::vector<int> truth_modes(const std::vector<EventRecord>& events, const std::vector<TruthEvent>& truth) {
  std::vector<int> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    int mode = -1;
    double best = 0.0;
    for (const auto& t : truth) {
      if (t.video_id != e.video_id) continue;
      const double o = tiou(e.t_s, e.t_e, t.t_s, t.t_e);
      if (o > best) {
        best = o;
        mode = t.mode;
      }
    }
    out.push_back(mode);
  }
  return out;
}

double flow_direction(const EventRecord& raw) {
  if (!raw.mask[desc::kAction] || !raw.mask[desc::kAction + 1]) return std::numeric_limits<double>::quiet_NaN();
  const double du = raw.x[desc::kAction], dv = raw.x[desc::kAction + 1];
  if (du == 0.0 && dv == 0.0) return 0.0;
  return std::atan2(dv, du);
}

AblationReport ablate_k(const AttributedEventGraph& g, const std::vector<EventRecord>& raw,
                        const std::vector<int>& truth_mode, const MinerConfig& cfg, const std::vector<int>& grid) {
  require_config(!grid.empty(), "ablation grid is empty");
  require_config(truth_mode.size() == raw.size() && raw.size() == g.size(), "ablation inputs differ in length");
  const auto rg = build_refined_graphs(g, cfg);
  const auto attrs = cluster_attributes(raw);
  AblationReport rep;
  for (int k : grid) {
    MinerConfig c = cfg;
    c.k = k;
    const auto m = mine_with_graphs(g, rg, raw, c, false);
    std::vector<int> p, t;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (truth_mode[i] < 0) continue;
      p.push_back(m.labels[i]);
      t.push_back(truth_mode[i]);
    }
    AblationRow row;
    row.k = k;
    row.purity = p.empty() ? 0.0 : purity(p, t);
    row.nmi = p.empty() ? 0.0 : nmi(p, t);
    row.var_intra = var_intra(attrs, m.labels).mean;
    for (const auto& cl : m.clusters) row.empty_clusters += cl.vacant;
    rep.rows.push_back(row);
  }
  const auto best = std::min_element(rep.rows.begin(), rep.rows.end(), [](const auto& a, const auto& b) {
    if (a.purity != b.purity) return a.purity > b.purity;
    if (a.nmi != b.nmi) return a.nmi > b.nmi;
    return a.k < b.k;
  });
  rep.best_k = best->k;
  return rep;
}

void save_ablation(const AblationReport& r, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# ablation version=" << kFormatVersion << " best_k=" << r.best_k << '\n';
  out << "k,purity,nmi,var_intra,empty_clusters\n";
  for (const auto& row : r.rows) {
    out << row.k << ',' << text::format(row.purity) << ',' << text::format(row.nmi) << ','
        << text::format(row.var_intra) << ',' << row.empty_clusters << '\n';
  }
}

}  // namespace lapcam
