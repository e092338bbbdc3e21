#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "lapcam/common.hpp"
#include "lapcam/pipeline.hpp"

namespace lapcam {

namespace {

// Reads known keys of one mapping and rejects the rest.
class Section {
 public:
  Section(const YAML::Node& node, std::string name) : node_(node), name_(std::move(name)) {
    require_config(!node_ || node_.IsMap(), "section '" + name_ + "' must be a mapping");
  }
  ~Section() noexcept(false) {
    if (!node_ || std::uncaught_exceptions() > 0) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      require_config(seen_.count(key) > 0, "unknown key '" + name_ + "." + key + "'");
    }
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const YAML::Node v = lookup(key);
    if (!v) return;
    try {
      out = v.template as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("bad value for '" + name_ + "." + key + "'");
    }
  }

  template <class T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    const YAML::Node node = lookup(key);
    if (!node || node.IsNull()) return;
    T v{};
    get(key, v);
    out = v;
  }

  YAML::Node child(const char* key) {
    seen_.insert(key);
    return lookup(key);
  }

 private:
  YAML::Node lookup(const char* key) const {
    if (!node_) return YAML::Node(YAML::NodeType::Undefined);
    const YAML::Node& n = node_;
    return n[key];
  }

  YAML::Node node_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_vec2(Section& s, const char* key, Eigen::Vector2d& v) {
  std::vector<double> x{v.x(), v.y()};
  s.get(key, x);
  require_config(x.size() == 2, std::string("'") + key + "' needs 2 values");
  v = {x[0], x[1]};
}

void read_vec3(Section& s, const char* key, Eigen::Vector3d& v) {
  std::vector<double> x{v.x(), v.y(), v.z()};
  s.get(key, x);
  require_config(x.size() == 3, std::string("'") + key + "' needs 3 values");
  v = {x[0], x[1], x[2]};
}

void read_arm(const YAML::Node& node, ArmModel& arm) {
  Section s(node, "arm");
  if (auto dh = s.child("dh")) {
    require_config(dh.IsSequence(), "arm.dh must be a list of [a, alpha, d, theta_offset]");
    arm.dh.clear();
    for (const auto& row : dh) {
      std::vector<double> r;
      try {
        r = row.as<std::vector<double>>();
      } catch (const YAML::Exception&) {
        throw ConfigError("bad arm.dh row");
      }
      require_config(r.size() == 4, "arm.dh rows need 4 values");
      arm.dh.push_back({r[0], r[1], r[2], r[3]});
    }
  }
  if (auto lim = s.child("joint_limits")) {
    arm.joint_limits.clear();
    for (const auto& row : lim) {
      std::vector<double> r;
      try {
        r = row.as<std::vector<double>>();
      } catch (const YAML::Exception&) {
        throw ConfigError("bad arm.joint_limits row");
      }
      require_config(r.size() == 2, "arm.joint_limits rows need 2 values");
      arm.joint_limits.emplace_back(r[0], r[1]);
    }
  }
  s.get("velocity_limits", arm.velocity_limits);
  s.get("scope_length", arm.scope_length);
}

}  // namespace

Scenario ScenarioSection::build() const {
  if (kind == "modes") return mode_scenario(seed, cycles, height, width);
  if (kind == "detection") return detection_scenario(seed, duration, clean, height, width);
  if (kind == "cleaning") return cleaning_scenario(seed);
  throw ConfigError("unknown scenario kind '" + kind + "'");
}

void PipelineConfig::validate() const {
  require_config(scenario.kind == "modes" || scenario.kind == "detection" || scenario.kind == "cleaning",
                 "unknown scenario kind '" + scenario.kind + "'");
  require_config(scenario.cycles >= 1 && scenario.duration > 0.0, "scenario size must be positive");
  require_config(scenario.height >= 4 && scenario.width >= 4, "scenario grid too small");
  detector.validate();
  graph.validate();
  miner.validate();
  require_config(supervision.rate_hz > 0.0 && supervision.min_shared >= 1, "bad supervision settings");
  control.validate();
  arm.validate();
  require_config(simulation.duration > 0.0, "simulation duration must be positive");
  make_setup(arm, simulation.home, simulation.lambda0, simulation.target_offset_px);
  require_config(!ablation_grid.empty(), "ablation grid is empty");
  for (int k : ablation_grid) require_config(k >= 1, "ablation K must be positive");
}

PipelineConfig default_pipeline_config() {
  PipelineConfig c;
  c.miner.k = 3;
  return c;
}

PipelineConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  PipelineConfig c = default_pipeline_config();
  if (!root || root.IsNull()) return c;
  Section top(root, "config");

  {
    std::string version = kFormatVersion;
    top.get("version", version);
    require_config(version == kFormatVersion, "unsupported config version '" + version + "'");
  }
  {
    Section s(top.child("scenario"), "scenario");
    s.get("kind", c.scenario.kind);
    s.get("seed", c.scenario.seed);
    s.get("cycles", c.scenario.cycles);
    s.get("duration", c.scenario.duration);
    s.get("height", c.scenario.height);
    s.get("width", c.scenario.width);
    s.get("clean", c.scenario.clean);
  }
  {
    auto& d = c.detector;
    Section s(top.child("detector"), "detector");
    s.get("tau_def", d.tau_def);
    s.get("tau_p", d.tau_p);
    s.get("tau_theta", d.tau_theta);
    s.get("delta_def_coeff", d.delta_def_coeff);
    s.get("tau_z", d.tau_z);
    s.get("delta_min_coeff", d.delta_min_coeff);
    s.get_optional("tau_F", d.tau_F);
    s.get_optional("tau_C", d.tau_C);
    s.get("vq_percentile", d.vq_percentile);
    s.get("vq_scale", d.vq_scale);
    s.get("tau_persist", d.tau_persist);
    s.get("tau_cont", d.tau_cont);
    s.get("t_min", d.t_min);
    s.get("k_w", d.k_w);
    s.get("r_act", d.r_act);
    s.get("bridge_gap", d.bridge_gap);
    s.get("hysteresis_ratio", d.hysteresis_ratio);
    s.get("eps", d.eps);
    s.get("cutoff_hz", d.cutoff_hz);
    s.get("savgol_window", d.savgol_window);
    s.get("savgol_degree", d.savgol_degree);
    s.get("reference_resolution", d.reference_resolution);
    s.get("severe_lowvis_frac", d.severe_lowvis_frac);
    s.get("restore_window", d.restore_window);
  }
  {
    auto& r = c.response;
    Section s(top.child("response"), "response");
    s.get("inlier_px", r.ransac.inlier_px);
    s.get("ransac_iters", r.ransac.iters);
    s.get("min_inlier_frac", r.ransac.min_inlier_frac);
    s.get("ransac_seed", r.ransac.seed);
    s.get("min_valid_fraction", r.min_valid_fraction);
    s.get("reference_resolution", r.reference_resolution);
  }
  {
    Section s(top.child("graph"), "graph");
    s.get("delta_t", c.graph.delta_t);
    s.get("delta_ovl", c.graph.delta_ovl);
    s.get("k_topk", c.graph.k_topk);
    s.get("min_shared", c.graph.min_shared);
  }
  {
    auto& m = c.miner;
    Section s(top.child("miner"), "miner");
    s.get("k", m.k);
    s.get("mu", m.mu);
    s.get("lambda", m.lambda);
    s.get("alpha", m.alpha);
    s.get("seed", m.seed);
    s.get("unit_weights", m.unit_weights);
    s.get("self_express_iters", m.self_express.max_iter);
    s.get("self_express_tol", m.self_express.tol);
    s.get("wsnmf_inits", m.wsnmf.inits);
    s.get("wsnmf_iters", m.wsnmf.iters);
    s.get("wsnmf_tol", m.wsnmf.tol);
    s.get("gaae_dim", m.gaae.dim);
    s.get("gaae_epochs", m.gaae.epochs);
    s.get("gaae_lr", m.gaae.lr);
    s.get("deadband_uv", m.deadband_uv);
    s.get("deadband_z_coeff", m.deadband_z_coeff);
    s.get("low_inlier_ratio", m.low_inlier_ratio);
  }
  {
    Section s(top.child("supervision"), "supervision");
    s.get("rate_hz", c.supervision.rate_hz);
    s.get("seed", c.supervision.seed);
    s.get("min_shared", c.supervision.min_shared);
  }
  {
    auto& k = c.control;
    Section s(top.child("control"), "control");
    read_vec2(s, "k_f", k.k_f);
    read_vec3(s, "k_rcm", k.k_rcm);
    s.get("k_lambda", k.k_lambda);
    s.get("damping", k.damping);
    s.get("s_u", k.s_u);
    s.get("s_v", k.s_v);
    s.get("s_z", k.s_z);
    s.get("control_hz", k.control_hz);
    s.get("command_hz", k.command_hz);
    s.get("rcm_tol", k.rcm_tol);
    s.get("feature_tol", k.feature_tol);
    s.get("lambda_min", k.lambda_min);
    s.get("lambda_max", k.lambda_max);
    s.get("margin", k.margin);
    s.get("recover_time", k.recover_time);
    s.get("fd_step", k.fd_step);
  }
  read_arm(top.child("arm"), c.arm);
  {
    Section s(top.child("simulation"), "simulation");
    s.get("duration", c.simulation.duration);
    s.get("target_offset_px", c.simulation.target_offset_px);
    s.get("lambda0", c.simulation.lambda0);
    std::vector<double> home(c.simulation.home.data(), c.simulation.home.data() + c.simulation.home.size());
    s.get("home", home);
    c.simulation.home = Eigen::Map<const Eigen::VectorXd>(home.data(), static_cast<Eigen::Index>(home.size()));
    std::optional<std::string> script;
    s.get_optional("override_script", script);
    if (script) c.simulation.override_script = *script;
  }
  {
    Section s(top.child("ablation"), "ablation");
    s.get("grid", c.ablation_grid);
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require_config(static_cast<bool>(in), "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace lapcam
