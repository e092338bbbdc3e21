#include "lapcam/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <sstream>

#include "lapcam/text_io.hpp"

namespace lapcam {

namespace {

Eigen::Isometry3d dh_transform(const DhRow& r, double q) {
  const double th = q + r.theta_offset;
  const double ct = std::cos(th), st = std::sin(th), ca = std::cos(r.alpha), sa = std::sin(r.alpha);
  Eigen::Matrix4d m;
  m << ct, -st * ca, st * sa, r.a * ct,  //
      st, ct * ca, -ct * sa, r.a * st,   //
      0, sa, ca, r.d,                    //
      0, 0, 0, 1;
  Eigen::Isometry3d t;
  t.matrix() = m;
  return t;
}

Eigen::Vector3d vee(const Eigen::Matrix3d& s) {
  return {0.5 * (s(2, 1) - s(1, 2)), 0.5 * (s(0, 2) - s(2, 0)), 0.5 * (s(1, 0) - s(0, 1))};
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

}  // namespace

void ArmModel::validate() const {
  require_config(!dh.empty(), "arm needs at least one joint");
  require_config(joint_limits.size() == dh.size() && velocity_limits.size() == dh.size(),
                 "joint and velocity limits must match the joint count");
  for (const auto& [lo, hi] : joint_limits) require_config(lo < hi, "joint limits must be ordered");
  for (double v : velocity_limits) require_config(v > 0.0, "velocity limits must be positive");
  require_config(scope_length > 0.0, "scope length must be positive");
}

ArmModel ArmModel::default_arm() {
  constexpr double h = std::numbers::pi / 2;
  ArmModel a;
  const double d[] = {0.34, 0.0, 0.4, 0.0, 0.4, 0.0, 0.126};
  const double alpha[] = {-h, h, h, -h, -h, h, 0.0};
  const double lim[] = {2.96, 2.09, 2.96, 2.09, 2.96, 2.09, 3.05};
  for (int i = 0; i < 7; ++i) {
    a.dh.push_back({0.0, alpha[i], d[i], 0.0});
    a.joint_limits.emplace_back(-lim[i], lim[i]);
    a.velocity_limits.push_back(1.0);
  }
  return a;
}

ScopePose forward_kinematics(const ArmModel& arm, const Eigen::VectorXd& q) {
  require_config(q.size() == arm.n(), "joint vector has the wrong size");
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  for (int i = 0; i < arm.n(); ++i) t = t * dh_transform(arm.dh[static_cast<std::size_t>(i)], q(i));
  ScopePose p;
  p.ee = t;
  const Eigen::Isometry3d scope = t * arm.attach;
  p.p_i = scope.translation();
  p.p_ip1 = p.p_i + arm.scope_length * scope.linear().col(2);
  p.camera = scope;
  p.camera.translation() = p.p_ip1;
  return p;
}

ArmJacobians jacobians(const ArmModel& arm, const Eigen::VectorXd& q, double step) {
  const int n = arm.n();
  ArmJacobians j;
  j.J_i.resize(3, n);
  j.J_ip1.resize(3, n);
  j.J_r.resize(6, n);
  const auto base = forward_kinematics(arm, q);
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd qp = q, qm = q;
    qp(k) += step;
    qm(k) -= step;
    const auto fp = forward_kinematics(arm, qp), fm = forward_kinematics(arm, qm);
    j.J_i.col(k) = (fp.p_i - fm.p_i) / (2 * step);
    j.J_ip1.col(k) = (fp.p_ip1 - fm.p_ip1) / (2 * step);
    j.J_r.block<3, 1>(0, k) = (fp.ee.translation() - fm.ee.translation()) / (2 * step);
    const Eigen::Matrix3d dR = (fp.ee.linear() - fm.ee.linear()) / (2 * step);
    j.J_r.block<3, 1>(3, k) = vee(dR * base.ee.linear().transpose());
  }
  // camera frame relative to the EE
  const Eigen::Isometry3d c_ee = base.ee.inverse() * base.camera;
  const Eigen::Matrix3d Rce_t = c_ee.linear().transpose();
  Eigen::Matrix<double, 6, 6> A = Eigen::Matrix<double, 6, 6>::Zero();
  A.block<3, 3>(0, 0) = Rce_t;
  A.block<3, 3>(0, 3) = -Rce_t * skew(c_ee.translation());
  A.block<3, 3>(3, 3) = Rce_t;
  Eigen::Matrix<double, 6, 6> B = Eigen::Matrix<double, 6, 6>::Zero();
  B.block<3, 3>(0, 0) = base.ee.linear().transpose();
  B.block<3, 3>(3, 3) = base.ee.linear().transpose();
  j.J_c = A * B * j.J_r;
  return j;
}

Eigen::Vector3d rcm_point(const Eigen::Vector3d& p_i, const Eigen::Vector3d& p_ip1, double lambda) {
  return p_i + lambda * (p_ip1 - p_i);
}

Eigen::MatrixXd rcm_jacobian(const Eigen::MatrixXd& J_i, const Eigen::MatrixXd& J_ip1, const Eigen::Vector3d& p_i,
                             const Eigen::Vector3d& p_ip1, double lambda) {
  const auto n = J_i.cols();
  Eigen::MatrixXd J(3, n + 1);
  J.leftCols(n) = J_i + lambda * (J_ip1 - J_i);
  J.col(n) = p_ip1 - p_i;
  return J;
}

Eigen::Matrix<double, 2, 6> interaction_matrix(const Eigen::Vector2d& f_d, double z_d, const Eigen::Matrix3d& K) {
  require_config(z_d > 0.0, "desired depth must be positive");
  const Eigen::Vector3d xn = K.triangularView<Eigen::Upper>().solve(Eigen::Vector3d(f_d.x(), f_d.y(), 1.0));
  const double x = xn.x() / xn.z(), y = xn.y() / xn.z();
  Eigen::Matrix<double, 2, 6> L;
  L << -1.0 / z_d, 0.0, x / z_d, x * y, -(1.0 + x * x), y,  //
      0.0, -1.0 / z_d, y / z_d, 1.0 + y * y, -x * y, -x;
  return L;
}

Projection project(const Eigen::Isometry3d& camera, const Eigen::Vector3d& p, const Eigen::Matrix3d& K) {
  const Eigen::Vector3d pc = camera.inverse() * p;
  Projection out;
  out.depth = pc.z();
  out.in_front = pc.z() > 1e-9;
  if (out.in_front) {
    const Eigen::Vector3d h = K * (pc / pc.z());
    out.f = h.head<2>();
  }
  return out;
}

Eigen::Vector3d SceneModel::target_at(double t) const {
  require_config(!target_script.empty(), "scene has no target");
  Eigen::Vector3d p = target_script.front().second;
  for (const auto& [ts, pos] : target_script) {
    if (ts <= t + 1e-12) p = pos;
  }
  return p;
}

void SceneModel::validate() const {
  require_config(!target_script.empty(), "scene has no target");
  for (std::size_t i = 1; i < target_script.size(); ++i) {
    require_config(target_script[i].first >= target_script[i - 1].first, "target script must be sorted by time");
  }
  require_config(std::abs(camera.K.determinant()) > 1e-12, "intrinsics must be invertible");
  require_config(camera.K(1, 0) == 0.0 && camera.K(2, 0) == 0.0 && camera.K(2, 1) == 0.0,
                 "intrinsics must be upper triangular");
  require_config(camera.width > 0 && camera.height > 0, "image size must be positive");
}

void ControlConfig::validate() const {
  require_config((k_f.array() > 0).all() && (k_rcm.array() > 0).all(), "gains must be positive");
  require_config(k_lambda >= 0.0, "k_lambda must be non-negative");
  require_config(damping >= 0.0, "damping must be non-negative");
  require_config(s_u >= 0.0 && s_v >= 0.0 && s_z >= 0.0, "step sizes must be non-negative");
  require_config(control_hz > 0.0 && command_hz > 0.0 && command_hz <= control_hz, "bad control rates");
  require_config(std::abs(control_hz / command_hz - std::round(control_hz / command_hz)) < 1e-9,
                 "control rate must be a multiple of the command rate");
  require_config(0.0 < lambda_min && lambda_min < lambda_max && lambda_max < 1.0, "bad penetration band");
  require_config(margin >= 0.0 && recover_time >= 0.0 && fd_step > 0.0, "bad safety settings");
}

StepResult control_step(const ArmModel& arm, const SceneModel& scene, const ControlConfig& cfg,
                        const RobotState& state, const Eigen::Vector2d& f_d, double lambda_d, double dt) {
  const int n = arm.n();
  StepResult r;
  r.state = state;
  r.state.t = state.t + dt;
  r.qdot = Eigen::VectorXd::Zero(n);

  const auto fk = forward_kinematics(arm, state.q);
  const auto proj = project(fk.camera, scene.target_at(state.t), scene.camera.K);
  const auto jac = jacobians(arm, state.q, cfg.fd_step);
  const Eigen::MatrixXd J_rcm = rcm_jacobian(jac.J_i, jac.J_ip1, fk.p_i, fk.p_ip1, state.lambda);
  if (!proj.in_front) {
    r.flags |= flags::kTargetBehind;
    return r;
  }

  const Eigen::Matrix<double, 2, 6> L = interaction_matrix(f_d, proj.depth, scene.camera.K);
  const Eigen::Matrix2d fscale = scene.camera.K.topLeftCorner<2, 2>();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(5, n + 1);
  J.topLeftCorner(2, n) = fscale * L * jac.J_c;
  J.bottomRows(3) = J_rcm;

  Eigen::VectorXd ke(5);
  ke.head<2>() = cfg.k_f.cwiseProduct(f_d - proj.f);
  ke.tail<3>() = cfg.k_rcm.cwiseProduct(scene.trocar - rcm_point(fk.p_i, fk.p_ip1, state.lambda));
  Eigen::VectorXd omega = Eigen::VectorXd::Zero(n + 1);
  omega(n) = cfg.k_lambda * (lambda_d - state.lambda);

  const Eigen::MatrixXd JJt = J * J.transpose() + cfg.damping * Eigen::MatrixXd::Identity(5, 5);
  const Eigen::LDLT<Eigen::MatrixXd> solver(JJt);
  const auto pinv_apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return J.transpose() * solver.solve(v);
  };
  Eigen::VectorXd u = pinv_apply(ke) + omega - pinv_apply(J * omega);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) rank += sv(i) > 1e-9 * std::max(1.0, sv(0));
  r.null_dim = n + 1 - rank;

  double scale = 1.0;
  for (int k = 0; k < n; ++k) scale = std::max(scale, std::abs(u(k)) / arm.velocity_limits[static_cast<std::size_t>(k)]);
  if (scale > 1.0) {
    u /= scale;
    r.flags |= flags::kVelocityClamped;
  }
  for (int k = 0; k < n; ++k) {
    const auto [lo, hi] = arm.joint_limits[static_cast<std::size_t>(k)];
    const double next = state.q(k) + u(k) * dt;
    if (next < lo || next > hi) {
      u(k) = 0.0;
      r.flags |= flags::kJointLimit;
    }
  }
  r.qdot = u.head(n);
  r.lambda_dot = u(n);
  r.state.q = state.q + dt * r.qdot;
  double lam = state.lambda + dt * r.lambda_dot;
  if (lam < cfg.lambda_min || lam > cfg.lambda_max) {
    lam = std::clamp(lam, cfg.lambda_min, cfg.lambda_max);
    r.flags |= flags::kLambdaClamped;
  }
  r.state.lambda = lam;
  return r;
}

Setpoint apply_direction(const Direction& d, const Eigen::Vector2d& f, double lambda, const ControlConfig& cfg,
                         const CameraModel& cam) {
  for (int a : d) require_config(a >= -1 && a <= 1, "direction entries must be in {-1,0,+1}");
  Setpoint s;
  s.f_d = f + Eigen::Vector2d(cfg.s_u * d[0], cfg.s_v * d[1]);
  s.f_d.x() = std::clamp(s.f_d.x(), cfg.margin, cam.width - cfg.margin);
  s.f_d.y() = std::clamp(s.f_d.y(), cfg.margin, cam.height - cfg.margin);
  s.lambda_d = std::clamp(lambda + cfg.s_z * d[2], cfg.lambda_min, cfg.lambda_max);
  return s;
}

std::string_view command_name(Command c) {
  switch (c) {
    case Command::Hold: return "hold";
    case Command::Left: return "left";
    case Command::Right: return "right";
    case Command::Up: return "up";
    case Command::Down: return "down";
    case Command::Closer: return "closer";
    case Command::Farther: return "farther";
    case Command::Withdraw: return "withdraw";
  }
  return "hold";
}

Command parse_command(std::string_view s) {
  s = text::trim(s);
  for (auto c : {Command::Hold, Command::Left, Command::Right, Command::Up, Command::Down, Command::Closer,
                 Command::Farther, Command::Withdraw}) {
    if (s == command_name(c)) return c;
  }
  throw ConfigError("unknown command '" + std::string(s) + "'");
}

Direction command_direction(Command c) {
  switch (c) {
    case Command::Right: return {1, 0, 0};
    case Command::Left: return {-1, 0, 0};
    case Command::Down: return {0, 1, 0};
    case Command::Up: return {0, -1, 0};
    case Command::Closer: return {0, 0, -1};
    case Command::Farther: return {0, 0, 1};
    default: return {0, 0, 0};
  }
}

SimCommand to_sim_command(Command c, std::string source) {
  SimCommand s;
  s.d = command_direction(c);
  s.withdraw = c == Command::Withdraw;
  s.source = std::move(source);
  return s;
}

std::optional<SimCommand> SequenceSource::poll(double) {
  if (next_ >= seq_.size()) return std::nullopt;
  return seq_[next_++];
}

ScheduledSource::ScheduledSource(std::vector<std::pair<double, SimCommand>> sched) : sched_(std::move(sched)) {
  std::stable_sort(sched_.begin(), sched_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
}

std::optional<SimCommand> ScheduledSource::poll(double t) {
  // several due commands collapse to the last one (last writer wins)
  std::optional<SimCommand> out;
  while (next_ < sched_.size() && sched_[next_].first <= t + 1e-9) out = sched_[next_++].second;
  return out;
}

std::vector<std::pair<double, SimCommand>> parse_override_script(std::istream& in) {
  std::vector<std::pair<double, SimCommand>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = text::trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto parts = text::split(body, ' ');
    std::vector<std::string> words;
    for (const auto& p : parts) {
      if (!text::trim(p).empty()) words.emplace_back(text::trim(p));
    }
    try {
      if (words.size() == 1) {
        out.emplace_back(0.0, to_sim_command(parse_command(words[0])));
      } else if (words.size() == 2) {
        out.emplace_back(text::parse_double(words[0]), to_sim_command(parse_command(words[1])));
      } else {
        throw ParseError("expected '<time> <command>' or '<command>'", lineno);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

std::optional<SimCommand> OverrideSource::poll(double t) {
  std::optional<SimCommand> p = primary_ ? primary_->poll(t) : std::nullopt;
  std::optional<SimCommand> o = override_ ? override_->poll(t) : std::nullopt;
  return o ? o : p;
}

Eigen::VectorXd default_home() {
  Eigen::VectorXd q(7);
  q << 0.0, 0.8, 0.0, -1.4, 0.0, 1.3, 0.0;
  return q;
}

EpisodeSetup default_setup(double target_offset_px) {
  return make_setup(ArmModel::default_arm(), default_home(), 0.5, target_offset_px);
}

EpisodeSetup make_setup(const ArmModel& arm, const Eigen::VectorXd& q0, double lambda0, double target_offset_px) {
  arm.validate();
  require_config(q0.size() == arm.n(), "home pose has the wrong number of joints");
  for (int k = 0; k < arm.n(); ++k) {
    const auto [lo, hi] = arm.joint_limits[static_cast<std::size_t>(k)];
    require_config(q0(k) >= lo && q0(k) <= hi, "home pose outside the joint limits");
  }
  require_config(lambda0 > 0.0 && lambda0 < 1.0, "initial penetration ratio must be in (0, 1)");
  EpisodeSetup s;
  s.arm = arm;
  s.initial.q = q0;
  s.initial.lambda = lambda0;
  const auto fk = forward_kinematics(s.arm, s.initial.q);
  s.scene.trocar = rcm_point(fk.p_i, fk.p_ip1, s.initial.lambda);
  const Eigen::Matrix3d R = fk.camera.linear();
  const double fx = s.scene.camera.K(0, 0);
  const double depth = 0.1;
  const Eigen::Vector3d target =
      fk.camera.translation() + R * Eigen::Vector3d(target_offset_px / fx * depth, 0.0, depth);
  s.scene.target_script.emplace_back(0.0, target);
  for (int r = -1; r <= 1; ++r) {
    for (int c = -1; c <= 1; ++c) {
      s.scene.features.push_back(fk.camera * Eigen::Vector3d(0.02 * c, 0.02 * r, 0.15));
    }
  }
  return s;
}

Trajectory run_episode(const ArmModel& arm, const SceneModel& scene, const ControlConfig& cfg,
                       const RobotState& initial, std::optional<Setpoint> setpoint, CommandSource* commands,
                       double duration) {
  arm.validate();
  scene.validate();
  cfg.validate();
  require_config(duration >= 0.0, "duration must be non-negative");
  const double dt = 1.0 / cfg.control_hz;
  const auto steps = static_cast<long long>(std::llround(duration * cfg.control_hz));
  const auto per_command = static_cast<long long>(std::llround(cfg.control_hz / cfg.command_hz));

  Trajectory traj;
  traj.dt = dt;
  traj.rows.reserve(static_cast<std::size_t>(steps));
  RobotState state = initial;
  state.t = 0.0;

  const auto observe = [&](const RobotState& s) {
    const auto fk = forward_kinematics(arm, s.q);
    return std::make_pair(fk, project(fk.camera, scene.target_at(s.t), scene.camera.K));
  };
  Setpoint sp;
  {
    const auto [fk, proj] = observe(state);
    sp = setpoint ? *setpoint : Setpoint{proj.f, state.lambda};
  }
  bool withdrawing = false;
  double withdraw_until = 0.0;
  Setpoint saved;

  for (long long k = 0; k < steps; ++k) {
    state.t = static_cast<double>(k) * dt;
    const auto [fk, proj] = observe(state);
    TrajectoryRow row;

    if (withdrawing && state.t >= withdraw_until - 1e-9) {
      withdrawing = false;
      sp = saved;
    }
    if (k % per_command == 0 && commands) {
      auto cmd = commands->poll(state.t);
      if (withdrawing) cmd.reset();
      if (cmd) {
        if (cmd->withdraw) {
          saved = sp;
          withdrawing = true;
          withdraw_until = state.t + cfg.recover_time;
          sp = Setpoint{proj.f, cfg.lambda_max};
          row.command = "withdraw";
        } else {
          sp = apply_direction(cmd->d, proj.f, state.lambda, cfg, scene.camera);
          row.command = std::to_string(cmd->d[0]) + ";" + std::to_string(cmd->d[1]) + ";" + std::to_string(cmd->d[2]);
        }
        if (!cmd->source.empty()) row.command += "@" + cmd->source;
      }
    }

    auto step = control_step(arm, scene, cfg, state, sp.f_d, sp.lambda_d, dt);
    const auto next_fk = forward_kinematics(arm, step.state.q);

    row.t = state.t;
    row.q = state.q;
    row.lambda = state.lambda;
    row.lambda_d = sp.lambda_d;
    row.f = proj.f;
    row.f_d = sp.f_d;
    row.depth = proj.depth;
    row.p_rcm = rcm_point(fk.p_i, fk.p_ip1, state.lambda);
    row.rcm_error = (row.p_rcm - scene.trocar).norm();
    row.cam_pos = fk.camera.translation();
    row.cam_vel = (next_fk.camera.translation() - row.cam_pos) / dt;
    row.qdot = step.qdot;
    for (const auto& p : scene.features) row.features.push_back(project(fk.camera, p, scene.camera.K).f);
    row.flags = step.flags | (withdrawing ? flags::kWithdraw : 0u);
    row.null_dim = step.null_dim;
    traj.rows.push_back(std::move(row));
    state = step.state;
  }
  return traj;
}

void save_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write trajectory " + path.string());
  const int n = traj.rows.empty() ? 0 : static_cast<int>(traj.rows.front().q.size());
  const int nf = traj.rows.empty() ? 0 : static_cast<int>(traj.rows.front().features.size());
  out << "# trajectory version=" << kFormatVersion << " dt=" << text::format(traj.dt) << " joints=" << n
      << " features=" << nf << '\n';
  out << "# columns: t";
  for (int j = 0; j < n; ++j) out << ",q" << j;
  out << ",lambda,lambda_d,f_u,f_v,fd_u,fd_v,depth,rcm_x,rcm_y,rcm_z,rcm_err,cam_x,cam_y,cam_z,vel_x,vel_y,vel_z";
  for (int j = 0; j < n; ++j) out << ",qd" << j;
  for (int j = 0; j < nf; ++j) out << ",feat" << j << "_u,feat" << j << "_v";
  out << ",flags,null_dim,command\n";
  std::string line;
  for (const auto& r : traj.rows) {
    line.clear();
    const auto put = [&](double v) {
      if (!line.empty()) line += ',';
      line += text::format(v);
    };
    put(r.t);
    for (int j = 0; j < n; ++j) put(r.q(j));
    put(r.lambda);
    put(r.lambda_d);
    put(r.f.x());
    put(r.f.y());
    put(r.f_d.x());
    put(r.f_d.y());
    put(r.depth);
    for (int a = 0; a < 3; ++a) put(r.p_rcm(a));
    put(r.rcm_error);
    for (int a = 0; a < 3; ++a) put(r.cam_pos(a));
    for (int a = 0; a < 3; ++a) put(r.cam_vel(a));
    for (int j = 0; j < n; ++j) put(r.qdot(j));
    for (const auto& f : r.features) {
      put(f.x());
      put(f.y());
    }
    line += ',' + std::to_string(r.flags) + ',' + std::to_string(r.null_dim) + ',' + r.command;
    out << line << '\n';
  }
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trajectory " + path.string());
  Trajectory traj;
  std::string line;
  std::size_t lineno = 0;
  int n = -1, nf = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("# trajectory", 0) == 0) {
      std::istringstream hs(line.substr(12));
      std::string tok;
      while (hs >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "version" && val != kFormatVersion) throw DataError("trajectory format version mismatch");
        if (key == "dt") traj.dt = text::parse_double(val);
        if (key == "joints") n = static_cast<int>(text::parse_int(val));
        if (key == "features") nf = static_cast<int>(text::parse_int(val));
      }
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    if (n < 0 || nf < 0) throw ParseError("trajectory header missing", lineno);
    const auto f = text::split_view(line, ',');
    const std::size_t expect = static_cast<std::size_t>(1 + n + 17 + n + 2 * nf + 3);
    if (f.size() != expect) throw ParseError("trajectory row has the wrong field count", lineno);
    try {
      std::size_t i = 0;
      const auto num = [&] { return text::parse_double(f[i++]); };
      TrajectoryRow r;
      r.t = num();
      r.q.resize(n);
      for (int j = 0; j < n; ++j) r.q(j) = num();
      r.lambda = num();
      r.lambda_d = num();
      r.f.x() = num();
      r.f.y() = num();
      r.f_d.x() = num();
      r.f_d.y() = num();
      r.depth = num();
      for (int a = 0; a < 3; ++a) r.p_rcm(a) = num();
      r.rcm_error = num();
      for (int a = 0; a < 3; ++a) r.cam_pos(a) = num();
      for (int a = 0; a < 3; ++a) r.cam_vel(a) = num();
      r.qdot.resize(n);
      for (int j = 0; j < n; ++j) r.qdot(j) = num();
      for (int j = 0; j < nf; ++j) {
        const double u = num();
        r.features.emplace_back(u, num());
      }
      r.flags = static_cast<std::uint32_t>(text::parse_int(f[i++]));
      r.null_dim = static_cast<int>(text::parse_int(f[i++]));
      r.command = std::string(f[i]);
      traj.rows.push_back(std::move(r));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return traj;
}

}  // namespace lapcam
