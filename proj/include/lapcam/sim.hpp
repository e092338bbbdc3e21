#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lapcam/miner.hpp"

namespace lapcam {

struct DhRow {
  double a = 0.0;      // m
  double alpha = 0.0;  // rad
  double d = 0.0;      // m
  double theta_offset = 0.0;
};

struct ArmModel {
  std::vector<DhRow> dh;
  std::vector<std::pair<double, double>> joint_limits;
  std::vector<double> velocity_limits;  // rad/s
  double scope_length = 0.3;            // m
  Eigen::Isometry3d attach = Eigen::Isometry3d::Identity();  // EE -> scope proximal end

  int n() const { return static_cast<int>(dh.size()); }
  void validate() const;

  /// Generic 7-DoF chain with a 0.3 m scope along the flange z-axis.
  static ArmModel default_arm();
};

struct ScopePose {
  Eigen::Isometry3d ee;
  Eigen::Isometry3d camera;  // at the distal end, optical axis = scope axis
  Eigen::Vector3d p_i;       // proximal (attached) end
  Eigen::Vector3d p_ip1;     // distal end
};

ScopePose forward_kinematics(const ArmModel& arm, const Eigen::VectorXd& q);

struct ArmJacobians {
  Eigen::MatrixXd J_i;    // 3 x n
  Eigen::MatrixXd J_ip1;  // 3 x n
  Eigen::MatrixXd J_r;    // 6 x n, EE linear and angular velocity in the world frame
  Eigen::MatrixXd J_c;    // 6 x n, camera twist in the camera frame
};

/// Central differences on forward kinematics.
ArmJacobians jacobians(const ArmModel& arm, const Eigen::VectorXd& q, double step = 1e-6);

Eigen::Vector3d rcm_point(const Eigen::Vector3d& p_i, const Eigen::Vector3d& p_ip1, double lambda);

/// 3 x (n+1): [J_i + lambda (J_ip1 - J_i), p_ip1 - p_i].
Eigen::MatrixXd rcm_jacobian(const Eigen::MatrixXd& J_i, const Eigen::MatrixXd& J_ip1, const Eigen::Vector3d& p_i,
                             const Eigen::Vector3d& p_ip1, double lambda);

/// Point-feature interaction matrix at normalized coordinates K^-1 f_d and depth z_d.
Eigen::Matrix<double, 2, 6> interaction_matrix(const Eigen::Vector2d& f_d, double z_d, const Eigen::Matrix3d& K);

struct CameraModel {
  Eigen::Matrix3d K = (Eigen::Matrix3d() << 600, 0, 320, 0, 600, 240, 0, 0, 1).finished();
  int width = 640;
  int height = 480;
};

struct Projection {
  Eigen::Vector2d f = Eigen::Vector2d::Zero();
  double depth = 0.0;
  bool in_front = false;
};

Projection project(const Eigen::Isometry3d& camera, const Eigen::Vector3d& p, const Eigen::Matrix3d& K);

struct SceneModel {
  Eigen::Vector3d trocar = Eigen::Vector3d::Zero();
  std::vector<std::pair<double, Eigen::Vector3d>> target_script;  // piecewise constant, sorted by time
  std::vector<Eigen::Vector3d> features;                          // static background points
  CameraModel camera;

  Eigen::Vector3d target_at(double t) const;
  void validate() const;
};

struct ControlConfig {
  Eigen::Vector2d k_f{2.0, 2.0};
  Eigen::Vector3d k_rcm{20.0, 20.0, 20.0};
  double k_lambda = 5.0;  // gain on the null-space penetration drive
  double damping = 1e-6;
  double s_u = 20.0;  // px
  double s_v = 20.0;  // px
  double s_z = 0.02;  // penetration-ratio units
  double control_hz = 100.0;
  double command_hz = 10.0;
  double rcm_tol = 1e-4;    // m
  double feature_tol = 2.0;  // px
  double lambda_min = 0.1;
  double lambda_max = 0.9;
  double margin = 40.0;        // px kept clear of the image border by f_d
  double recover_time = 25.0;  // s spent withdrawn for cleaning
  double fd_step = 1e-6;

  void validate() const;
};

struct RobotState {
  Eigen::VectorXd q;
  double lambda = 0.5;
  double t = 0.0;
};

namespace flags {
inline constexpr std::uint32_t kTargetBehind = 1;
inline constexpr std::uint32_t kJointLimit = 2;
inline constexpr std::uint32_t kVelocityClamped = 4;
inline constexpr std::uint32_t kWithdraw = 8;
inline constexpr std::uint32_t kLambdaClamped = 16;
}  // namespace flags

struct StepResult {
  RobotState state;
  Eigen::VectorXd qdot;
  double lambda_dot = 0.0;
  std::uint32_t flags = 0;
  int null_dim = 0;
};

StepResult control_step(const ArmModel& arm, const SceneModel& scene, const ControlConfig& cfg,
                        const RobotState& state, const Eigen::Vector2d& f_d, double lambda_d, double dt);

struct Setpoint {
  Eigen::Vector2d f_d = Eigen::Vector2d::Zero();
  double lambda_d = 0.5;
};

Setpoint apply_direction(const Direction& d, const Eigen::Vector2d& f, double lambda, const ControlConfig& cfg,
                         const CameraModel& cam);

enum class Command { Hold, Left, Right, Up, Down, Closer, Farther, Withdraw };

std::string_view command_name(Command c);
Command parse_command(std::string_view s);  // ConfigError on unknown words
Direction command_direction(Command c);       // Withdraw maps to (0,0,0)

struct SimCommand {
  Direction d{};
  bool withdraw = false;
  std::string source;
};

SimCommand to_sim_command(Command c, std::string source = "override");

/// Polled once per command tick; nullopt keeps the last setpoint.
class CommandSource {
 public:
  virtual ~CommandSource() = default;
  virtual std::optional<SimCommand> poll(double t) = 0;
};

/// One command per tick in order; exhausted -> nullopt.
class SequenceSource : public CommandSource {
 public:
  explicit SequenceSource(std::vector<SimCommand> seq) : seq_(std::move(seq)) {}
  std::optional<SimCommand> poll(double t) override;

 private:
  std::vector<SimCommand> seq_;
  std::size_t next_ = 0;
};

/// Timed commands; each fires at the first tick with t >= its time.
class ScheduledSource : public CommandSource {
 public:
  explicit ScheduledSource(std::vector<std::pair<double, SimCommand>> sched);
  std::optional<SimCommand> poll(double t) override;

 private:
  std::vector<std::pair<double, SimCommand>> sched_;
  std::size_t next_ = 0;
};

/// Lines "<time> <command>" or "<command>" (applied at time 0, in order).
std::vector<std::pair<double, SimCommand>> parse_override_script(std::istream& in);

/// The override wins whenever it yields a command at a tick.
class OverrideSource : public CommandSource {
 public:
  OverrideSource(CommandSource* primary, CommandSource* override_src) : primary_(primary), override_(override_src) {}
  std::optional<SimCommand> poll(double t) override;

 private:
  CommandSource* primary_;
  CommandSource* override_;
};

struct TrajectoryRow {
  double t = 0.0;
  Eigen::VectorXd q;
  double lambda = 0.0;
  double lambda_d = 0.0;
  Eigen::Vector2d f = Eigen::Vector2d::Zero();
  Eigen::Vector2d f_d = Eigen::Vector2d::Zero();
  double depth = 0.0;
  Eigen::Vector3d p_rcm = Eigen::Vector3d::Zero();
  double rcm_error = 0.0;
  Eigen::Vector3d cam_pos = Eigen::Vector3d::Zero();
  Eigen::Vector3d cam_vel = Eigen::Vector3d::Zero();
  Eigen::VectorXd qdot;
  std::vector<Eigen::Vector2d> features;
  std::uint32_t flags = 0;
  int null_dim = 0;
  std::string command;  // empty unless a command was applied at this tick
};

struct Trajectory {
  std::vector<TrajectoryRow> rows;
  double dt = 0.01;
};

struct EpisodeSetup {
  ArmModel arm;
  SceneModel scene;
  RobotState initial;
};

/// Default arm at a fixed home pose, trocar at the home RCM point, target
/// 0.1 m ahead of the camera and a 3x3 grid of background features.
EpisodeSetup default_setup(double target_offset_px = 0.0);
Eigen::VectorXd default_home();
EpisodeSetup make_setup(const ArmModel& arm, const Eigen::VectorXd& q0, double lambda0, double target_offset_px);

Trajectory run_episode(const ArmModel& arm, const SceneModel& scene, const ControlConfig& cfg,
                       const RobotState& initial, std::optional<Setpoint> setpoint, CommandSource* commands,
                       double duration);

void save_trajectory(const Trajectory& traj, const std::filesystem::path& path);
Trajectory load_trajectory(const std::filesystem::path& path);

}  // namespace lapcam
