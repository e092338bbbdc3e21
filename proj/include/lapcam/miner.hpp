#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lapcam/event_graph.hpp"
#include "lapcam/events.hpp"

namespace lapcam {

using Direction = std::array<int, 3>;  // (u, v, z) in {-1, 0, +1}

struct SelfExpressConfig {
  int max_iter = 200;
  double tol = 1e-8;
};

struct WsnmfConfig {
  int inits = 10;
  int iters = 500;
  double tol = 1e-9;
  std::uint64_t seed = 0;
};

struct GaaeConfig {
  int dim = 32;
  int epochs = 150;
  double lr = 0.05;
  std::uint64_t seed = 0;
};

struct MinerConfig {
  int k = 12;
  double mu = 0.5;
  double lambda = 0.5;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  bool unit_weights = false;  // W = 1 baseline instead of the confidence weights
  SelfExpressConfig self_express;
  WsnmfConfig wsnmf;
  GaaeConfig gaae;
  double deadband_uv = 10.0;      // px at the reference resolution
  double deadband_z_coeff = 0.03;  // times the median working distance
  double low_inlier_ratio = 0.6;   // below this a cluster's motion is not a clean translation

  void validate() const;
};

// Graph fusion
Eigen::MatrixXd boost_graph(const Eigen::MatrixXd& A, const Eigen::MatrixXd& S, double mu);

struct SelfExpressResult {
  Eigen::MatrixXd C;
  std::vector<double> objective;  // after each sweep, objective[0] at C = 0
  int sweeps = 0;
};

/// min_{C >= 0, diag C = 0} |X - C X|_F^2 + alpha |C|_1, rows of X are samples.
SelfExpressResult self_express(const Eigen::MatrixXd& X, double alpha, const SelfExpressConfig& cfg);
double self_express_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& C, double alpha);

struct RefinedGraphs {
  Eigen::MatrixXd G_A;
  Eigen::MatrixXd C;
  Eigen::MatrixXd S_c;
  Eigen::MatrixXd G_R;
  Eigen::MatrixXd W;
};

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> refine_graph(const Eigen::MatrixXd& C, const Eigen::MatrixXd& S,
                                                          double lambda);

/// 0.5 + 0.5 * G_A / max(G_A), zero diagonal.
Eigen::MatrixXd confidence_weights(const Eigen::MatrixXd& G_A);

// Weighted symmetric NMF
double wsnmf_objective(const Eigen::MatrixXd& G, const Eigen::MatrixXd& W, const Eigen::MatrixXd& U);

struct WsnmfResult {
  Eigen::MatrixXd U;
  double objective = 0.0;
  std::vector<double> history;       // objective per iteration of the winning restart
  std::vector<double> restart_final;  // final objective of every restart
  int best_restart = 0;
};

WsnmfResult wsnmf(const Eigen::MatrixXd& G, const Eigen::MatrixXd& W, int k, const WsnmfConfig& cfg);

/// Row argmax, ties to the smaller index.
std::vector<int> assign_labels(const Eigen::MatrixXd& U);

// Graph attention autoencoder
struct GaaeParams {
  Eigen::MatrixXd P;   // d x dim projection
  Eigen::VectorXd a_src;
  Eigen::VectorXd a_dst;
};

struct GaaeForward {
  Eigen::MatrixXd Z;
  Eigen::MatrixXd G_hat;
  double loss = 0.0;
};

GaaeParams gaae_init(int in_dim, const GaaeConfig& cfg);
GaaeForward gaae_forward(const GaaeParams& p, const Eigen::MatrixXd& G, const Eigen::MatrixXd& X,
                         const Eigen::MatrixXd& W);
/// Loss and its gradient with respect to every parameter.
double gaae_gradient(const GaaeParams& p, const Eigen::MatrixXd& G, const Eigen::MatrixXd& X,
                     const Eigen::MatrixXd& W, GaaeParams& grad);

struct GaaeResult {
  Eigen::MatrixXd Z;
  std::vector<double> loss;  // per epoch, loss[0] at initialisation
  GaaeParams params;
};

GaaeResult gaae_fit(const Eigen::MatrixXd& G, const Eigen::MatrixXd& X, const Eigen::MatrixXd& W,
                    const GaaeConfig& cfg);

// Prototypes and naming
Direction discretize_direction(double du, double dv, double dz, double db_u, double db_v, double db_z);

struct ClusterSummary {
  bool vacant = true;
  int members = 0;
  EventLabel dominant = EventLabel::Interaction;
  double dominant_share = 0.0;
  Descriptor prototype{};       // elementwise median of normalized descriptors
  DescriptorMask mask{};        // dims valid in at least half of the members
  std::array<double, 3> action{};  // median raw (du, dv, dz)
  std::array<bool, 3> action_known{};
  double inlier_ratio = 1.0;
  Direction direction{};
  std::string name;
};

struct Deadbands {
  double u = 10.0;
  double v = 10.0;
  double z = 3.0;
};

/// `raw` carries the unnormalized action dims in the same order as `normalized`.
std::vector<ClusterSummary> extract_prototypes(const std::vector<EventRecord>& normalized,
                                               const std::vector<EventRecord>& raw,
                                               const std::vector<int>& labels, int k,
                                               const Deadbands& db, double low_inlier_ratio);

std::string name_cluster(const ClusterSummary& c, const Deadbands& db, double low_inlier_ratio);

/// The twelve strategy names the decision table can produce.
const std::vector<std::string>& strategy_taxonomy();

/// Deadbands from the provenance written by the response stage.
Deadbands deadbands_for(const std::vector<EventRecord>& raw, const MinerConfig& cfg);

struct StrategyModel {
  int k = 0;
  MinerConfig config;
  Eigen::MatrixXd U;
  std::vector<int> labels;
  std::vector<ClusterSummary> clusters;
  std::vector<Direction> event_directions;  // d_i of every event
  Eigen::MatrixXd embeddings;
  double objective = 0.0;
  double gaae_loss = 0.0;
  Deadbands deadbands;
};

RefinedGraphs build_refined_graphs(const AttributedEventGraph& g, const MinerConfig& cfg);

/// `raw` are the responded events before normalization, aligned with g.events.
StrategyModel mine_strategies(const AttributedEventGraph& g, const std::vector<EventRecord>& raw,
                              const MinerConfig& cfg);

/// Re-clusters already refined graphs for a different K.
StrategyModel mine_with_graphs(const AttributedEventGraph& g, const RefinedGraphs& rg,
                               const std::vector<EventRecord>& raw, const MinerConfig& cfg, bool embed);

void save_model(const StrategyModel& m, const std::filesystem::path& dir);
StrategyModel load_model(const std::filesystem::path& dir);

}  // namespace lapcam
