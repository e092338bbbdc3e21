#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lapcam/miner.hpp"

namespace lapcam {

struct SupervisedSample {
  std::string video_id;
  double t = 0.0;
  int s_star = 0;
  Direction d_star{};
  int event_idx = 0;
  friend bool operator==(const SupervisedSample&, const SupervisedSample&) = default;
};

/// Samples on the grid t = n / rate_hz inside [t_s, t_e). A frame covered by
/// several events goes to the one with the larger max membership in U.
std::vector<SupervisedSample> propagate_labels(const std::vector<EventRecord>& events,
                                               const std::vector<int>& labels,
                                               const std::vector<Direction>& directions,
                                               const Eigen::MatrixXd& U, double rate_hz);

struct BalanceResult {
  std::vector<SupervisedSample> samples;
  std::string warning;
};

/// Keeps every nonzero-direction sample and draws as many zero-direction
/// samples without replacement. Output is in canonical (video, t) order.
BalanceResult balance(const std::vector<SupervisedSample>& samples, std::uint64_t seed);

struct Prediction {
  int s_hat = 0;
  Direction d_hat{};
};

/// Among non-vacant prototypes sharing the most valid dims with the descriptor,
/// the nearest by masked cosine distance; ties to the smaller index.
Prediction prototype_predict(const Descriptor& x, const DescriptorMask& mask, const StrategyModel& model,
                             int min_shared = 3);

struct PredictedDistribution {
  std::array<std::array<double, 3>, 3> direction{};  // per axis, classes (-1, 0, +1)
  std::vector<double> strategy;
};

PredictedDistribution one_hot(const Prediction& p, int k);

/// L_dir + lambda_s * L_str, cross-entropies averaged over the batch.
double score_loss(const std::vector<SupervisedSample>& batch, const std::vector<PredictedDistribution>& pred,
                  double lambda_s);
double direction_loss(const std::vector<SupervisedSample>& batch, const std::vector<PredictedDistribution>& pred);
double strategy_loss(const std::vector<SupervisedSample>& batch, const std::vector<PredictedDistribution>& pred);

void save_samples(const std::vector<SupervisedSample>& samples, const std::filesystem::path& path);
std::vector<SupervisedSample> load_samples(const std::filesystem::path& path);

struct VideoSplit {
  std::vector<std::string> train, val, test;
};

/// Seeded split of the distinct video ids by the given train/val fractions.
VideoSplit split_by_video(const std::vector<SupervisedSample>& samples, double train_frac, double val_frac,
                          std::uint64_t seed);

}  // namespace lapcam
