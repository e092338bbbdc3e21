#pragma once

#include <array>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "lapcam/events.hpp"
#include "lapcam/scenario.hpp"
#include "lapcam/signal.hpp"

namespace lapcam {

struct LabeledInterval {
  EventLabel label = EventLabel::Interaction;
  double t_s = 0.0;
  double t_e = 0.0;
  std::optional<double> dz;  // depth change, compared for depth events
};

LabeledInterval to_interval(const EventRecord& e);  // dz from the raw action dims
LabeledInterval to_interval(const TruthEvent& t);

double tiou(double a_s, double a_e, double b_s, double b_e);

struct ClassScore {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MatchReport {
  std::array<ClassScore, kNumEventLabels> per_class{};
  std::array<bool, kNumEventLabels> present{};  // class occurs in pred or truth
  double macro_f1 = 0.0;
  double mean_tiou = 0.0;
  std::optional<double> depth_mae;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (pred, truth)
};

/// Greedy one-to-one matching by descending tIoU among same-label pairs.
MatchReport match_events(const std::vector<LabeledInterval>& pred,
                         const std::vector<LabeledInterval>& truth, double tiou_min = 0.5);

double purity(const std::vector<int>& pred, const std::vector<int>& truth);
/// Mutual information over the geometric mean of the entropies (natural log).
double nmi(const std::vector<int>& pred, const std::vector<int>& truth);

struct VarIntra {
  std::map<int, double> per_cluster;
  double mean = 0.0;
};
VarIntra var_intra(const std::vector<std::vector<double>>& attributes, const std::vector<int>& labels);

double centering_error(const std::vector<PixelPoint>& f, const std::vector<PixelPoint>& f_d);

/// tracks[k][n]: position of feature k at frame n.
double shaking_index(const std::vector<std::vector<PixelPoint>>& tracks);

/// Share of non-DC spectral energy at or above `cutoff_hz`, per axis.
std::array<double, 3> hf_ratio(const std::vector<std::array<double, 3>>& traj, double fps,
                               double cutoff_hz = 4.0);
double hf_ratio_axis(const std::vector<double>& x, double fps, double cutoff_hz = 4.0);

std::pair<double, double> depth_errors(const std::vector<double>& lambda,
                                       const std::vector<double>& lambda_d, double eps = 1e-9);

/// sqrt(mean |v_jitter|), or the RMS sqrt(mean |v_jitter|^2) when `rms`.
double pose_jitter(const std::vector<std::array<double, 3>>& v, double fps, double cutoff_hz = 2.0,
                   bool rms = false);

/// First time at or after t_start where |f - target| <= tol, relative to t_start.
std::optional<double> time_to_target(const std::vector<double>& t, const std::vector<PixelPoint>& f,
                                     PixelPoint target, double tol, double t_start);

/// From the first entry into the withdraw state until it is left again.
std::optional<double> recovery_time(const std::vector<double>& t, const std::vector<bool>& withdrawing);

}  // namespace lapcam
