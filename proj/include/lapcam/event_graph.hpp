#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <vector>

#include "lapcam/events.hpp"

namespace lapcam {

struct GraphParams {
  double delta_t = 0.5;    // s, sequential link window
  double delta_ovl = 0.1;  // s, minimum concurrent overlap
  int k_topk = 20;
  int min_shared = 3;

  void validate() const;
};

struct AttributedEventGraph {
  Eigen::MatrixXd A;
  Eigen::MatrixXd X;
  Eigen::MatrixXd S;
  std::vector<EventRecord> events;  // row i of X is events[i]
  GraphParams params;

  std::size_t size() const { return events.size(); }
  std::vector<DescriptorMask> masks() const;
  /// Throws InvariantError when a structural property does not hold.
  void check() const;
};

Eigen::MatrixXd temporal_adjacency(const std::vector<EventRecord>& events, double delta_t, double delta_ovl);

/// Cosine over dimensions valid in both; 0 with fewer than `min_shared`
/// shared dimensions or a vanishing masked norm.
double masked_cosine(std::span<const double> x_i, std::span<const double> x_j,
                     std::span<const std::uint8_t> m_i, std::span<const std::uint8_t> m_j, int min_shared);

/// Negatives clamped, per-row top-k (ties to the smaller index), symmetrised
/// by elementwise max, zero diagonal.
Eigen::MatrixXd similarity_graph(const Eigen::MatrixXd& X, const std::vector<DescriptorMask>& masks,
                                 int k_topk, int min_shared);

/// Expects normalized descriptors.
AttributedEventGraph build_graph(const std::vector<EventRecord>& events, const GraphParams& params);

/// Writes A.coo, X.csv, S.coo, events.csv and manifest.json into `dir`.
void save_graph(const AttributedEventGraph& g, const std::filesystem::path& dir);
AttributedEventGraph load_graph(const std::filesystem::path& dir);

// Shared matrix text helpers
void save_dense(const Eigen::MatrixXd& m, const std::filesystem::path& path);
Eigen::MatrixXd load_dense(const std::filesystem::path& path);
void save_coo(const Eigen::MatrixXd& m, const std::filesystem::path& path);
Eigen::MatrixXd load_coo(const std::filesystem::path& path);

}  // namespace lapcam
