#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace slotune {

struct ForestOptions {
  int trees = 100;
  int max_depth = 12;
  int min_samples_leaf = 2;
  bool bootstrap = true;
};

/// CART regression tree grown by variance reduction with sqrt(n) feature subsampling.
class RegressionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

  RegressionTree() = default;
  RegressionTree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::span<const Eigen::Index> rows,
                 const ForestOptions& options, std::uint64_t seed);

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  const std::vector<Node>& nodes() const noexcept { return nodes_; }

 private:
  std::vector<Node> nodes_;
};

/// Random-forest estimate of the probability that a configuration runs without failure.
class FeasibilityModel {
 public:
  /// Rows of x are encoded configurations; labels are true for feasible.
  static FeasibilityModel train(const Eigen::MatrixXd& x, const std::vector<bool>& feasible,
                                const ForestOptions& options = {}, std::uint64_t seed = 0);

  /// Mean of per-tree predictions, in [0, 1].
  double pof(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  std::size_t tree_count() const noexcept { return trees_.size(); }

 private:
  std::vector<RegressionTree> trees_;
};

/// Adaptive feasibility threshold: rises after failures, relaxes after a streak of successes.
struct ThresholdState {
  static constexpr double kStep = 0.05;
  static constexpr double kFloor = 0.25;
  static constexpr double kCeiling = 0.75;
  static constexpr int kStreak = 5;

  double delta = 0.5;
  int streak = 0;

  /// Applies one batch of outcomes (true = valid).
  void update(std::span<const bool> batch_valid);
  void update(const std::vector<bool>& batch_valid);

 private:
  void apply(std::size_t batch_size, bool any_invalid);
};

}  // namespace slotune
