#include "slotune/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slotune/errors.hpp"
#include "slotune/random.hpp"

namespace slotune {

namespace {

struct Grower {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& y;
  const ForestOptions& opt;
  Rng rng;
  std::vector<RegressionTree::Node>& nodes;
  int features_per_split;

  double mean_of(std::span<const Eigen::Index> rows) const {
    double s = 0.0;
    for (auto r : rows) s += y[r];
    return s / static_cast<double>(rows.size());
  }

  int grow(std::vector<Eigen::Index>& rows, int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes[id].value = mean_of(rows);

    const auto n = static_cast<Eigen::Index>(rows.size());
    if (depth >= opt.max_depth || n < 2 * opt.min_samples_leaf) return id;
    bool pure = true;
    for (auto r : rows) pure = pure && y[r] == y[rows.front()];
    if (pure) return id;

    std::vector<int> features(static_cast<std::size_t>(x.cols()));
    std::iota(features.begin(), features.end(), 0);
    rng.shuffle(features.begin(), features.end());
    features.resize(static_cast<std::size_t>(features_per_split));

    // Maximize variance reduction, i.e. maximize sumL^2/nL + sumR^2/nR.
    double total = 0.0;
    for (auto r : rows) total += y[r];
    const double parent = total * total / static_cast<double>(n);
    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<Eigen::Index> sorted = rows;
    for (int f : features) {
      std::sort(sorted.begin(), sorted.end(), [&](Eigen::Index a, Eigen::Index b) {
        return x(a, f) != x(b, f) ? x(a, f) < x(b, f) : a < b;
      });
      double left_sum = 0.0;
      for (Eigen::Index i = 0; i + 1 < n; ++i) {
        left_sum += y[sorted[i]];
        const Eigen::Index nl = i + 1, nr = n - nl;
        if (nl < opt.min_samples_leaf || nr < opt.min_samples_leaf) continue;
        const double xa = x(sorted[i], f), xb = x(sorted[i + 1], f);
        if (xa == xb) continue;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / nl + right_sum * right_sum / nr - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (xa + xb);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<Eigen::Index> left, right;
    for (auto r : rows) (x(r, best_feature) <= best_threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    nodes[id].feature = best_feature;
    nodes[id].threshold = best_threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }
};

}  // namespace

RegressionTree::RegressionTree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::span<const Eigen::Index> rows,
                               const ForestOptions& options, std::uint64_t seed) {
  Grower g{x, y, options, Rng(seed), nodes_,
           std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(x.cols())))))};
  g.features_per_split = std::min<int>(g.features_per_split, static_cast<int>(x.cols()));
  std::vector<Eigen::Index> r(rows.begin(), rows.end());
  g.grow(r, 0);
}

double RegressionTree::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  int i = 0;
  while (nodes_[i].feature >= 0) i = x[nodes_[i].feature] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
  return nodes_[i].value;
}

FeasibilityModel FeasibilityModel::train(const Eigen::MatrixXd& x, const std::vector<bool>& feasible,
                                         const ForestOptions& options, std::uint64_t seed) {
  if (x.rows() == 0) throw ValidationError("feasibility model needs at least one observation");
  if (static_cast<std::size_t>(x.rows()) != feasible.size())
    throw DimensionMismatch("feasibility inputs and labels differ in length");
  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) y[i] = feasible[static_cast<std::size_t>(i)] ? 1.0 : 0.0;

  FeasibilityModel m;
  const int trees = std::max(1, options.trees);
  m.trees_.reserve(static_cast<std::size_t>(trees));
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(x.rows()));
  for (int t = 0; t < trees; ++t) {
    const std::uint64_t s = derive_seed(seed, "tree", static_cast<std::uint64_t>(t));
    if (options.bootstrap) {
      Rng rng(derive_seed(s, "bootstrap"));
      for (auto& r : rows) r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(x.rows())));
    } else {
      std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    }
    m.trees_.emplace_back(x, y, rows, options, s);
  }
  return m;
}

double FeasibilityModel::pof(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (trees_.empty()) return 1.0;
  double s = 0.0;
  for (const auto& t : trees_) s += t.predict(x);
  return std::clamp(s / static_cast<double>(trees_.size()), 0.0, 1.0);
}

namespace {
// Keeps repeated +/- 0.05 steps on exact two-decimal values.
double tidy(double v) { return std::round(v * 1e9) / 1e9; }
}  // namespace

void ThresholdState::apply(std::size_t batch_size, bool any_invalid) {
  if (any_invalid) {
    delta = tidy(std::min(kCeiling, std::max(0.5, delta + kStep)));
    streak = 0;
    return;
  }
  streak += static_cast<int>(batch_size);
  if (streak >= kStreak) {
    delta = tidy(std::max(kFloor, delta - kStep));
    streak -= kStreak;
  }
}

void ThresholdState::update(std::span<const bool> batch) {
  apply(batch.size(), std::find(batch.begin(), batch.end(), false) != batch.end());
}

void ThresholdState::update(const std::vector<bool>& batch) {
  apply(batch.size(), std::find(batch.begin(), batch.end(), false) != batch.end());
}

}  // namespace slotune
