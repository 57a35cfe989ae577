#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace slotune {

inline constexpr double kSigmaFloor = 1e-12;

template <typename Scalar>
Scalar normal_pdf(Scalar z) {
  using std::exp;
  return exp(Scalar(-0.5) * z * z) * Scalar(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
}

template <typename Scalar>
Scalar normal_cdf(Scalar z) {
  using std::erfc;
  return Scalar(0.5) * erfc(-z / Scalar(std::numbers::sqrt2));
}

struct AcquisitionContext {
  int iteration = 1;
  double beta = 0.0;
  double xi = 0.0001;
  double incumbent = 0.0;

  /// Context for iteration t with delta = 1/t^2. With `literal_beta` the
  /// exploration weight is 2 log(t^2 pi^2 / 6 delta) without the square root.
  static AcquisitionContext at(int iteration, double incumbent, bool literal_beta = false);
};

/// Exploration weight for iteration t (delta = 1/t^2).
double ucb_beta(int iteration, bool literal = false);

template <typename Scalar>
Scalar ucb(Scalar mean, Scalar sd, double beta) {
  return mean + Scalar(beta) * sd;
}

template <typename Scalar>
Scalar probability_of_improvement(Scalar mean, Scalar sd, double xi, double incumbent) {
  const Scalar gap = mean + Scalar(xi) - Scalar(incumbent);
  if (sd <= Scalar(0)) return gap > Scalar(0) ? Scalar(1) : Scalar(0);
  const Scalar s = sd < Scalar(kSigmaFloor) ? Scalar(kSigmaFloor) : sd;
  return normal_cdf(gap / s);
}

template <typename Scalar>
Scalar expected_improvement(Scalar mean, Scalar sd, double xi, double incumbent) {
  const Scalar gap = mean + Scalar(xi) - Scalar(incumbent);
  if (sd <= Scalar(0)) return gap > Scalar(0) ? gap : Scalar(0);
  const Scalar s = sd < Scalar(kSigmaFloor) ? Scalar(kSigmaFloor) : sd;
  const Scalar z = gap / s;
  const Scalar v = gap * normal_cdf(z) + s * normal_pdf(z);
  return v > Scalar(0) ? v : Scalar(0);
}

inline double ucb(double mean, double sd, const AcquisitionContext& c) { return ucb(mean, sd, c.beta); }
inline double pi(double mean, double sd, const AcquisitionContext& c) {
  return probability_of_improvement(mean, sd, c.xi, c.incumbent);
}
inline double ei(double mean, double sd, const AcquisitionContext& c) {
  return expected_improvement(mean, sd, c.xi, c.incumbent);
}

using Point2 = Eigen::Vector2d;

/// Mutually non-dominated objective vectors (maximization) with a reference point.
struct ParetoFront {
  std::vector<Point2> points;
  Point2 reference = Point2::Zero();
};

/// True when a is at least as good as b everywhere and better somewhere.
inline bool dominates(const Point2& a, const Point2& b) {
  return (a.array() >= b.array()).all() && (a.array() > b.array()).any();
}

/// Non-dominated subset of `points` (duplicates collapsed), sorted by the first objective.
std::vector<Point2> pareto_filter(std::span<const Point2> points);

/// Indices of the non-dominated rows of an objective matrix with any number of columns.
std::vector<Eigen::Index> pareto_indices(const Eigen::MatrixXd& objectives);

/// Area dominated by the front and bounded below by the reference. Throws DimensionError
/// unless every point has exactly 2 coordinates.
double hypervolume_2d(std::span<const Eigen::VectorXd> points, const Eigen::VectorXd& reference);
double hypervolume_2d(const ParetoFront& front);

inline double hv_single(const Point2& y, const Point2& r) {
  return std::max(0.0, y[0] - r[0]) * std::max(0.0, y[1] - r[1]);
}

/// Exact expected hypervolume improvement for independent Gaussian coordinates.
double ehvi(const Point2& mean, const Point2& sd, const ParetoFront& front);
double ehvi(const Eigen::VectorXd& mean, const Eigen::VectorXd& sd, const ParetoFront& front);

}  // namespace slotune
