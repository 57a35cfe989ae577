#include "slotune/acquisition.hpp"

#include <algorithm>
#include <limits>

#include "slotune/errors.hpp"

namespace slotune {

double ucb_beta(int iteration, bool literal) {
  const double t = std::max(1, iteration);
  const double delta = 1.0 / (t * t);
  const double v = 2.0 * std::log(t * t * std::numbers::pi * std::numbers::pi / (6.0 * delta));
  return literal ? v : std::sqrt(std::max(0.0, v));
}

AcquisitionContext AcquisitionContext::at(int iteration, double incumbent, bool literal_beta) {
  AcquisitionContext c;
  c.iteration = iteration;
  c.beta = ucb_beta(iteration, literal_beta);
  c.incumbent = incumbent;
  return c;
}

std::vector<Point2> pareto_filter(std::span<const Point2> points) {
  std::vector<Point2> sorted(points.begin(), points.end());
  // Descending in y0, ties broken by descending y1; a sweep keeps strict improvements in y1.
  std::sort(sorted.begin(), sorted.end(), [](const Point2& a, const Point2& b) {
    return a[0] != b[0] ? a[0] > b[0] : a[1] > b[1];
  });
  std::vector<Point2> out;
  double best_y1 = -std::numeric_limits<double>::infinity();
  for (const auto& p : sorted) {
    if (p[1] > best_y1) {
      out.push_back(p);
      best_y1 = p[1];
    }
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<Eigen::Index> pareto_indices(const Eigen::MatrixXd& y) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    bool dominated = false;
    for (Eigen::Index j = 0; j < y.rows() && !dominated; ++j) {
      if (j == i) continue;
      const bool ge = (y.row(j).array() >= y.row(i).array()).all();
      const bool gt = (y.row(j).array() > y.row(i).array()).any();
      // Exact duplicates: keep the first occurrence only.
      dominated = ge && (gt || j < i);
    }
    if (!dominated) out.push_back(i);
  }
  return out;
}

namespace {

// Front points strictly better than r in both coordinates, non-dominated, y0 ascending.
std::vector<Point2> effective_front(const ParetoFront& front) {
  std::vector<Point2> inside;
  for (const auto& p : front.points)
    if (p[0] > front.reference[0] && p[1] > front.reference[1]) inside.push_back(p);
  return pareto_filter(inside);
}

// E[(Y - a)+] for Y ~ N(mu, s^2).
double partial_expectation(double a, double mu, double s) {
  if (std::isinf(a)) return a > 0 ? 0.0 : std::numeric_limits<double>::infinity();
  if (s <= 0.0) return std::max(0.0, mu - a);
  const double z = (mu - a) / s;
  return (mu - a) * normal_cdf(z) + s * normal_pdf(z);
}

// E[(Y - a)+ - (Y - b)+] = E[clamp(Y, a, b) - a].
double clipped_gain(double a, double b, double mu, double s) {
  if (b <= a) return 0.0;
  if (std::isinf(b)) return partial_expectation(a, mu, s);
  return std::max(0.0, partial_expectation(a, mu, s) - partial_expectation(b, mu, s));
}

}  // namespace

double hypervolume_2d(const ParetoFront& front) {
  const auto pts = effective_front(front);
  double area = 0.0;
  double prev_x = front.reference[0];
  // Ascending in y0 means descending in y1; slab j spans [prev_x, x_j] at height y1_j.
  for (const auto& p : pts) {
    area += (p[0] - prev_x) * (p[1] - front.reference[1]);
    prev_x = p[0];
  }
  return area;
}

double hypervolume_2d(std::span<const Eigen::VectorXd> points, const Eigen::VectorXd& reference) {
  if (reference.size() != 2) throw DimensionError("hypervolume needs exactly 2 objectives");
  ParetoFront f;
  f.reference = reference;
  for (const auto& p : points) {
    if (p.size() != 2) throw DimensionError("hypervolume needs exactly 2 objectives");
    f.points.push_back(p);
  }
  return hypervolume_2d(f);
}

double ehvi(const Point2& mean, const Point2& sd, const ParetoFront& front) {
  const auto q = effective_front(front);
  const double r0 = front.reference[0], r1 = front.reference[1];
  const double s0 = std::max(0.0, sd[0]), s1 = std::max(0.0, sd[1]);
  constexpr double inf = std::numeric_limits<double>::infinity();

  // The non-dominated region above r splits into vertical cells; in each, the new
  // point's improvement is (clamped y0 gain) x (y1 gain above the cell floor).
  double total = 0.0;
  double lo0 = r0;
  for (const auto& p : q) {
    total += clipped_gain(lo0, p[0], mean[0], s0) * clipped_gain(p[1], inf, mean[1], s1);
    lo0 = p[0];
  }
  total += clipped_gain(lo0, inf, mean[0], s0) * clipped_gain(r1, inf, mean[1], s1);
  return std::max(0.0, total);
}

double ehvi(const Eigen::VectorXd& mean, const Eigen::VectorXd& sd, const ParetoFront& front) {
  if (mean.size() != 2 || sd.size() != 2) throw DimensionError("EHVI needs exactly 2 objectives");
  return ehvi(Point2(mean), Point2(sd), front);
}

}  // namespace slotune
