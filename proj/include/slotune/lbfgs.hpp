#pragma once

#include <Eigen/Core>

#include <cmath>
#include <deque>
#include <limits>

namespace slotune {

struct LbfgsOptions {
  int max_iterations = 100;
  int memory = 8;
  double gradient_tolerance = 1e-6;
  double relative_tolerance = 1e-10;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  double initial_value = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

/// Unconstrained L-BFGS with Armijo backtracking. `f(x, grad)` returns the
/// objective and writes the gradient; a non-finite return marks an infeasible
/// trial point and shrinks the step. The returned value never exceeds the
/// value at x0.
template <typename F>
LbfgsResult minimize_lbfgs(F&& f, Eigen::VectorXd x0, const LbfgsOptions& opt = {}) {
  LbfgsResult res;
  const Eigen::Index n = x0.size();
  Eigen::VectorXd g(n), g_new(n);
  double fx = f(x0, g);
  res.x = x0;
  res.value = fx;
  res.initial_value = fx;
  if (!std::isfinite(fx)) return res;

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  Eigen::VectorXd x = x0;

  for (int it = 0; it < opt.max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) break;

    // Two-loop recursion.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    Eigen::VectorXd d = gamma * q;
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(d);
      d += s_hist[i] * (alpha[i] - beta);
    }
    d = -d;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      d = -g;
      slope = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = s_hist.empty() ? std::min(1.0, 1.0 / g.norm()) : 1.0;
    Eigen::VectorXd x_new;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + step * d;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double decrease = fx - f_new;
    x = x_new;
    g = g_new;
    fx = f_new;
    res.iterations = it + 1;
    if (decrease <= opt.relative_tolerance * std::max(1.0, std::abs(fx))) break;
  }
  res.x = x;
  res.value = fx;
  return res;
}

}  // namespace slotune
