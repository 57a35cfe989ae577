#pragma once

#include <Eigen/Core>

#include <cmath>

namespace slotune {

/// Kernel hyperparameters. Lengthscales and warping exponents are per input
/// dimension (automatic relevance determination); the warp is applied to every
/// coordinate.
struct KernelParams {
  Eigen::VectorXd lengthscales;
  double signal_variance = 1.0;
  double noise = 1e-3;  // tau^2
  Eigen::VectorXd warp_a;
  Eigen::VectorXd warp_b;

  static KernelParams defaults(Eigen::Index dim, double lengthscale = 0.5) {
    KernelParams p;
    p.lengthscales = Eigen::VectorXd::Constant(dim, lengthscale);
    p.warp_a = Eigen::VectorXd::Ones(dim);
    p.warp_b = Eigen::VectorXd::Ones(dim);
    return p;
  }

  Eigen::Index dim() const noexcept { return lengthscales.size(); }
};

/// Kumaraswamy CDF 1 - (1 - u^a)^b, computed through expm1/log1p so that
/// coordinates near 0 keep their precision.
template <typename Scalar>
Scalar kumaraswamy_cdf(Scalar u, Scalar a, Scalar b) {
  using std::exp;
  using std::expm1;
  using std::log;
  using std::log1p;
  if (u <= Scalar(0)) return Scalar(0);
  if (u >= Scalar(1)) return Scalar(1);
  const Scalar ua = exp(a * log(u));
  return -expm1(b * log1p(-ua));
}

/// Derivatives of the Kumaraswamy CDF with respect to log a and log b.
template <typename Scalar>
void kumaraswamy_log_grad(Scalar u, Scalar a, Scalar b, Scalar& d_log_a, Scalar& d_log_b) {
  using std::exp;
  using std::log;
  using std::log1p;
  if (u <= Scalar(0) || u >= Scalar(1)) {
    d_log_a = d_log_b = Scalar(0);
    return;
  }
  const Scalar lu = log(u);
  const Scalar ua = exp(a * lu);
  const Scalar l1m = log1p(-ua);  // log(1 - u^a)
  // dw/da = b (1-u^a)^(b-1) u^a ln u ; dw/db = -(1-u^a)^b ln(1-u^a)
  d_log_a = a * b * exp((b - Scalar(1)) * l1m) * ua * lu;
  d_log_b = -b * exp(b * l1m) * l1m;
}

/// Componentwise warp of one unit-cube point.
inline Eigen::VectorXd warp(const Eigen::Ref<const Eigen::VectorXd>& v, const KernelParams& p) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index d = 0; d < v.size(); ++d) out[d] = kumaraswamy_cdf(v[d], p.warp_a[d], p.warp_b[d]);
  return out;
}

/// Warps every row of a point matrix.
inline Eigen::MatrixXd warp_rows(const Eigen::MatrixXd& x, const KernelParams& p) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index d = 0; d < x.cols(); ++d) out(i, d) = kumaraswamy_cdf(x(i, d), p.warp_a[d], p.warp_b[d]);
  return out;
}

/// Matern-3/2 as a function of the scaled distance r.
template <typename Scalar>
Scalar matern32(Scalar r, Scalar signal_variance) {
  using std::exp;
  using std::sqrt;
  const Scalar s3r = sqrt(Scalar(3)) * r;
  return signal_variance * (Scalar(1) + s3r) * exp(-s3r);
}

/// k(x, y) on already-warped inputs.
template <typename DerivedA, typename DerivedB>
double matern32(const Eigen::MatrixBase<DerivedA>& xw, const Eigen::MatrixBase<DerivedB>& yw, const KernelParams& p) {
  double r2 = 0.0;
  for (Eigen::Index d = 0; d < xw.size(); ++d) {
    const double z = (xw(d) - yw(d)) / p.lengthscales[d];
    r2 += z * z;
  }
  return matern32(std::sqrt(r2), p.signal_variance);
}

/// Noise-free Gram matrix of warped row-points.
inline Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& xw, const KernelParams& p) {
  const Eigen::Index n = xw.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = p.signal_variance;
    for (Eigen::Index j = 0; j < i; ++j) k(i, j) = k(j, i) = matern32(xw.row(i), xw.row(j), p);
  }
  return k;
}

}  // namespace slotune
