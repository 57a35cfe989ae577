#include "slotune/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "slotune/errors.hpp"
#include "slotune/lbfgs.hpp"
#include "slotune/random.hpp"

namespace slotune {

namespace {

// Log-space box for each hyperparameter group.
constexpr double kLogLengthLo = -4.605170185988091;  // ln 0.01
constexpr double kLogLengthHi = 3.912023005428146;   // ln 50
constexpr double kLogSignalLo = -4.605170185988091;  // ln 0.01
constexpr double kLogSignalHi = 4.605170185988091;   // ln 100
constexpr double kLogNoiseLo = -20.72326583694641;   // ln 1e-9
constexpr double kLogNoiseHi = 2.302585092994046;    // ln 10
constexpr double kLogWarpLo = -3.0;
constexpr double kLogWarpHi = 3.0;

struct Box {
  Eigen::VectorXd lo, hi;
};

Box log_box(Eigen::Index n) {
  const Eigen::Index m = 3 * n + 2;
  Box b{Eigen::VectorXd(m), Eigen::VectorXd(m)};
  b.lo.head(n).setConstant(kLogLengthLo);
  b.hi.head(n).setConstant(kLogLengthHi);
  b.lo[n] = kLogSignalLo;
  b.hi[n] = kLogSignalHi;
  b.lo[n + 1] = kLogNoiseLo;
  b.hi[n + 1] = kLogNoiseHi;
  b.lo.tail(2 * n).setConstant(kLogWarpLo);
  b.hi.tail(2 * n).setConstant(kLogWarpHi);
  return b;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Cholesky of K + tau^2 I, escalating diagonal jitter from 1e-10 s2 by x10 up to 1e-4 s2.
bool factorize(const Eigen::MatrixXd& k, double signal_variance, Eigen::LLT<Eigen::MatrixXd>& llt, double& jitter) {
  jitter = 0.0;
  llt.compute(k);
  if (llt.info() == Eigen::Success) return true;
  for (int e = -10; e <= -4; ++e) {
    jitter = std::pow(10.0, e) * signal_variance;
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    llt.compute(kj);
    if (llt.info() == Eigen::Success) return true;
  }
  return false;
}

void standardize(const Eigen::VectorXd& y, double& mean, double& scale) {
  mean = y.mean();
  const double var = (y.array() - mean).square().mean();
  scale = var > 1e-24 ? std::sqrt(var) : 1.0;
}

}  // namespace

Eigen::VectorXd pack_log_params(const KernelParams& p) {
  const Eigen::Index n = p.dim();
  Eigen::VectorXd t(3 * n + 2);
  t.head(n) = p.lengthscales.array().log();
  t[n] = std::log(p.signal_variance);
  t[n + 1] = std::log(p.noise);
  t.segment(n + 2, n) = p.warp_a.array().log();
  t.tail(n) = p.warp_b.array().log();
  return t;
}

KernelParams unpack_log_params(const Eigen::VectorXd& theta, Eigen::Index n) {
  KernelParams p;
  p.lengthscales = theta.head(n).array().exp();
  p.signal_variance = std::exp(theta[n]);
  p.noise = std::exp(theta[n + 1]);
  p.warp_a = theta.segment(n + 2, n).array().exp();
  p.warp_b = theta.tail(n).array().exp();
  return p;
}

std::optional<LikelihoodValue> negative_log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                                       const Eigen::VectorXd& theta, bool with_gradient) {
  const Eigen::Index N = x.rows();
  const Eigen::Index n = x.cols();
  const KernelParams p = unpack_log_params(theta, n);
  const double s2 = p.signal_variance;

  Eigen::MatrixXd xw(N, n), ga(N, n), gb(N, n);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index d = 0; d < n; ++d) {
      xw(i, d) = kumaraswamy_cdf(x(i, d), p.warp_a[d], p.warp_b[d]);
      if (with_gradient) kumaraswamy_log_grad(x(i, d), p.warp_a[d], p.warp_b[d], ga(i, d), gb(i, d));
    }

  // e(i,j) = 3 s2 exp(-sqrt3 r) is the common factor of every kernel derivative.
  Eigen::MatrixXd kf(N, N), e(N, N);
  const double sqrt3 = std::sqrt(3.0);
  for (Eigen::Index i = 0; i < N; ++i) {
    kf(i, i) = s2;
    e(i, i) = 3.0 * s2;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double r = ((xw.row(i) - xw.row(j)).array() / p.lengthscales.transpose().array()).matrix().norm();
      const double ex = std::exp(-sqrt3 * r);
      kf(i, j) = kf(j, i) = s2 * (1.0 + sqrt3 * r) * ex;
      e(i, j) = e(j, i) = 3.0 * s2 * ex;
    }
  }
  Eigen::MatrixXd k = kf;
  k.diagonal().array() += p.noise;

  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
  if (!factorize(k, s2, llt, jitter)) return std::nullopt;

  const Eigen::VectorXd alpha = llt.solve(y);
  const Eigen::MatrixXd& l = llt.matrixLLT();
  double logdet_half = 0.0;
  for (Eigen::Index i = 0; i < N; ++i) logdet_half += std::log(l(i, i));
  LikelihoodValue out;
  out.nll = 0.5 * y.dot(alpha) + logdet_half + 0.5 * static_cast<double>(N) * std::log(2.0 * std::numbers::pi);
  if (!std::isfinite(out.nll)) return std::nullopt;
  if (!with_gradient) return out;

  const Eigen::MatrixXd kinv = llt.solve(Eigen::MatrixXd::Identity(N, N));
  const Eigen::MatrixXd w = alpha * alpha.transpose() - kinv;

  out.gradient.setZero(3 * n + 2);
  out.gradient[n] = -0.5 * (w.array() * kf.array()).sum();
  out.gradient[n + 1] = -0.5 * p.noise * w.trace();
  for (Eigen::Index d = 0; d < n; ++d) {
    const double inv_l2 = 1.0 / (p.lengthscales[d] * p.lengthscales[d]);
    double g_len = 0.0, g_a = 0.0, g_b = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) {
        const double diff = xw(i, d) - xw(j, d);
        const double we = w(i, j) * e(i, j) * inv_l2;
        g_len += we * diff * diff;
        // dk/d(diff) = -e * diff / l^2
        const double dk_ddiff = -we * diff;
        g_a += dk_ddiff * (ga(i, d) - ga(j, d));
        g_b += dk_ddiff * (gb(i, d) - gb(j, d));
      }
    }
    // Each symmetric pair counted once, which cancels the 0.5.
    out.gradient[d] = -g_len;
    out.gradient[n + 2 + d] = -g_a;
    out.gradient[2 * n + 2 + d] = -g_b;
  }
  return out;
}

GaussianProcess GaussianProcess::condition(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                           const KernelParams& params, bool standardize_targets) {
  if (x.rows() == 0) throw ValidationError("GP needs at least one training point");
  if (x.rows() != y.size()) throw DimensionMismatch("GP inputs and targets differ in length");
  if (params.dim() != x.cols()) throw DimensionMismatch("kernel dimensionality does not match inputs");

  GaussianProcess gp;
  gp.x_ = x;
  gp.params_ = params;
  if (standardize_targets) standardize(y, gp.y_mean_, gp.y_scale_);
  const Eigen::VectorXd ys = (y.array() - gp.y_mean_) / gp.y_scale_;

  gp.xw_ = warp_rows(x, params);
  Eigen::MatrixXd k = kernel_matrix(gp.xw_, params);
  k.diagonal().array() += params.noise;
  if (!factorize(k, params.signal_variance, gp.llt_, gp.jitter_))
    throw SingularKernel("kernel matrix is not positive definite after jitter escalation");
  gp.alpha_ = gp.llt_.solve(ys);

  const Eigen::MatrixXd& l = gp.llt_.matrixLLT();
  double logdet_half = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) logdet_half += std::log(l(i, i));
  gp.log_likelihood_ = -(0.5 * ys.dot(gp.alpha_) + logdet_half +
                         0.5 * static_cast<double>(x.rows()) * std::log(2.0 * std::numbers::pi));
  gp.initial_log_likelihood_ = gp.log_likelihood_;
  return gp;
}

GaussianProcess GaussianProcess::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const FitOptions& options) {
  if (x.rows() == 0) throw ValidationError("GP needs at least one training point");
  if (x.rows() != y.size()) throw DimensionMismatch("GP inputs and targets differ in length");
  if (!y.allFinite()) throw ValidationError("GP targets must be finite");

  const Eigen::Index n = x.cols();
  double mean = 0.0, scale = 1.0;
  standardize(y, mean, scale);
  const Eigen::VectorXd ys = (y.array() - mean) / scale;

  const Box box = log_box(n);
  const Eigen::VectorXd width = box.hi - box.lo;

  auto to_theta = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd t(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) t[i] = box.lo[i] + width[i] * sigmoid(z[i]);
    return t;
  };
  auto to_z = [&](const Eigen::VectorXd& t) {
    Eigen::VectorXd z(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double s = std::clamp((t[i] - box.lo[i]) / width[i], 1e-9, 1.0 - 1e-9);
      z[i] = std::log(s / (1.0 - s));
    }
    return z;
  };
  auto objective = [&](const Eigen::VectorXd& z, Eigen::VectorXd& grad) {
    const Eigen::VectorXd t = to_theta(z);
    auto v = negative_log_likelihood(x, ys, t, true);
    if (!v) return std::numeric_limits<double>::infinity();
    grad.resize(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double s = sigmoid(z[i]);
      grad[i] = v->gradient[i] * width[i] * s * (1.0 - s);
    }
    return v->nll;
  };

  Rng rng(derive_seed(options.seed, "gp-restarts"));
  LbfgsOptions lopt;
  lopt.max_iterations = options.max_iterations;
  std::optional<LbfgsResult> best;
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    KernelParams init = KernelParams::defaults(n);
    if (r > 0) {
      for (Eigen::Index d = 0; d < n; ++d) {
        init.lengthscales[d] = std::exp(rng.uniform(std::log(0.05), std::log(5.0)));
        init.warp_a[d] = std::exp(rng.uniform(-1.0, 1.0));
        init.warp_b[d] = std::exp(rng.uniform(-1.0, 1.0));
      }
      init.signal_variance = std::exp(rng.uniform(std::log(0.3), std::log(3.0)));
      init.noise = std::exp(rng.uniform(std::log(1e-6), std::log(0.3)));
    }
    auto res = minimize_lbfgs(objective, to_z(pack_log_params(init)), lopt);
    if (!std::isfinite(res.value)) continue;
    if (!best || res.value < best->value) best = std::move(res);
  }
  if (!best) throw SingularKernel("no hyperparameter restart produced a factorizable kernel");

  GaussianProcess gp = condition(x, y, unpack_log_params(to_theta(best->x), n), true);
  gp.initial_log_likelihood_ = -best->initial_value;
  return gp;
}

Prediction GaussianProcess::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != x_.cols())
    throw DimensionMismatch("query has " + std::to_string(x.size()) + " coordinates, GP has " +
                            std::to_string(x_.cols()));
  const Eigen::VectorXd xw = warp(x, params_);
  Eigen::VectorXd kstar(x_.rows());
  for (Eigen::Index i = 0; i < x_.rows(); ++i) kstar[i] = matern32(xw.transpose(), xw_.row(i), params_);
  Prediction p;
  p.mean = y_mean_ + y_scale_ * kstar.dot(alpha_);
  const Eigen::VectorXd v = llt_.matrixL().solve(kstar);
  p.variance = std::max(0.0, params_.signal_variance - v.squaredNorm()) * y_scale_ * y_scale_;
  return p;
}

MultiOutputGP MultiOutputGP::fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const FitOptions& options) {
  std::vector<GaussianProcess> outs;
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    FitOptions o = options;
    o.seed = derive_seed(options.seed, "output", static_cast<std::uint64_t>(c));
    outs.push_back(GaussianProcess::fit(x, y.col(c), o));
  }
  return MultiOutputGP(std::move(outs));
}

std::vector<Prediction> MultiOutputGP::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  std::vector<Prediction> out;
  out.reserve(outputs_.size());
  for (const auto& gp : outputs_) out.push_back(gp.predict(x));
  return out;
}

}  // namespace slotune
