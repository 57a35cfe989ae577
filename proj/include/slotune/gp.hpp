#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

#include "slotune/kernel.hpp"

namespace slotune {

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

struct FitOptions {
  int restarts = 8;
  std::uint64_t seed = 0;
  int max_iterations = 100;
};

/// Hyperparameters in the log space the optimizer works in:
/// [log lengthscales (n), log signal variance, log noise, log warp a (n), log warp b (n)].
Eigen::VectorXd pack_log_params(const KernelParams& p);
KernelParams unpack_log_params(const Eigen::VectorXd& theta, Eigen::Index dim);

struct LikelihoodValue {
  double nll = 0.0;          // negative log marginal likelihood
  Eigen::VectorXd gradient;  // d nll / d theta, empty unless requested
};

/// Negative log marginal likelihood of targets y (used as given) under the
/// zero-mean GP with log-space hyperparameters theta. nullopt when the kernel
/// cannot be factorized even after jitter escalation.
std::optional<LikelihoodValue> negative_log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                                       const Eigen::VectorXd& theta, bool with_gradient);

/// Single-output GP regression posterior over unit-cube inputs (rows of X).
///
/// Targets are standardized to zero mean and unit variance before fitting;
/// predictions are reported on the original scale. The posterior is immutable
/// after construction and safe for concurrent prediction.
class GaussianProcess {
 public:
  /// Posterior for fixed hyperparameters. With `standardize == false` the
  /// prior mean is zero on the raw targets, so predict() is literally
  /// k(x,X)(K + tau^2 I)^-1 y and k(x,x) - k(x,X)(K + tau^2 I)^-1 k(X,x).
  static GaussianProcess condition(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelParams& params,
                                   bool standardize = true);

  /// Maximum-likelihood fit of lengthscales, signal variance, noise and warping
  /// by multi-start L-BFGS in bounded log space. Throws SingularKernel if the
  /// chosen hyperparameters cannot be factorized.
  static GaussianProcess fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const FitOptions& options = {});

  Prediction predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  const KernelParams& params() const noexcept { return params_; }
  Eigen::Index dim() const noexcept { return x_.cols(); }
  Eigen::Index size() const noexcept { return x_.rows(); }
  double target_mean() const noexcept { return y_mean_; }
  double target_scale() const noexcept { return y_scale_; }
  double jitter() const noexcept { return jitter_; }
  /// Log marginal likelihood of the standardized targets.
  double log_likelihood() const noexcept { return log_likelihood_; }
  /// Log likelihood at the starting point of the winning restart (fit only).
  double initial_log_likelihood() const noexcept { return initial_log_likelihood_; }

 private:
  GaussianProcess() = default;

  Eigen::MatrixXd x_;
  Eigen::MatrixXd xw_;
  Eigen::VectorXd alpha_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  KernelParams params_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  double jitter_ = 0.0;
  double log_likelihood_ = 0.0;
  double initial_log_likelihood_ = 0.0;
};

/// Independent per-column GPs sharing the same inputs.
class MultiOutputGP {
 public:
  explicit MultiOutputGP(std::vector<GaussianProcess> outputs) : outputs_(std::move(outputs)) {}

  static MultiOutputGP fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const FitOptions& options = {});

  std::size_t outputs() const noexcept { return outputs_.size(); }
  const GaussianProcess& output(std::size_t i) const { return outputs_.at(i); }
  std::vector<Prediction> predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  std::vector<GaussianProcess> outputs_;
};

}  // namespace slotune
