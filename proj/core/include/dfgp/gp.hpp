#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dfgp/linalg.hpp"
#include "dfgp/tensor.hpp"

namespace dfgp {

/// Per-series RBF kernel hyperparameters, log-parameterized so the optimizer
/// works in an unconstrained space while the exponentiated values stay
/// strictly positive.
struct KernelParams {
  double log_amplitude;    // log a
  double log_lengthscale;  // log l, in normalized-time units
  double log_noise;        // log sigma (observation noise std-dev)

  double amplitude() const;
  double lengthscale() const;
  double noise() const;
};

/// Predictive mean and marginal variance of the local random effect over a
/// forecast grid. Variance includes observation noise.
struct GPPosterior {
  std::vector<double> mean;
  std::vector<double> variance;
  std::ptrdiff_t series_index = -1;
};

/// NLL of N(0, K + sigma^2 I) at the residual vector, together with all
/// closed-form gradients needed to join the training tape.
struct GpNllValue {
  double nll = 0.0;
  std::vector<double> d_residuals;  // alpha = (K + sigma^2 I)^{-1} r
  double d_log_amplitude = 0.0;
  double d_log_lengthscale = 0.0;
  double d_log_noise = 0.0;
  double jitter = 0.0;  // diagonal boost the factorization needed
};

/// k(x, x') = a^2 exp(-(x - x')^2 / (2 l^2)) entrywise over the input grids.
Matrix rbf_kernel_matrix(std::span<const double> x1, std::span<const double> x2,
                         const KernelParams& params);

/// Exact Gaussian marginal NLL
///   1/2 r^T (K+s^2 I)^{-1} r + 1/2 log|K+s^2 I| + n/2 log 2pi
/// with analytic gradients for the residuals and all three log
/// hyperparameters. Pure numeric routine; no tape involvement.
GpNllValue gp_nll_compute(std::span<const double> inputs, std::span<const double> residuals,
                          const KernelParams& params);

/// Tape-visible form: records a custom gradient node so the NLL behaves like
/// a primitive. `log_*` are scalar tensors (typically slices of the
/// per-series parameter vectors).
Tensor gp_nll(const Tensor& residuals, std::span<const double> inputs, const Tensor& log_amplitude,
              const Tensor& log_lengthscale, const Tensor& log_noise);

/// Records a precomputed NLL on the tape (used by the batch loss, which
/// evaluates the per-series numeric parts up front, possibly in parallel).
Tensor gp_nll_record(const GpNllValue& value, const Tensor& residuals, const Tensor& log_amplitude,
                     const Tensor& log_lengthscale, const Tensor& log_noise);

/// Standard GP conditioning of future residuals on training residuals:
///   mean     = K*^T (K+s^2 I)^{-1} r
///   variance = k(x,x) + s^2 - ||L^{-1} k*||^2, floored at 1e-12.
GPPosterior gp_posterior(std::span<const double> train_inputs,
                         std::span<const double> train_residuals,
                         std::span<const double> test_inputs, const KernelParams& params);

}  // namespace dfgp
