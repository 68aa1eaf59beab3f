#include "dfgp/gp.hpp"

#include <cmath>

namespace dfgp {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kVarianceFloor = 1e-12;
}  // namespace

double KernelParams::amplitude() const { return std::exp(log_amplitude); }
double KernelParams::lengthscale() const { return std::exp(log_lengthscale); }
double KernelParams::noise() const { return std::exp(log_noise); }

Matrix rbf_kernel_matrix(std::span<const double> x1, std::span<const double> x2,
                         const KernelParams& params) {
  const double a2 = params.amplitude() * params.amplitude();
  const double l = params.lengthscale();
  const double inv_2l2 = 1.0 / (2.0 * l * l);
  Matrix k(x1.size(), x2.size());
  for (std::size_t p = 0; p < x1.size(); ++p) {
    for (std::size_t q = 0; q < x2.size(); ++q) {
      const double d = x1[p] - x2[q];
      k(p, q) = a2 * std::exp(-d * d * inv_2l2);
    }
  }
  return k;
}

GpNllValue gp_nll_compute(std::span<const double> inputs, std::span<const double> residuals,
                          const KernelParams& params) {
  const std::size_t n = inputs.size();
  if (n == 0 || residuals.size() != n) {
    throw ShapeError("gp_nll: inputs and residuals must be nonempty and equal length");
  }

  const double sigma2 = params.noise() * params.noise();
  const double l = params.lengthscale();

  Matrix cov = rbf_kernel_matrix(inputs, inputs, params);
  Matrix shifted = cov;
  for (std::size_t i = 0; i < n; ++i) shifted(i, i) += sigma2;

  const CholeskyFactor factor = cholesky(shifted);
  const std::vector<double> half = triangular_solve(factor.L, residuals, false);
  const std::vector<double> alpha = triangular_solve(factor.L, half, true);

  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) quad += residuals[i] * alpha[i];

  GpNllValue out;
  out.jitter = factor.jitter;
  out.nll = 0.5 * quad + 0.5 * log_det(factor) + 0.5 * static_cast<double>(n) * kLog2Pi;
  out.d_residuals = alpha;

  // dNLL/dtheta = 1/2 <Ainv - alpha alpha^T, dA/dtheta>. The log
  // parameterization folds in dK/d(log a) = 2K, dK/d(log l) = K d^2/l^2,
  // d(sigma^2 I)/d(log sigma) = 2 sigma^2 I.
  const Matrix ainv = cholesky_inverse(factor);
  const double inv_l2 = 1.0 / (l * l);
  double g_amp = 0.0, g_len = 0.0, trace_b = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = 0; q < n; ++q) {
      const double b = ainv(p, q) - alpha[p] * alpha[q];
      const double kpq = cov(p, q);
      const double d = inputs[p] - inputs[q];
      g_amp += b * kpq;
      g_len += 0.5 * b * kpq * d * d * inv_l2;
      if (p == q) trace_b += b;
    }
  }
  out.d_log_amplitude = g_amp;
  out.d_log_lengthscale = g_len;
  out.d_log_noise = sigma2 * trace_b;
  return out;
}

namespace {

void require_scalar(const Tensor& t, const char* what) {
  if (!t.defined() || t.size() != 1) {
    throw ShapeError(std::string("gp_nll: ") + what + " must be a scalar tensor");
  }
}

}  // namespace

Tensor gp_nll_record(const GpNllValue& value, const Tensor& residuals, const Tensor& log_amplitude,
                     const Tensor& log_lengthscale, const Tensor& log_noise) {
  require_scalar(log_amplitude, "log_amplitude");
  require_scalar(log_lengthscale, "log_lengthscale");
  require_scalar(log_noise, "log_noise");
  if (value.d_residuals.size() != residuals.size()) {
    throw ShapeError("gp_nll: residual gradient length mismatch");
  }

  const std::vector<double> alpha = value.d_residuals;
  const double ga = value.d_log_amplitude;
  const double gl = value.d_log_lengthscale;
  const double gs = value.d_log_noise;
  return custom_gradient_node(
      Tensor::scalar(value.nll), {residuals, log_amplitude, log_lengthscale, log_noise},
      [alpha, ga, gl, gs](std::span<const double> out_grad) {
        const double u = out_grad[0];
        std::vector<double> d_res(alpha.size());
        for (std::size_t i = 0; i < alpha.size(); ++i) d_res[i] = u * alpha[i];
        return std::vector<std::vector<double>>{std::move(d_res), {u * ga}, {u * gl}, {u * gs}};
      });
}

Tensor gp_nll(const Tensor& residuals, std::span<const double> inputs, const Tensor& log_amplitude,
              const Tensor& log_lengthscale, const Tensor& log_noise) {
  require_scalar(log_amplitude, "log_amplitude");
  require_scalar(log_lengthscale, "log_lengthscale");
  require_scalar(log_noise, "log_noise");
  const KernelParams params{log_amplitude.value(), log_lengthscale.value(), log_noise.value()};
  const GpNllValue value = gp_nll_compute(inputs, residuals.values(), params);
  return gp_nll_record(value, residuals, log_amplitude, log_lengthscale, log_noise);
}

GPPosterior gp_posterior(std::span<const double> train_inputs,
                         std::span<const double> train_residuals,
                         std::span<const double> test_inputs, const KernelParams& params) {
  const std::size_t n = train_inputs.size();
  const std::size_t m = test_inputs.size();
  if (n == 0 || train_residuals.size() != n) {
    throw ShapeError("gp_posterior: training inputs and residuals must be nonempty, equal length");
  }

  const double a2 = params.amplitude() * params.amplitude();
  const double sigma2 = params.noise() * params.noise();

  GPPosterior post;
  post.mean.resize(m);
  post.variance.resize(m);
  if (m == 0) return post;

  Matrix shifted = rbf_kernel_matrix(train_inputs, train_inputs, params);
  for (std::size_t i = 0; i < n; ++i) shifted(i, i) += sigma2;
  const CholeskyFactor factor = cholesky(shifted);

  const std::vector<double> half = triangular_solve(factor.L, train_residuals, false);
  const std::vector<double> alpha = triangular_solve(factor.L, half, true);

  const Matrix cross = rbf_kernel_matrix(train_inputs, test_inputs, params);  // n x m
  const Matrix v = triangular_solve(factor.L, cross, false);                  // L^{-1} K*

  for (std::size_t q = 0; q < m; ++q) {
    double mean = 0.0;
    double reduction = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean += cross(i, q) * alpha[i];
      reduction += v(i, q) * v(i, q);
    }
    post.mean[q] = mean;
    post.variance[q] = std::max(a2 + sigma2 - reduction, kVarianceFloor);
  }
  return post;
}

}  // namespace dfgp
