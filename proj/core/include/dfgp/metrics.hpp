#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

namespace dfgp {

/// QL_rho(z, zhat) = 2 [ rho (z - zhat) 1{z - zhat > 0} + (1 - rho) (zhat - z) 1{z - zhat <= 0} ].
double quantile_loss(double target, double predicted, double rho);

/// sum QL / sum |z| over all (series, step) pairs.
double normalized_quantile_loss(std::span<const double> targets,
                                std::span<const double> predictions, double rho);

/// sqrt( sum (z - zhat)^2 / count ), count = series x horizon when flattened.
double rmse(std::span<const double> targets, std::span<const double> predictions);

/// Fraction of targets inside [lower, upper].
double interval_coverage(std::span<const double> targets, std::span<const double> lower,
                         std::span<const double> upper);

/// zhat_{T+h} = z_{T+h-period*ceil(h/period)}: repeat the last seasonal cycle.
std::vector<double> seasonal_naive(std::span<const double> history, std::size_t period,
                                   std::size_t horizon);

struct EvalReport {
  std::map<double, double> normalized_quantile_losses;  // rho -> loss
  double rmse = 0.0;
  std::map<std::pair<double, double>, double> coverages;  // (lo, hi) -> fraction
  std::size_t n_points = 0;
};

/// Assembles the standard report: one normalized QL per quantile column, RMSE
/// on the mean predictions, and [P10, P90] coverage when both bands exist.
EvalReport build_eval_report(std::span<const double> targets,
                             std::span<const double> mean_predictions,
                             const std::map<double, std::vector<double>>& quantile_predictions);

}  // namespace dfgp
