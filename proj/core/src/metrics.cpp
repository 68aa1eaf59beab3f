#include "dfgp/metrics.hpp"

#include <cmath>
#include <string>

#include "dfgp/errors.hpp"

namespace dfgp {

double quantile_loss(double target, double predicted, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
  const double diff = target - predicted;
  return diff > 0.0 ? 2.0 * rho * diff : 2.0 * (1.0 - rho) * (-diff);
}

double normalized_quantile_loss(std::span<const double> targets,
                                std::span<const double> predictions, double rho) {
  if (targets.empty() || targets.size() != predictions.size()) {
    throw ShapeError("normalized_quantile_loss: targets and predictions must be nonempty, equal");
  }
  double loss = 0.0, normalizer = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    loss += quantile_loss(targets[i], predictions[i], rho);
    normalizer += std::abs(targets[i]);
  }
  if (normalizer == 0.0) {
    throw DegenerateNormalizerError("normalized quantile loss: sum |z| is zero");
  }
  return loss / normalizer;
}

double rmse(std::span<const double> targets, std::span<const double> predictions) {
  if (targets.size() != predictions.size()) {
    throw ShapeError("rmse: targets and predictions differ in length");
  }
  if (targets.empty()) throw DegenerateNormalizerError("rmse: empty evaluation set");
  double acc = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double d = targets[i] - predictions[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(targets.size()));
}

double interval_coverage(std::span<const double> targets, std::span<const double> lower,
                         std::span<const double> upper) {
  if (targets.size() != lower.size() || targets.size() != upper.size()) {
    throw ShapeError("interval_coverage: band lengths differ from targets");
  }
  if (targets.empty()) return 0.0;
  std::size_t inside = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (lower[i] > upper[i]) throw ShapeError("interval_coverage: lower band above upper band");
    if (targets[i] >= lower[i] && targets[i] <= upper[i]) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(targets.size());
}

std::vector<double> seasonal_naive(std::span<const double> history, std::size_t period,
                                   std::size_t horizon) {
  if (period == 0 || history.size() < period) {
    throw LengthError("seasonal_naive: history must cover at least one period");
  }
  std::vector<double> out(horizon);
  for (std::size_t h = 0; h < horizon; ++h) {
    out[h] = history[history.size() - period + (h % period)];
  }
  return out;
}

EvalReport build_eval_report(std::span<const double> targets,
                             std::span<const double> mean_predictions,
                             const std::map<double, std::vector<double>>& quantile_predictions) {
  EvalReport report;
  report.n_points = targets.size();
  report.rmse = rmse(targets, mean_predictions);
  for (const auto& [rho, predictions] : quantile_predictions) {
    if (predictions.size() != targets.size()) {
      throw ShapeError("build_eval_report: quantile column length mismatch at rho=" +
                       std::to_string(rho));
    }
    report.normalized_quantile_losses[rho] = normalized_quantile_loss(targets, predictions, rho);
  }
  const auto lo = quantile_predictions.find(0.1);
  const auto hi = quantile_predictions.find(0.9);
  if (lo != quantile_predictions.end() && hi != quantile_predictions.end()) {
    report.coverages[{0.1, 0.9}] = interval_coverage(targets, lo->second, hi->second);
  }
  return report;
}

}  // namespace dfgp
