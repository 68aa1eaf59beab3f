#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dfgp/data.hpp"
#include "dfgp/factors.hpp"
#include "dfgp/gp.hpp"
#include "dfgp/tensor.hpp"

namespace dfgp {

struct ModelConfig {
  std::size_t factor_count = 10;
  std::size_t hidden_dim = 50;
  std::size_t horizon = 24;
  std::size_t train_window = 168;
  double learning_rate = 0.01;
  std::size_t epochs = 2000;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  bool softmax_loadings = false;
  std::vector<double> quantiles{0.1, 0.5, 0.9};
  FeatureSpec feature_spec;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
};

/// Per-series kernel hyperparameters, one entry per embedding row, stored as
/// three length-N tensors so the optimizer treats them like any other
/// parameter group.
struct KernelParamTable {
  Tensor log_amplitude;
  Tensor log_lengthscale;
  Tensor log_noise;

  KernelParams series(std::size_t row) const {
    return KernelParams{log_amplitude[row], log_lengthscale[row], log_noise[row]};
  }
};

struct ModelParams {
  LSTMParams lstm;
  FactorProjection projection;
  EmbeddingTable embeddings;
  KernelParamTable kernel;
  std::vector<std::string> series_ids;

  /// Fixed-order named view over every trainable tensor; the checkpoint
  /// layout and the optimizer state both follow this order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  void zero_grad();
  std::size_t series_row(const std::string& id) const;  // throws UnknownSeriesError
};

ModelParams init_model_params(const ModelConfig& config, const std::vector<std::string>& series_ids,
                              std::size_t input_dim, std::uint64_t seed);

/// Everything the loss needs for one training window: the shared covariates,
/// the normalized-time GP inputs and the scaled per-series windows.
struct TrainData {
  std::vector<std::int64_t> timestamps;
  Matrix covariates;              // W x d
  std::vector<double> gp_inputs;  // t / train_window
  std::vector<SeriesWindow> windows;
  std::size_t input_dim = 0;
  bool softmax_loadings = false;
};

TrainData make_train_data(const SplitResult& split, const ModelConfig& config);

/// Test hook: lets the gradient checker splice a deliberately wrong backward
/// rule into the factor pipeline. Empty by default.
struct BatchLossHooks {
  std::function<Tensor(const Tensor&)> transform_factors;
};

/// Sum of per-series GP marginal NLLs at the current parameters, on the tape:
/// factors are computed once over the shared grid, residuals are
/// scaled-observations minus fixed effects. The heavy per-series numeric work
/// runs in parallel; tape recording order stays fixed.
Tensor batch_loss(const ModelParams& params, const TrainData& data,
                  std::span<const std::size_t> rows, const BatchLossHooks& hooks = {});

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 10.0;
};

struct AdamState {
  std::size_t step = 0;
  std::size_t skipped = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

struct AdamStepResult {
  bool applied = false;
  double grad_norm = 0.0;  // global norm before clipping
};

/// Global-norm clipping followed by the bias-corrected Adam update. Steps
/// with non-finite gradients, or that would produce non-finite parameters,
/// are rejected (parameters restored) and counted in state.skipped.
AdamStepResult adam_step(std::vector<std::pair<std::string, Tensor>>& params,
                         const AdamConfig& config, AdamState& state);

struct EpochStats {
  double nll = 0.0;
  double grad_norm = 0.0;  // mean over the epoch's batches
  double seconds = 0.0;
  std::size_t skipped_steps = 0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

/// Full maximum-likelihood loop: epochs x ceil(N / batch_size) Adam steps
/// over seed-shuffled series batches. Deterministic given (seed, config,
/// data).
TrainResult train(const TimeSeriesDataset& dataset, const ModelConfig& config);
TrainResult train(const TrainData& data, const ModelConfig& config);

struct ForecastResult {
  std::string series_id;
  std::vector<std::int64_t> timestamps;
  std::vector<double> mean;                          // original scale
  std::vector<double> variance;                      // original scale squared
  std::map<double, std::vector<double>> quantile_values;
};

/// mean + sqrt(variance) * Phi^{-1}(rho); Phi^{-1} via rational approximation
/// plus one Halley refinement (|error| < 1e-8 over (0,1)).
double gaussian_quantile(double mean, double variance, double rho);
double standard_normal_quantile(double rho);

/// Forecasts every requested series over `horizon` steps past the training
/// window: LSTM fixed effect over the extended grid plus the GP posterior on
/// the training residuals, inverse-scaled to original units.
std::vector<ForecastResult> forecast_all(const ModelParams& params, const TrainData& data,
                                         std::size_t horizon, const ModelConfig& config);
ForecastResult forecast_one(const ModelParams& params, const TrainData& data,
                            const std::string& series_id, std::size_t horizon,
                            const ModelConfig& config);

}  // namespace dfgp
