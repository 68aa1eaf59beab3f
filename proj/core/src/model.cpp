#include "dfgp/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "dfgp/parallel.hpp"
#include "dfgp/rng.hpp"

namespace dfgp {

void ModelConfig::validate() const {
  if (factor_count < 1) throw ConfigError("factors must be >= 1");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (train_window < 2) throw ConfigError("train_window must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (quantiles.empty()) throw ConfigError("at least one quantile level is required");
  for (std::size_t i = 0; i < quantiles.size(); ++i) {
    if (!(quantiles[i] > 0.0 && quantiles[i] < 1.0)) {
      throw ConfigError("quantiles must lie in (0, 1)");
    }
    if (i > 0 && !(quantiles[i] > quantiles[i - 1])) {
      throw ConfigError("quantiles must be strictly increasing");
    }
  }
  if (feature_spec.features.empty()) throw ConfigError("at least one covariate feature is required");
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_parameters() const {
  return {
      {"lstm.w_input", lstm.w_input},
      {"lstm.w_recur", lstm.w_recur},
      {"lstm.bias", lstm.bias},
      {"projection.weight", projection.weight},
      {"projection.bias", projection.bias},
      {"embeddings.table", embeddings.table},
      {"kernel.log_amplitude", kernel.log_amplitude},
      {"kernel.log_lengthscale", kernel.log_lengthscale},
      {"kernel.log_noise", kernel.log_noise},
  };
}

void ModelParams::zero_grad() {
  for (auto& [name, tensor] : named_parameters()) tensor.zero_grad();
}

std::size_t ModelParams::series_row(const std::string& id) const {
  for (std::size_t i = 0; i < series_ids.size(); ++i) {
    if (series_ids[i] == id) return i;
  }
  throw UnknownSeriesError("series '" + id + "' is not in the checkpoint");
}

namespace {
// Kernel initialization on the scaled series: output scale 0.1, lengthscale
// 0.05 of the training window (about 8 hours of a one-week window), noise 0.1.
constexpr double kInitLogAmplitude = -2.302585092994046;    // log 0.1
constexpr double kInitLogLengthscale = -2.995732273553991;  // log 0.05
constexpr double kInitLogNoise = -2.302585092994046;        // log 0.1
}  // namespace

ModelParams init_model_params(const ModelConfig& config, const std::vector<std::string>& series_ids,
                              std::size_t input_dim, std::uint64_t seed) {
  FactorInitConfig init;
  init.input_dim = input_dim;
  init.hidden_dim = config.hidden_dim;
  init.factor_count = config.factor_count;
  init.series_count = series_ids.size();
  FactorModelParams factors = init_params(seed, init);

  ModelParams params;
  params.lstm = std::move(factors.lstm);
  params.projection = std::move(factors.projection);
  params.embeddings = std::move(factors.embeddings);
  params.series_ids = series_ids;
  const std::size_t n = series_ids.size();
  params.kernel.log_amplitude = Tensor::full({n}, kInitLogAmplitude, true);
  params.kernel.log_lengthscale = Tensor::full({n}, kInitLogLengthscale, true);
  params.kernel.log_noise = Tensor::full({n}, kInitLogNoise, true);
  return params;
}

TrainData make_train_data(const SplitResult& split, const ModelConfig& config) {
  TrainData data;
  data.timestamps = split.train_timestamps;
  FeatureSpec spec = config.feature_spec;
  spec.linear_denominator = config.train_window;
  data.covariates = build_features(data.timestamps, spec);
  data.input_dim = spec.dimension();
  const std::size_t window = data.timestamps.size();
  data.gp_inputs.resize(window);
  for (std::size_t t = 0; t < window; ++t) {
    data.gp_inputs[t] = static_cast<double>(t) / static_cast<double>(config.train_window);
  }
  data.windows = split.train;
  data.softmax_loadings = config.softmax_loadings;
  return data;
}

namespace {

Tensor series_loadings(const ModelParams& params, std::size_t row, bool softmax_loadings) {
  const std::size_t k = params.embeddings.factor_count();
  Tensor w = reshape(slice(params.embeddings.table, row, row + 1), {k});
  return softmax_loadings ? softmax(w) : w;
}

template <typename E>
[[noreturn]] void rethrow_for_series(const std::string& id, const E& error) {
  throw E("series '" + id + "': " + error.what());
}

}  // namespace

Tensor batch_loss(const ModelParams& params, const TrainData& data,
                  std::span<const std::size_t> rows, const BatchLossHooks& hooks) {
  if (rows.empty()) throw ConfigError("batch_loss: empty batch");
  const std::size_t window = data.timestamps.size();

  Tensor factors = global_factors(data.covariates, params.lstm, params.projection);
  if (hooks.transform_factors) factors = hooks.transform_factors(factors);

  // Residual tensors first (tape work, sequential)...
  std::vector<Tensor> residuals;
  residuals.reserve(rows.size());
  for (std::size_t row : rows) {
    const SeriesWindow& series = data.windows.at(row);
    const Tensor loadings = series_loadings(params, row, data.softmax_loadings);
    const Tensor fixed = fixed_effect(loadings, factors);
    Tensor observed({window}, series.scaled);
    residuals.push_back(sub(observed, fixed));
  }

  // ...then the per-series factorizations, which dominate the cost and are
  // independent of one another.
  std::vector<GpNllValue> values(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) {
    const SeriesWindow& series = data.windows.at(rows[i]);
    try {
      values[i] = gp_nll_compute(data.gp_inputs, residuals[i].values(),
                                 params.kernel.series(rows[i]));
    } catch (const NotPositiveDefiniteError& e) {
      rethrow_for_series(series.id, e);
    } catch (const NumericError& e) {
      rethrow_for_series(series.id, e);
    }
  });

  Tensor total;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t row = rows[i];
    const Tensor nll = gp_nll_record(values[i], residuals[i],
                                     slice(params.kernel.log_amplitude, row, row + 1),
                                     slice(params.kernel.log_lengthscale, row, row + 1),
                                     slice(params.kernel.log_noise, row, row + 1));
    total = total.defined() ? add(total, nll) : nll;
  }
  return total;
}

AdamStepResult adam_step(std::vector<std::pair<std::string, Tensor>>& params,
                         const AdamConfig& config, AdamState& state) {
  const std::size_t count = params.size();
  if (state.first_moment.empty()) {
    state.first_moment.resize(count);
    state.second_moment.resize(count);
    for (std::size_t p = 0; p < count; ++p) {
      state.first_moment[p].assign(params[p].second.size(), 0.0);
      state.second_moment[p].assign(params[p].second.size(), 0.0);
    }
  }
  if (state.first_moment.size() != count) {
    throw ConfigError("adam_step: optimizer state does not match the parameter list");
  }

  // Gather gradients; a parameter that never touched the tape contributes
  // zeros.
  std::vector<std::vector<double>> grads(count);
  double norm_sq = 0.0;
  bool finite = true;
  for (std::size_t p = 0; p < count; ++p) {
    const Tensor& tensor = params[p].second;
    if (tensor.has_grad()) {
      grads[p].assign(tensor.grad().begin(), tensor.grad().end());
    } else {
      grads[p].assign(tensor.size(), 0.0);
    }
    for (double g : grads[p]) {
      if (!std::isfinite(g)) finite = false;
      norm_sq += g * g;
    }
  }
  const double grad_norm = std::sqrt(norm_sq);
  if (!finite || !std::isfinite(grad_norm)) {
    ++state.skipped;
    return {false, grad_norm};
  }

  const double scale = grad_norm > config.clip_norm ? config.clip_norm / grad_norm : 1.0;
  const std::size_t step = state.step + 1;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));

  std::vector<std::vector<double>> new_m(count), new_v(count), new_values(count);
  bool valid = true;
  for (std::size_t p = 0; p < count && valid; ++p) {
    const auto values = params[p].second.values();
    new_m[p].resize(values.size());
    new_v[p].resize(values.size());
    new_values[p].resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[p][i] * scale;
      const double m = config.beta1 * state.first_moment[p][i] + (1.0 - config.beta1) * g;
      const double v = config.beta2 * state.second_moment[p][i] + (1.0 - config.beta2) * g * g;
      const double update =
          config.learning_rate * (m / correction1) / (std::sqrt(v / correction2) + config.epsilon);
      const double next = values[i] - update;
      if (!std::isfinite(next)) {
        valid = false;
        break;
      }
      new_m[p][i] = m;
      new_v[p][i] = v;
      new_values[p][i] = next;
    }
  }
  if (!valid) {
    ++state.skipped;
    return {false, grad_norm};
  }

  for (std::size_t p = 0; p < count; ++p) {
    auto values = params[p].second.mutable_values();
    std::copy(new_values[p].begin(), new_values[p].end(), values.begin());
    state.first_moment[p] = std::move(new_m[p]);
    state.second_moment[p] = std::move(new_v[p]);
  }
  state.step = step;
  return {true, grad_norm};
}

TrainResult train(const TrainData& data, const ModelConfig& config) {
  config.validate();
  if (data.windows.empty()) throw ConfigError("train: dataset is empty");

  std::vector<std::string> ids;
  ids.reserve(data.windows.size());
  for (const SeriesWindow& w : data.windows) ids.push_back(w.id);

  TrainResult result;
  result.params = init_model_params(config, ids, data.input_dim, config.seed);
  auto named = result.params.named_parameters();

  AdamConfig adam;
  adam.learning_rate = config.learning_rate;

  AdamState state;
  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  BatchLossHooks no_hooks;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);

    EpochStats stats;
    const std::size_t skipped_before = state.skipped;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, order.size());
      std::span<const std::size_t> batch(order.data() + begin, end - begin);

      Tape tape;
      TapeScope scope(tape);
      const Tensor loss = batch_loss(result.params, data, batch, no_hooks);
      result.params.zero_grad();
      tape.backward(loss);
      const AdamStepResult step = adam_step(named, adam, state);
      if (!step.applied) {
        std::fprintf(stderr, "dfgp: skipped optimizer step (epoch %zu, non-finite update)\n",
                     epoch);
      }
      stats.nll += loss.value();
      stats.grad_norm += step.grad_norm;
      ++batches;
    }
    stats.grad_norm /= static_cast<double>(batches);
    stats.skipped_steps = state.skipped - skipped_before;
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.epochs.push_back(stats);
  }
  return result;
}

TrainResult train(const TimeSeriesDataset& dataset, const ModelConfig& config) {
  config.validate();
  if (dataset.series.empty()) throw ConfigError("train: dataset is empty");
  const SplitResult split = split_train_eval(dataset, config.train_window, config.horizon);
  return train(make_train_data(split, config), config);
}

// --- Gaussian quantiles ---

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

// Acklam's rational approximation to the standard normal quantile.
double normal_quantile_estimate(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double low = 0.02425;

  if (p < low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - low) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double standard_normal_quantile(double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
  double x = normal_quantile_estimate(rho);
  // One Halley refinement against the exact erfc-based CDF.
  const double error = normal_cdf(x) - rho;
  const double u = error * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

double gaussian_quantile(double mean, double variance, double rho) {
  if (!(variance >= 0.0)) throw DomainError("gaussian_quantile: variance must be >= 0");
  return mean + std::sqrt(variance) * standard_normal_quantile(rho);
}

// --- forecasting ---

namespace {

std::vector<ForecastResult> forecast_rows(const ModelParams& params, const TrainData& data,
                                          std::span<const std::size_t> rows, std::size_t horizon,
                                          const ModelConfig& config) {
  const std::size_t window = data.timestamps.size();
  if (window == 0) throw ConfigError("forecast: empty training window");
  TapeSuspend no_recording;  // forecasting is read-only

  std::vector<std::int64_t> grid = data.timestamps;
  grid.reserve(window + horizon);
  const std::int64_t step = window >= 2 ? data.timestamps[1] - data.timestamps[0] : kSecondsPerHour;
  for (std::size_t h = 1; h <= horizon; ++h) {
    grid.push_back(data.timestamps.back() + static_cast<std::int64_t>(h) * step);
  }

  FeatureSpec spec = config.feature_spec;
  spec.linear_denominator = config.train_window;
  const Matrix covariates = build_features(grid, spec);

  const Tensor factors = global_factors(covariates, params.lstm, params.projection);

  std::vector<double> test_inputs(horizon);
  for (std::size_t h = 0; h < horizon; ++h) {
    test_inputs[h] =
        static_cast<double>(window + h) / static_cast<double>(config.train_window);
  }

  // Window -> embedding row mapping goes through the checkpoint's id list, so
  // a reordered data file still picks the right loadings.
  std::vector<std::size_t> embedding_rows(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    embedding_rows[i] = params.series_row(data.windows.at(rows[i]).id);
  }

  std::vector<ForecastResult> results(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) {
    const SeriesWindow& series = data.windows.at(rows[i]);
    const std::size_t embedding_row = embedding_rows[i];

    const Tensor loadings = series_loadings(params, embedding_row, config.softmax_loadings);
    const Tensor fixed = fixed_effect(loadings, factors);

    std::vector<double> residual(window);
    for (std::size_t t = 0; t < window; ++t) residual[t] = series.scaled[t] - fixed[t];

    GPPosterior posterior;
    try {
      posterior = gp_posterior(data.gp_inputs, residual, test_inputs,
                               params.kernel.series(embedding_row));
    } catch (const NotPositiveDefiniteError& e) {
      rethrow_for_series(series.id, e);
    }
    posterior.series_index = static_cast<std::ptrdiff_t>(embedding_row);

    ForecastResult out;
    out.series_id = series.id;
    out.timestamps.assign(grid.begin() + static_cast<std::ptrdiff_t>(window), grid.end());
    out.mean.resize(horizon);
    out.variance.resize(horizon);
    const double scale = series.scaler.scale;
    for (std::size_t h = 0; h < horizon; ++h) {
      out.mean[h] = (fixed[window + h] + posterior.mean[h]) * scale;
      out.variance[h] = posterior.variance[h] * scale * scale;
    }
    for (double rho : config.quantiles) {
      std::vector<double> values(horizon);
      for (std::size_t h = 0; h < horizon; ++h) {
        values[h] = gaussian_quantile(out.mean[h], out.variance[h], rho);
      }
      out.quantile_values[rho] = std::move(values);
    }
    results[i] = std::move(out);
  });
  return results;
}

}  // namespace

std::vector<ForecastResult> forecast_all(const ModelParams& params, const TrainData& data,
                                         std::size_t horizon, const ModelConfig& config) {
  std::vector<std::size_t> rows(data.windows.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return forecast_rows(params, data, rows, horizon, config);
}

ForecastResult forecast_one(const ModelParams& params, const TrainData& data,
                            const std::string& series_id, std::size_t horizon,
                            const ModelConfig& config) {
  for (std::size_t i = 0; i < data.windows.size(); ++i) {
    if (data.windows[i].id == series_id) {
      const std::size_t picked[] = {i};
      return forecast_rows(params, data, picked, horizon, config)[0];
    }
  }
  throw UnknownSeriesError("series '" + series_id + "' is not in the provided data");
}

}  // namespace dfgp
