#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfgp/linalg.hpp"

namespace dfgp {

// --- timestamp helpers (UTC, hourly grids, epoch seconds) ---

constexpr std::int64_t kSecondsPerHour = 3600;

/// Parses "YYYY-MM-DDTHH:MM:SS" with optional trailing 'Z'; a space may stand
/// in for the 'T'. Throws ParseError otherwise.
std::int64_t parse_timestamp(const std::string& text);
std::string format_timestamp(std::int64_t epoch_seconds);

int hour_of_day(std::int64_t epoch_seconds);
/// ISO weekday index: Monday = 0 ... Sunday = 6.
int day_of_week(std::int64_t epoch_seconds);

// --- datasets ---

/// N aligned hourly series over one shared timestamp grid.
struct TimeSeriesDataset {
  struct Series {
    std::string id;
    std::vector<double> values;
  };

  std::vector<std::int64_t> timestamps;
  std::vector<Series> series;
  std::int64_t step_seconds = kSecondsPerHour;

  std::size_t series_count() const { return series.size(); }
  std::size_t length() const { return timestamps.size(); }
};

/// Reads long-format CSV with header `series_id,timestamp,value`. Rows are
/// grouped by id and sorted by time; an isolated missing hour is filled by
/// linear interpolation, anything longer is rejected. All series must end up
/// on one common grid.
TimeSeriesDataset load_long_csv(const std::string& path);

void save_dataset_csv(const TimeSeriesDataset& dataset, const std::string& path);

// --- covariates ---

enum class Feature { HourOfDay, DayOfWeek, LinearTime };

/// Ordered covariate recipe. Periodic features come from the timestamp;
/// LinearTime is position-in-grid / linear_denominator, so forecasts past the
/// training window extrapolate beyond 1.
struct FeatureSpec {
  std::vector<Feature> features{Feature::HourOfDay, Feature::DayOfWeek, Feature::LinearTime};
  std::size_t linear_denominator = 168;

  std::size_t dimension() const;
};

Matrix build_features(std::span<const std::int64_t> timestamps, const FeatureSpec& spec);

// --- scaling ---

struct SeriesScaler {
  double scale = 1.0;

  static SeriesScaler fit(std::span<const double> train_values);
  std::vector<double> apply(std::span<const double> values) const;
  std::vector<double> inverse(std::span<const double> values) const;
};

// --- train / eval split ---

struct SeriesWindow {
  std::size_t row = 0;  // series position in the dataset (embedding row)
  std::string id;
  std::vector<double> raw;
  std::vector<double> scaled;
  SeriesScaler scaler;
};

struct EvalTarget {
  std::string id;
  std::vector<double> values;
};

struct SplitResult {
  std::vector<std::int64_t> train_timestamps;
  std::vector<std::int64_t> eval_timestamps;
  std::vector<SeriesWindow> train;
  std::vector<EvalTarget> eval;
};

/// Takes the last `horizon` points per series as eval targets and the
/// `train_window` points before them as the (scaled) training window. The
/// scaler is fit on the training window only.
SplitResult split_train_eval(const TimeSeriesDataset& dataset, std::size_t train_window,
                             std::size_t horizon);

// --- synthetic generator ---

/// Forward sampler of the generative model: sinusoidal global factors with
/// random phases, Gaussian loadings, RBF-GP residual paths, iid observation
/// noise.
struct SynthConfig {
  std::size_t n_series = 20;
  std::size_t length = 192;
  std::size_t k_true = 2;
  double noise_sigma = 0.1;
  double gp_amplitude = 0.2;
  double gp_lengthscale = 0.05;  // in normalized-time units (grid position / length)
  std::uint64_t seed = 0;
  std::int64_t start_timestamp = 1388966400;  // 2014-01-06T00:00:00Z, a Monday
};

struct SynthResult {
  TimeSeriesDataset dataset;
  std::vector<std::vector<double>> fixed_effects;  // [series][t]
  std::vector<std::vector<double>> residual_paths; // [series][t], GP draw without noise
};

SynthResult synth_generate(const SynthConfig& config);

/// Companion ground-truth file: `series_id,timestamp,z,f,r`.
void save_synth_truth_csv(const SynthResult& result, const std::string& path);

}  // namespace dfgp
