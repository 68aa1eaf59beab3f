#include "dfgp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <utility>

#include "dfgp/errors.hpp"
#include "dfgp/gp.hpp"
#include "dfgp/rng.hpp"

namespace dfgp {

namespace {

// Civil-date conversions on the proleptic Gregorian calendar.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
  int year, month, day;
};

CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return CivilDate{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

int parse_int_field(const std::string& text, std::size_t pos, std::size_t len) {
  int value = 0;
  const char* first = text.data() + pos;
  const auto [ptr, ec] = std::from_chars(first, first + len, value);
  if (ec != std::errc{} || ptr != first + len) {
    throw ParseError("invalid timestamp field in '" + text + "'");
  }
  return value;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t floor_mod(std::int64_t a, std::int64_t b) { return a - floor_div(a, b) * b; }

}  // namespace

std::int64_t parse_timestamp(const std::string& text) {
  // YYYY-MM-DD[T ]HH:MM:SS optionally followed by Z
  std::string t = text;
  if (!t.empty() && t.back() == 'Z') t.pop_back();
  if (t.size() != 19 || t[4] != '-' || t[7] != '-' || (t[10] != 'T' && t[10] != ' ') ||
      t[13] != ':' || t[16] != ':') {
    throw ParseError("timestamp '" + text + "' is not ISO-8601 (YYYY-MM-DDTHH:MM:SS[Z])");
  }
  const int year = parse_int_field(t, 0, 4);
  const int month = parse_int_field(t, 5, 2);
  const int day = parse_int_field(t, 8, 2);
  const int hour = parse_int_field(t, 11, 2);
  const int minute = parse_int_field(t, 14, 2);
  const int second = parse_int_field(t, 17, 2);
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) {
    throw ParseError("timestamp '" + text + "' has out-of-range fields");
  }
  return days_from_civil(year, month, day) * 86400 + hour * 3600 + minute * 60 + second;
}

std::string format_timestamp(std::int64_t epoch_seconds) {
  const std::int64_t days = floor_div(epoch_seconds, 86400);
  const std::int64_t rem = floor_mod(epoch_seconds, 86400);
  const CivilDate date = civil_from_days(days);
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%04d-%02d-%02dT%02d:%02d:%02dZ", date.year, date.month,
                date.day, static_cast<int>(rem / 3600), static_cast<int>((rem % 3600) / 60),
                static_cast<int>(rem % 60));
  return buffer;
}

int hour_of_day(std::int64_t epoch_seconds) {
  return static_cast<int>(floor_mod(epoch_seconds, 86400) / 3600);
}

int day_of_week(std::int64_t epoch_seconds) {
  // 1970-01-01 was a Thursday; Monday = 0.
  return static_cast<int>(floor_mod(floor_div(epoch_seconds, 86400) + 3, 7));
}

namespace {

struct RawPoint {
  std::int64_t timestamp;
  double value;
};

void fill_gaps(const std::string& id, std::vector<RawPoint>& points) {
  std::vector<RawPoint> filled;
  filled.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i > 0) {
      const std::int64_t delta = points[i].timestamp - points[i - 1].timestamp;
      if (delta == 0) {
        throw ParseError("duplicate timestamp " + format_timestamp(points[i].timestamp) +
                         " in series '" + id + "'");
      }
      if (delta == 2 * kSecondsPerHour) {
        filled.push_back(RawPoint{points[i - 1].timestamp + kSecondsPerHour,
                                  0.5 * (points[i - 1].value + points[i].value)});
      } else if (delta != kSecondsPerHour) {
        throw GapError("series '" + id + "' has a gap longer than one step at " +
                       format_timestamp(points[i - 1].timestamp));
      }
    }
    filled.push_back(points[i]);
  }
  points = std::move(filled);
}

}  // namespace

TimeSeriesDataset load_long_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw ParseError("'" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "series_id,timestamp,value") {
    throw ParseError("'" + path + "': expected header 'series_id,timestamp,value'");
  }

  std::vector<std::string> order;
  std::map<std::string, std::vector<RawPoint>> grouped;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 3 comma-separated fields");
    }
    const std::string id = line.substr(0, c1);
    const std::string ts_text = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string value_text = line.substr(c2 + 1);
    if (id.empty()) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": empty series_id");
    }

    std::int64_t ts;
    try {
      ts = parse_timestamp(ts_text);
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }

    double value = 0.0;
    const char* begin = value_text.data();
    const auto [ptr, ec] = std::from_chars(begin, begin + value_text.size(), value);
    if (ec != std::errc{} || ptr != begin + value_text.size() || !std::isfinite(value)) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": bad numeric value '" +
                       value_text + "'");
    }

    auto [it, inserted] = grouped.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back(RawPoint{ts, value});
  }
  if (order.empty()) throw ParseError("'" + path + "' contains no data rows");

  TimeSeriesDataset dataset;
  for (const std::string& id : order) {
    auto& points = grouped[id];
    std::stable_sort(points.begin(), points.end(),
                     [](const RawPoint& a, const RawPoint& b) { return a.timestamp < b.timestamp; });
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (points[i].timestamp == points[i - 1].timestamp) {
        throw ParseError("duplicate timestamp " + format_timestamp(points[i].timestamp) +
                         " in series '" + id + "'");
      }
    }
    fill_gaps(id, points);

    if (dataset.timestamps.empty()) {
      dataset.timestamps.reserve(points.size());
      for (const RawPoint& p : points) dataset.timestamps.push_back(p.timestamp);
    } else {
      if (points.size() != dataset.timestamps.size()) {
        throw ParseError("series '" + id + "' is not aligned with the shared timestamp grid");
      }
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].timestamp != dataset.timestamps[i]) {
          throw ParseError("series '" + id + "' is not aligned with the shared timestamp grid");
        }
      }
    }

    TimeSeriesDataset::Series series;
    series.id = id;
    series.values.reserve(points.size());
    for (const RawPoint& p : points) series.values.push_back(p.value);
    dataset.series.push_back(std::move(series));
  }
  return dataset;
}

void save_dataset_csv(const TimeSeriesDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << "series_id,timestamp,value\n";
  char number[64];
  for (const auto& series : dataset.series) {
    for (std::size_t t = 0; t < dataset.timestamps.size(); ++t) {
      std::snprintf(number, sizeof(number), "%.17g", series.values[t]);
      out << series.id << ',' << format_timestamp(dataset.timestamps[t]) << ',' << number << '\n';
    }
  }
}

std::size_t FeatureSpec::dimension() const {
  std::size_t d = 0;
  for (Feature f : features) d += (f == Feature::LinearTime) ? 1 : 2;
  return d;
}

Matrix build_features(std::span<const std::int64_t> timestamps, const FeatureSpec& spec) {
  if (spec.linear_denominator == 0) throw ConfigError("FeatureSpec.linear_denominator must be > 0");
  Matrix covariates(timestamps.size(), spec.dimension());
  for (std::size_t t = 0; t < timestamps.size(); ++t) {
    std::size_t col = 0;
    for (Feature f : spec.features) {
      switch (f) {
        case Feature::HourOfDay: {
          const double angle = 2.0 * M_PI * hour_of_day(timestamps[t]) / 24.0;
          covariates(t, col++) = std::sin(angle);
          covariates(t, col++) = std::cos(angle);
          break;
        }
        case Feature::DayOfWeek: {
          const double angle = 2.0 * M_PI * day_of_week(timestamps[t]) / 7.0;
          covariates(t, col++) = std::sin(angle);
          covariates(t, col++) = std::cos(angle);
          break;
        }
        case Feature::LinearTime:
          covariates(t, col++) =
              static_cast<double>(t) / static_cast<double>(spec.linear_denominator);
          break;
      }
    }
  }
  return covariates;
}

SeriesScaler SeriesScaler::fit(std::span<const double> train_values) {
  double mean_abs = 0.0;
  for (double v : train_values) mean_abs += std::abs(v);
  if (!train_values.empty()) mean_abs /= static_cast<double>(train_values.size());
  return SeriesScaler{std::max(mean_abs, 1e-3)};
}

std::vector<double> SeriesScaler::apply(std::span<const double> values) const {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] / scale;
  return out;
}

std::vector<double> SeriesScaler::inverse(std::span<const double> values) const {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * scale;
  return out;
}

SplitResult split_train_eval(const TimeSeriesDataset& dataset, std::size_t train_window,
                             std::size_t horizon) {
  if (train_window < 2) throw ConfigError("train_window must be at least 2");
  const std::size_t needed = train_window + horizon;
  const std::size_t total = dataset.length();
  if (total < needed) {
    throw LengthError("dataset length " + std::to_string(total) + " is shorter than train_window+" +
                      "horizon = " + std::to_string(needed) +
                      (dataset.series.empty() ? "" : " (series '" + dataset.series[0].id + "')"));
  }

  const std::size_t train_begin = total - horizon - train_window;
  const std::size_t eval_begin = total - horizon;

  SplitResult split;
  split.train_timestamps.assign(dataset.timestamps.begin() + static_cast<std::ptrdiff_t>(train_begin),
                                dataset.timestamps.begin() + static_cast<std::ptrdiff_t>(eval_begin));
  split.eval_timestamps.assign(dataset.timestamps.begin() + static_cast<std::ptrdiff_t>(eval_begin),
                               dataset.timestamps.end());

  for (std::size_t s = 0; s < dataset.series.size(); ++s) {
    const auto& values = dataset.series[s].values;
    SeriesWindow window;
    window.row = s;
    window.id = dataset.series[s].id;
    window.raw.assign(values.begin() + static_cast<std::ptrdiff_t>(train_begin),
                      values.begin() + static_cast<std::ptrdiff_t>(eval_begin));
    window.scaler = SeriesScaler::fit(window.raw);
    window.scaled = window.scaler.apply(window.raw);
    split.train.push_back(std::move(window));

    EvalTarget target;
    target.id = dataset.series[s].id;
    target.values.assign(values.begin() + static_cast<std::ptrdiff_t>(eval_begin), values.end());
    split.eval.push_back(std::move(target));
  }
  return split;
}

SynthResult synth_generate(const SynthConfig& config) {
  if (config.n_series == 0 || config.length == 0 || config.k_true == 0) {
    throw ConfigError("synth: n_series, length and k_true must be positive");
  }
  Rng rng(config.seed);
  const std::size_t n = config.n_series;
  const std::size_t total = config.length;
  const std::size_t k = config.k_true;

  // Global factors: unit sinusoids with seeded phases, cycling through daily,
  // weekly and harmonic periods.
  static const double kPeriods[] = {24.0, 168.0, 12.0, 84.0};
  std::vector<double> phases(k);
  for (double& p : phases) p = rng.uniform(0.0, 2.0 * M_PI);
  std::vector<std::vector<double>> factors(k, std::vector<double>(total));
  for (std::size_t j = 0; j < k; ++j) {
    const double period = kPeriods[j % 4] * (1.0 + static_cast<double>(j / 4));
    for (std::size_t t = 0; t < total; ++t) {
      factors[j][t] = std::sin(2.0 * M_PI * static_cast<double>(t) / period + phases[j]);
    }
  }

  std::vector<std::vector<double>> loadings(n, std::vector<double>(k));
  for (auto& row : loadings) {
    for (double& w : row) w = rng.normal();
  }

  // One shared residual covariance factor: all series live on the same grid.
  CholeskyFactor residual_factor;
  const bool draw_residuals = config.gp_amplitude > 0.0;
  if (draw_residuals) {
    std::vector<double> grid(total);
    for (std::size_t t = 0; t < total; ++t) {
      grid[t] = static_cast<double>(t) / static_cast<double>(total);
    }
    const KernelParams kernel{std::log(config.gp_amplitude), std::log(config.gp_lengthscale), 0.0};
    Matrix cov = rbf_kernel_matrix(grid, grid, kernel);
    residual_factor = cholesky(cov);
  }

  SynthResult result;
  result.dataset.timestamps.resize(total);
  for (std::size_t t = 0; t < total; ++t) {
    result.dataset.timestamps[t] =
        config.start_timestamp + static_cast<std::int64_t>(t) * kSecondsPerHour;
  }

  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> fixed(total, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t t = 0; t < total; ++t) fixed[t] += loadings[i][j] * factors[j][t];
    }

    std::vector<double> residual(total, 0.0);
    if (draw_residuals) {
      std::vector<double> normals(total);
      for (double& v : normals) v = rng.normal();
      for (std::size_t r = 0; r < total; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c <= r; ++c) acc += residual_factor.L(r, c) * normals[c];
        residual[r] = acc;
      }
    }

    TimeSeriesDataset::Series series;
    series.id = "synth-" + std::to_string(i);
    series.values.resize(total);
    for (std::size_t t = 0; t < total; ++t) {
      const double noise = config.noise_sigma > 0.0 ? rng.normal(0.0, config.noise_sigma) : 0.0;
      series.values[t] = fixed[t] + residual[t] + noise;
    }
    result.dataset.series.push_back(std::move(series));
    result.fixed_effects.push_back(std::move(fixed));
    result.residual_paths.push_back(std::move(residual));
  }
  return result;
}

void save_synth_truth_csv(const SynthResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << "series_id,timestamp,z,f,r\n";
  char z_text[64], f_text[64], r_text[64];
  for (std::size_t i = 0; i < result.dataset.series.size(); ++i) {
    const auto& series = result.dataset.series[i];
    for (std::size_t t = 0; t < result.dataset.timestamps.size(); ++t) {
      std::snprintf(z_text, sizeof(z_text), "%.17g", series.values[t]);
      std::snprintf(f_text, sizeof(f_text), "%.17g", result.fixed_effects[i][t]);
      std::snprintf(r_text, sizeof(r_text), "%.17g", result.residual_paths[i][t]);
      out << series.id << ',' << format_timestamp(result.dataset.timestamps[t]) << ',' << z_text
          << ',' << f_text << ',' << r_text << '\n';
    }
  }
}

}  // namespace dfgp
