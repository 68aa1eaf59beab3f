#pragma once

#include <string>

#include "dfgp/data.hpp"
#include "dfgp/model.hpp"

namespace dfgp {

/// Flat key=value run configuration. Every key has a default; unknown keys
/// are rejected so typos cannot silently fall back to defaults. `#` starts a
/// comment.
struct RunConfig {
  // model
  std::size_t factors = 10;
  std::size_t hidden_dim = 50;
  std::size_t horizon = 24;
  std::size_t train_window = 168;
  double learning_rate = 0.01;
  std::size_t epochs = 2000;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  bool softmax_loadings = false;
  std::vector<double> quantiles{0.1, 0.5, 0.9};
  std::vector<Feature> features{Feature::HourOfDay, Feature::DayOfWeek, Feature::LinearTime};

  // synthetic generator
  std::size_t synth_series = 20;
  std::size_t synth_length = 192;
  std::size_t synth_factors = 2;
  double synth_noise = 0.1;
  double synth_gp_amplitude = 0.2;
  double synth_gp_lengthscale = 0.05;

  // paths (normally given as CLI flags; kept here so an echoed config file
  // reproduces the run)
  std::string data;
  std::string out;

  ModelConfig model_config() const;
  SynthConfig synth_config() const;
};

/// Applies `path` on top of the defaults. Throws ConfigError for unknown
/// keys or unparseable values.
RunConfig load_run_config(const std::string& path);

/// Applies key=value text on top of `base`.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin);

/// Canonical echo: every key, fixed order, parseable by load_run_config.
std::string echo_config(const RunConfig& config);

}  // namespace dfgp
