#include "dfgp/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dfgp {

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = s.find_first_not_of(" \t");
  std::size_t end = s.find_last_not_of(" \t");
  if (begin == std::string::npos) return "";
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* begin = value.data();
  const auto [ptr, ec] = std::from_chars(begin, begin + value.size(), out);
  if (ec != std::errc{} || ptr != begin + value.size() || !std::isfinite(out)) {
    throw ConfigError("config: bad numeric value for '" + key + "': '" + value + "'");
  }
  return out;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* begin = value.data();
  const auto [ptr, ec] = std::from_chars(begin, begin + value.size(), out);
  if (ec != std::errc{} || ptr != begin + value.size()) {
    throw ConfigError("config: bad unsigned value for '" + key + "': '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: bad boolean for '" + key + "': '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream stream(value);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

Feature parse_feature(const std::string& name) {
  if (name == "hour_of_day") return Feature::HourOfDay;
  if (name == "day_of_week") return Feature::DayOfWeek;
  if (name == "linear_time") return Feature::LinearTime;
  throw ConfigError("config: unknown feature '" + name +
                    "' (expected hour_of_day, day_of_week, linear_time)");
}

const char* feature_name(Feature f) {
  switch (f) {
    case Feature::HourOfDay: return "hour_of_day";
    case Feature::DayOfWeek: return "day_of_week";
    case Feature::LinearTime: return "linear_time";
  }
  return "?";
}

std::string format_double(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

void apply_pair(RunConfig& c, const std::string& key, const std::string& value,
                const std::string& origin) {
  if (key == "factors") c.factors = parse_unsigned(key, value);
  else if (key == "hidden_dim") c.hidden_dim = parse_unsigned(key, value);
  else if (key == "horizon") c.horizon = parse_unsigned(key, value);
  else if (key == "train_window") c.train_window = parse_unsigned(key, value);
  else if (key == "learning_rate") c.learning_rate = parse_double(key, value);
  else if (key == "epochs") c.epochs = parse_unsigned(key, value);
  else if (key == "batch_size") c.batch_size = parse_unsigned(key, value);
  else if (key == "seed") c.seed = parse_unsigned(key, value);
  else if (key == "softmax_loadings") c.softmax_loadings = parse_bool(key, value);
  else if (key == "quantiles") {
    c.quantiles.clear();
    for (const std::string& q : split_list(value)) c.quantiles.push_back(parse_double(key, q));
    if (c.quantiles.empty()) throw ConfigError("config: 'quantiles' must not be empty");
  } else if (key == "features") {
    c.features.clear();
    for (const std::string& f : split_list(value)) c.features.push_back(parse_feature(f));
    if (c.features.empty()) throw ConfigError("config: 'features' must not be empty");
  }
  else if (key == "synth_series") c.synth_series = parse_unsigned(key, value);
  else if (key == "synth_length") c.synth_length = parse_unsigned(key, value);
  else if (key == "synth_factors") c.synth_factors = parse_unsigned(key, value);
  else if (key == "synth_noise") c.synth_noise = parse_double(key, value);
  else if (key == "synth_gp_amplitude") c.synth_gp_amplitude = parse_double(key, value);
  else if (key == "synth_gp_lengthscale") c.synth_gp_lengthscale = parse_double(key, value);
  else if (key == "data") c.data = value;
  else if (key == "out") c.out = value;
  else throw ConfigError(origin + ": unknown config key '" + key + "'");
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.factor_count = factors;
  m.hidden_dim = hidden_dim;
  m.horizon = horizon;
  m.train_window = train_window;
  m.learning_rate = learning_rate;
  m.epochs = epochs;
  m.batch_size = batch_size;
  m.seed = seed;
  m.softmax_loadings = softmax_loadings;
  m.quantiles = quantiles;
  m.feature_spec.features = features;
  m.feature_spec.linear_denominator = train_window;
  return m;
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig s;
  s.n_series = synth_series;
  s.length = synth_length;
  s.k_true = synth_factors;
  s.noise_sigma = synth_noise;
  s.gp_amplitude = synth_gp_amplitude;
  s.gp_lengthscale = synth_gp_lengthscale;
  s.seed = seed;
  return s;
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
  std::stringstream stream(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    }
    apply_pair(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), origin);
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  RunConfig config;
  apply_config_text(config, buffer.str(), path);
  return config;
}

std::string echo_config(const RunConfig& c) {
  std::ostringstream out;
  out << "factors=" << c.factors << '\n';
  out << "hidden_dim=" << c.hidden_dim << '\n';
  out << "horizon=" << c.horizon << '\n';
  out << "train_window=" << c.train_window << '\n';
  out << "learning_rate=" << format_double(c.learning_rate) << '\n';
  out << "epochs=" << c.epochs << '\n';
  out << "batch_size=" << c.batch_size << '\n';
  out << "seed=" << c.seed << '\n';
  out << "softmax_loadings=" << (c.softmax_loadings ? "true" : "false") << '\n';
  out << "quantiles=";
  for (std::size_t i = 0; i < c.quantiles.size(); ++i) {
    out << (i ? "," : "") << format_double(c.quantiles[i]);
  }
  out << '\n';
  out << "features=";
  for (std::size_t i = 0; i < c.features.size(); ++i) {
    out << (i ? "," : "") << feature_name(c.features[i]);
  }
  out << '\n';
  out << "synth_series=" << c.synth_series << '\n';
  out << "synth_length=" << c.synth_length << '\n';
  out << "synth_factors=" << c.synth_factors << '\n';
  out << "synth_noise=" << format_double(c.synth_noise) << '\n';
  out << "synth_gp_amplitude=" << format_double(c.synth_gp_amplitude) << '\n';
  out << "synth_gp_lengthscale=" << format_double(c.synth_gp_lengthscale) << '\n';
  out << "data=" << c.data << '\n';
  out << "out=" << c.out << '\n';
  return out.str();
}

}  // namespace dfgp
