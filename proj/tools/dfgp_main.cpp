// dfgp: train / forecast / evaluate / synth / gradcheck front end.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure,
// 5 unknown series, 6 forecast/actuals key mismatch.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dfgp/checkpoint.hpp"
#include "dfgp/config.hpp"
#include "dfgp/data.hpp"
#include "dfgp/errors.hpp"
#include "dfgp/gradcheck.hpp"
#include "dfgp/metrics.hpp"
#include "dfgp/model.hpp"

namespace {

namespace fs = std::filesystem;

class KeyMismatchError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

std::string quantile_column(double rho) {
  const int percent = static_cast<int>(std::lround(rho * 100.0));
  return "p" + std::to_string(percent);
}

// --- train ---

struct TrainArgs {
  std::string data_path, config_path, out_dir;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& args) {
  dfgp::RunConfig run = args.config_path.empty() ? dfgp::RunConfig{}
                                                 : dfgp::load_run_config(args.config_path);
  if (args.seed) run.seed = *args.seed;
  run.data = args.data_path;
  run.out = args.out_dir;

  const dfgp::ModelConfig model_config = run.model_config();
  model_config.validate();

  const dfgp::TimeSeriesDataset dataset = dfgp::load_long_csv(args.data_path);
  const dfgp::TrainResult result = dfgp::train(dataset, model_config);

  fs::create_directories(args.out_dir);
  const std::string echo = dfgp::echo_config(run);
  dfgp::save_checkpoint((fs::path(args.out_dir) / "model.ckpt").string(), result.params, echo);

  {
    std::ofstream history((fs::path(args.out_dir) / "history.csv").string(), std::ios::binary);
    history << "epoch,nll,grad_norm,seconds\n";
    for (std::size_t e = 0; e < result.history.epochs.size(); ++e) {
      const auto& stats = result.history.epochs[e];
      history << e << ',' << fmt(stats.nll) << ',' << fmt(stats.grad_norm) << ','
              << fmt(stats.seconds) << '\n';
    }
  }
  {
    std::ofstream echo_file((fs::path(args.out_dir) / "config.echo").string(), std::ios::binary);
    echo_file << echo;
  }

  std::size_t skipped = 0;
  for (const auto& stats : result.history.epochs) skipped += stats.skipped_steps;
  if (skipped > 0) {
    std::cerr << "dfgp train: " << skipped << " optimizer step(s) were skipped\n";
  }
  if (!result.history.epochs.empty()) {
    std::cout << "trained " << result.history.epochs.size() << " epochs, final nll "
              << fmt(result.history.epochs.back().nll) << "\n";
  }
  return 0;
}

// --- forecast ---

struct ForecastArgs {
  std::string ckpt_path, data_path, out_path, plot_path;
  std::optional<std::size_t> horizon;
};

// Context selection: the window the checkpoint trained on. With T >= W + H
// (H = the training config's holdout horizon) the context ends H steps before
// the end of the file, so the held-out tail can be scored; with T == W the
// context is the whole file and the forecast extends past its end.
dfgp::TrainData forecast_context(const dfgp::TimeSeriesDataset& dataset,
                                 const dfgp::ModelConfig& config) {
  const std::size_t total = dataset.length();
  std::size_t holdout;
  if (total >= config.train_window + config.horizon) {
    holdout = config.horizon;
  } else if (total >= config.train_window) {
    holdout = 0;
  } else {
    throw dfgp::LengthError("data has " + std::to_string(total) +
                            " points, fewer than the training window " +
                            std::to_string(config.train_window));
  }
  const dfgp::SplitResult split = dfgp::split_train_eval(dataset, config.train_window, holdout);
  return dfgp::make_train_data(split, config);
}

void write_forecast_csv(const std::string& path, const std::vector<dfgp::ForecastResult>& results,
                        const std::vector<double>& quantiles) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw dfgp::ParseError("cannot write '" + path + "'");
  out << "series_id,timestamp,mean,variance";
  for (double rho : quantiles) out << ',' << quantile_column(rho);
  out << '\n';
  for (const auto& result : results) {
    for (std::size_t h = 0; h < result.timestamps.size(); ++h) {
      out << result.series_id << ',' << dfgp::format_timestamp(result.timestamps[h]) << ','
          << fmt(result.mean[h]) << ',' << fmt(result.variance[h]);
      for (double rho : quantiles) out << ',' << fmt(result.quantile_values.at(rho)[h]);
      out << '\n';
    }
  }
}

void write_plot_data(const std::string& path, const dfgp::TrainData& context,
                     const std::vector<dfgp::ForecastResult>& results,
                     const std::vector<double>& quantiles) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw dfgp::ParseError("cannot write '" + path + "'");
  out << "series_id,timestamp,variable,value\n";
  const std::size_t window = context.timestamps.size();
  const std::size_t tail = std::min<std::size_t>(window, 168);
  for (const auto& series : context.windows) {
    for (std::size_t t = window - tail; t < window; ++t) {
      out << series.id << ',' << dfgp::format_timestamp(context.timestamps[t]) << ",history,"
          << fmt(series.raw[t]) << '\n';
    }
  }
  for (const auto& result : results) {
    for (std::size_t h = 0; h < result.timestamps.size(); ++h) {
      const std::string stamp = dfgp::format_timestamp(result.timestamps[h]);
      out << result.series_id << ',' << stamp << ",mean," << fmt(result.mean[h]) << '\n';
      for (double rho : quantiles) {
        out << result.series_id << ',' << stamp << ',' << quantile_column(rho) << ','
            << fmt(result.quantile_values.at(rho)[h]) << '\n';
      }
    }
  }
}

int cmd_forecast(const ForecastArgs& args) {
  const dfgp::Checkpoint ckpt = dfgp::load_checkpoint(args.ckpt_path);
  dfgp::RunConfig run;
  dfgp::apply_config_text(run, ckpt.config_echo, args.ckpt_path);
  const dfgp::ModelConfig config = run.model_config();

  const dfgp::TimeSeriesDataset dataset = dfgp::load_long_csv(args.data_path);
  const dfgp::TrainData context = forecast_context(dataset, config);
  const std::size_t horizon = args.horizon.value_or(config.horizon);

  const std::vector<dfgp::ForecastResult> results =
      dfgp::forecast_all(ckpt.params, context, horizon, config);
  write_forecast_csv(args.out_path, results, config.quantiles);
  if (!args.plot_path.empty()) {
    write_plot_data(args.plot_path, context, results, config.quantiles);
  }
  std::cout << "forecast " << results.size() << " series x " << horizon << " steps -> "
            << args.out_path << "\n";
  return 0;
}

// --- evaluate ---

struct EvaluateArgs {
  std::string forecast_path, actuals_path, out_path;
};

struct ForecastTable {
  std::vector<std::string> keys;  // "id,timestamp" in file order
  std::vector<double> mean;
  std::map<double, std::vector<double>> quantiles;
};

ForecastTable read_forecast_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dfgp::ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw dfgp::ParseError("'" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  {
    std::stringstream stream(line);
    std::string cell;
    while (std::getline(stream, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 3 || header[0] != "series_id" || header[1] != "timestamp") {
    throw dfgp::ParseError("'" + path + "': expected forecast header starting with series_id,timestamp");
  }
  std::map<std::size_t, double> quantile_columns;
  std::size_t mean_column = 0;
  bool has_mean = false;
  for (std::size_t c = 2; c < header.size(); ++c) {
    if (header[c] == "mean") {
      mean_column = c;
      has_mean = true;
    } else if (header[c].size() >= 2 && header[c][0] == 'p') {
      const std::string digits = header[c].substr(1);
      if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
        quantile_columns[c] = std::stod(digits) / 100.0;
      }
    }
  }
  if (!has_mean) throw dfgp::ParseError("'" + path + "': no 'mean' column");

  ForecastTable table;
  for (const auto& [col, rho] : quantile_columns) table.quantiles[rho] = {};
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream stream(line);
    std::string cell;
    while (std::getline(stream, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) {
      throw dfgp::ParseError(path + ":" + std::to_string(line_no) + ": wrong column count");
    }
    table.keys.push_back(cells[0] + "," + cells[1]);
    try {
      table.mean.push_back(std::stod(cells[mean_column]));
      for (const auto& [col, rho] : quantile_columns) {
        table.quantiles[rho].push_back(std::stod(cells[col]));
      }
    } catch (const std::exception&) {
      throw dfgp::ParseError(path + ":" + std::to_string(line_no) + ": bad numeric cell");
    }
  }
  if (table.keys.empty()) throw dfgp::ParseError("'" + path + "' contains no forecast rows");
  return table;
}

std::map<std::string, double> read_actuals_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dfgp::ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw dfgp::ParseError("'" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "series_id,timestamp,value") {
    throw dfgp::ParseError("'" + path + "': expected header 'series_id,timestamp,value'");
  }
  std::map<std::string, double> actuals;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw dfgp::ParseError(path + ":" + std::to_string(line_no) + ": expected 3 fields");
    }
    try {
      actuals[line.substr(0, c2)] = std::stod(line.substr(c2 + 1));
    } catch (const std::exception&) {
      throw dfgp::ParseError(path + ":" + std::to_string(line_no) + ": bad numeric value");
    }
  }
  return actuals;
}

int cmd_evaluate(const EvaluateArgs& args) {
  const ForecastTable table = read_forecast_csv(args.forecast_path);
  const std::map<std::string, double> actuals = read_actuals_csv(args.actuals_path);

  std::vector<std::string> missing;
  std::vector<double> targets;
  targets.reserve(table.keys.size());
  for (const std::string& key : table.keys) {
    const auto it = actuals.find(key);
    if (it == actuals.end()) {
      if (missing.size() < 10) missing.push_back(key);
      continue;
    }
    targets.push_back(it->second);
  }
  if (!missing.empty()) {
    std::ostringstream message;
    message << "forecast keys missing from actuals:";
    for (const std::string& key : missing) message << "\n  " << key;
    throw KeyMismatchError(message.str());
  }

  for (double required : {0.1, 0.5, 0.9}) {
    if (table.quantiles.find(required) == table.quantiles.end()) {
      throw dfgp::ParseError("forecast file lacks the " + quantile_column(required) + " column");
    }
  }

  const dfgp::EvalReport report = dfgp::build_eval_report(targets, table.mean, table.quantiles);

  std::ofstream out(args.out_path, std::ios::binary);
  if (!out) throw dfgp::ParseError("cannot write '" + args.out_path + "'");
  out << "p50ql=" << fmt(report.normalized_quantile_losses.at(0.5)) << '\n'
      << "p90ql=" << fmt(report.normalized_quantile_losses.at(0.9)) << '\n'
      << "rmse=" << fmt(report.rmse) << '\n'
      << "coverage_p10_p90=" << fmt(report.coverages.at({0.1, 0.9})) << '\n'
      << "n_points=" << report.n_points << '\n';

  nlohmann::json doc;
  doc["p50ql"] = report.normalized_quantile_losses.at(0.5);
  doc["p90ql"] = report.normalized_quantile_losses.at(0.9);
  doc["rmse"] = report.rmse;
  doc["coverage_p10_p90"] = report.coverages.at({0.1, 0.9});
  doc["n_points"] = report.n_points;
  std::ofstream json_out(args.out_path + ".json", std::ios::binary);
  json_out << doc.dump(2) << '\n';

  std::cout << "p50ql=" << fmt(report.normalized_quantile_losses.at(0.5))
            << " p90ql=" << fmt(report.normalized_quantile_losses.at(0.9))
            << " rmse=" << fmt(report.rmse) << "\n";
  return 0;
}

// --- synth ---

struct SynthArgs {
  std::string config_path, out_dir;
};

int cmd_synth(const SynthArgs& args) {
  const dfgp::RunConfig run = args.config_path.empty() ? dfgp::RunConfig{}
                                                       : dfgp::load_run_config(args.config_path);
  const dfgp::SynthResult result = dfgp::synth_generate(run.synth_config());
  fs::create_directories(args.out_dir);
  dfgp::save_dataset_csv(result.dataset, (fs::path(args.out_dir) / "synth.csv").string());
  dfgp::save_synth_truth_csv(result, (fs::path(args.out_dir) / "synth_truth.csv").string());
  std::cout << "wrote " << result.dataset.series_count() << " series x "
            << result.dataset.length() << " steps\n";
  return 0;
}

// --- gradcheck ---

struct GradcheckArgs {
  std::uint64_t seed = 1;
  std::size_t seeds = 20;
  bool corrupt = false;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  dfgp::GradcheckOptions options;
  options.first_seed = args.seed;
  options.seed_count = args.seeds;
  options.corrupt_backward = args.corrupt;
  const dfgp::GradcheckReport report = dfgp::run_gradcheck(options);
  for (const auto& group : report.groups) {
    std::printf("%-12s max rel err %.3e %s\n", group.name.c_str(), group.max_rel_error,
                group.max_rel_error < report.tolerance ? "ok" : "FAIL");
  }
  std::printf("gradcheck %s (tolerance %.1e, %zu seeds)\n", report.passed ? "PASS" : "FAIL",
              report.tolerance, report.seeds);
  return report.passed ? 0 : 1;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Deep-factor + Gaussian-process forecaster for collections of related time series"};
  app.require_subcommand(1);

  TrainArgs train_args;
  std::uint64_t seed_flag = 0;
  auto* train_command = app.add_subcommand("train", "Fit the model by maximum likelihood");
  train_command->add_option("--data", train_args.data_path, "long-format CSV")->required();
  train_command->add_option("--config", train_args.config_path, "key=value config file");
  train_command->add_option("--out", train_args.out_dir, "output directory")->required();
  auto* seed_option = train_command->add_option("--seed", seed_flag, "overrides the config seed");

  ForecastArgs forecast_args;
  std::size_t horizon_flag = 0;
  auto* forecast_command = app.add_subcommand("forecast", "Predictive distribution per series");
  forecast_command->add_option("--ckpt", forecast_args.ckpt_path, "model checkpoint")->required();
  forecast_command->add_option("--data", forecast_args.data_path, "long-format CSV")->required();
  auto* horizon_option =
      forecast_command->add_option("--horizon", horizon_flag, "steps to forecast");
  forecast_command->add_option("--out", forecast_args.out_path, "forecast CSV")->required();
  forecast_command->add_option("--plot-data", forecast_args.plot_path,
                               "also write a tidy history+bands CSV");

  EvaluateArgs evaluate_args;
  auto* evaluate_command = app.add_subcommand("evaluate", "Score a forecast file against actuals");
  evaluate_command->add_option("--forecast", evaluate_args.forecast_path, "forecast CSV")->required();
  evaluate_command->add_option("--actuals", evaluate_args.actuals_path, "actuals CSV")->required();
  evaluate_command->add_option("--out", evaluate_args.out_path, "report file")->required();

  SynthArgs synth_args;
  auto* synth_command = app.add_subcommand("synth", "Sample a synthetic dataset from the model");
  synth_command->add_option("--config", synth_args.config_path, "key=value config file");
  synth_command->add_option("--out", synth_args.out_dir, "output directory")->required();

  GradcheckArgs gradcheck_args;
  auto* gradcheck_command =
      app.add_subcommand("gradcheck", "Finite-difference audit of all gradients");
  gradcheck_command->add_option("--seed", gradcheck_args.seed, "first seed");
  gradcheck_command->add_option("--seeds", gradcheck_args.seeds, "number of seeds");
  gradcheck_command->add_flag("--corrupt-backward", gradcheck_args.corrupt,
                              "test fixture: inject a wrong backward rule")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*seed_option) train_args.seed = seed_flag;
  if (*horizon_option) forecast_args.horizon = horizon_flag;

  if (*train_command) return cmd_train(train_args);
  if (*forecast_command) return cmd_forecast(forecast_args);
  if (*evaluate_command) return cmd_evaluate(evaluate_args);
  if (*synth_command) return cmd_synth(synth_args);
  if (*gradcheck_command) return cmd_gradcheck(gradcheck_args);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const dfgp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const dfgp::DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const dfgp::ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const dfgp::GapError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const dfgp::LengthError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const dfgp::UnknownSeriesError& e) {
    std::cerr << "unknown series: " << e.what() << "\n";
    return 5;
  } catch (const KeyMismatchError& e) {
    std::cerr << "evaluation key mismatch: " << e.what() << "\n";
    return 6;
  } catch (const dfgp::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const dfgp::NotPositiveDefiniteError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const dfgp::SingularError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const dfgp::ShapeError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const dfgp::TapeError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const dfgp::DegenerateNormalizerError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
