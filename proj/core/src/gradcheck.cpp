#include "dfgp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dfgp/model.hpp"
#include "dfgp/rng.hpp"

namespace dfgp {

namespace {

constexpr std::size_t kSeries = 3;
constexpr std::size_t kWindow = 20;
constexpr std::size_t kFactors = 2;
constexpr std::size_t kHidden = 8;

ModelConfig miniature_config() {
  ModelConfig config;
  config.factor_count = kFactors;
  config.hidden_dim = kHidden;
  config.train_window = kWindow;
  config.horizon = 1;
  config.epochs = 0;
  return config;
}

TrainData miniature_data(std::uint64_t seed, const ModelConfig& config) {
  Rng rng(seed * 7919 + 17);
  TrainData data;
  data.timestamps.resize(kWindow);
  const std::int64_t start = 1388966400;  // hourly grid, fixed origin
  for (std::size_t t = 0; t < kWindow; ++t) {
    data.timestamps[t] = start + static_cast<std::int64_t>(t) * kSecondsPerHour;
  }
  FeatureSpec spec = config.feature_spec;
  spec.linear_denominator = config.train_window;
  data.covariates = build_features(data.timestamps, spec);
  data.input_dim = spec.dimension();
  data.gp_inputs.resize(kWindow);
  for (std::size_t t = 0; t < kWindow; ++t) {
    data.gp_inputs[t] = static_cast<double>(t) / static_cast<double>(kWindow);
  }
  for (std::size_t s = 0; s < kSeries; ++s) {
    SeriesWindow window;
    window.row = s;
    window.id = "grad-" + std::to_string(s);
    window.raw.resize(kWindow);
    for (double& v : window.raw) v = rng.normal(0.0, 1.0);
    window.scaler = SeriesScaler::fit(window.raw);
    window.scaled = window.scaler.apply(window.raw);
    data.windows.push_back(std::move(window));
  }
  return data;
}

BatchLossHooks make_hooks(bool corrupt) {
  BatchLossHooks hooks;
  if (corrupt) {
    hooks.transform_factors = [](const Tensor& factors) {
      return custom_gradient_node(factors, {factors},
                                  [](std::span<const double> out_grad) {
                                    std::vector<double> wrong(out_grad.begin(), out_grad.end());
                                    for (double& g : wrong) g *= 1.001;
                                    return std::vector<std::vector<double>>{std::move(wrong)};
                                  });
    };
  }
  return hooks;
}

double loss_value(const ModelParams& params, const TrainData& data,
                  std::span<const std::size_t> rows) {
  TapeSuspend suspend;
  return batch_loss(params, data, rows).value();
}

const char* group_of(const std::string& parameter_name) {
  if (parameter_name.rfind("lstm.", 0) == 0) return "lstm";
  if (parameter_name.rfind("projection.", 0) == 0) return "projection";
  if (parameter_name.rfind("embeddings.", 0) == 0) return "embeddings";
  return "kernel";
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  const ModelConfig config = miniature_config();
  const std::vector<std::size_t> rows = {0, 1, 2};
  const BatchLossHooks hooks = make_hooks(options.corrupt_backward);

  std::map<std::string, double> worst;
  for (const char* g : {"lstm", "projection", "embeddings", "kernel"}) worst[g] = 0.0;

  for (std::size_t s = 0; s < options.seed_count; ++s) {
    const std::uint64_t seed = options.first_seed + s;
    const TrainData data = miniature_data(seed, config);
    std::vector<std::string> ids;
    for (const SeriesWindow& w : data.windows) ids.push_back(w.id);
    ModelParams params = init_model_params(config, ids, data.input_dim, seed);

    // Autodiff gradients of the full batch loss.
    Tape tape;
    {
      TapeScope scope(tape);
      const Tensor loss = batch_loss(params, data, rows, hooks);
      params.zero_grad();
      tape.backward(loss);
    }

    for (auto& [name, tensor] : params.named_parameters()) {
      std::vector<double> autodiff(tensor.size(), 0.0);
      if (tensor.has_grad()) {
        autodiff.assign(tensor.grad().begin(), tensor.grad().end());
      }

      // Central differences through the same loss, probing this tensor while
      // the others stay fixed.
      const std::vector<double> original(tensor.values().begin(), tensor.values().end());
      Tensor probe_target = tensor;
      const Tensor fd = finite_difference_gradient(
          [&](const Tensor& probe) {
            std::copy(probe.values().begin(), probe.values().end(),
                      probe_target.mutable_values().begin());
            return loss_value(params, data, rows);
          },
          tensor.detached_copy(), 1e-5);
      std::copy(original.begin(), original.end(), probe_target.mutable_values().begin());

      double& slot = worst[group_of(name)];
      for (std::size_t i = 0; i < autodiff.size(); ++i) {
        const double denom = std::max({1.0, std::abs(autodiff[i]), std::abs(fd[i])});
        slot = std::max(slot, std::abs(autodiff[i] - fd[i]) / denom);
      }
    }
  }

  GradcheckReport report;
  report.seeds = options.seed_count;
  report.passed = true;
  for (const char* g : {"lstm", "projection", "embeddings", "kernel"}) {
    report.groups.push_back(GradcheckGroup{g, worst[g]});
    report.passed = report.passed && worst[g] < report.tolerance;
  }
  return report;
}

}  // namespace dfgp
