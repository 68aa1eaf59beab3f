#include "dfgp/factors.hpp"

#include <cmath>
#include <utility>

namespace dfgp {

LSTMState LSTMState::zero(std::size_t hidden_dim) {
  return LSTMState{Tensor::zeros({hidden_dim}), Tensor::zeros({hidden_dim})};
}

LSTMState lstm_step(const LSTMState& state, const Tensor& covariates, const LSTMParams& params) {
  if (covariates.rank() != 1 || covariates.dim(0) != params.input_dim) {
    throw ShapeError("lstm_step: covariate vector has the wrong dimension");
  }
  const std::size_t h = params.hidden_dim;

  const Tensor pre =
      add(add(matmul(params.w_input, covariates), matmul(params.w_recur, state.hidden)),
          params.bias);

  const Tensor gate_in = sigmoid(slice(pre, 0, h));
  const Tensor gate_forget = sigmoid(slice(pre, h, 2 * h));
  const Tensor candidate = tanh(slice(pre, 2 * h, 3 * h));
  const Tensor gate_out = sigmoid(slice(pre, 3 * h, 4 * h));

  const Tensor cell = add(mul(gate_forget, state.cell), mul(gate_in, candidate));
  const Tensor hidden = mul(gate_out, tanh(cell));
  return LSTMState{hidden, cell};
}

Tensor global_factors(const Matrix& covariates, const LSTMParams& params,
                      const FactorProjection& projection) {
  const std::size_t steps = covariates.rows;
  if (steps == 0) throw ShapeError("global_factors: empty covariate sequence");
  const std::size_t k = projection.weight.dim(0);

  LSTMState state = LSTMState::zero(params.hidden_dim);
  std::vector<Tensor> rows;
  rows.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> x(covariates.data.begin() + static_cast<std::ptrdiff_t>(t * covariates.cols),
                          covariates.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * covariates.cols));
    state = lstm_step(state, Tensor({covariates.cols}, std::move(x)), params);
    rows.push_back(add(matmul(projection.weight, state.hidden), projection.bias));
  }
  return reshape(concat(rows), {steps, k});
}

Tensor fixed_effect(const Tensor& loadings, const Tensor& factors) {
  if (loadings.rank() != 1 || factors.rank() != 2 || factors.dim(1) != loadings.dim(0)) {
    throw ShapeError("fixed_effect: loadings must match the factor matrix's second axis");
  }
  return matmul(factors, loadings);
}

FactorModelParams init_params(std::uint64_t seed, const FactorInitConfig& config) {
  Rng rng(seed);
  const std::size_t d = config.input_dim;
  const std::size_t h = config.hidden_dim;
  const std::size_t k = config.factor_count;
  const std::size_t n = config.series_count;
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));

  auto uniform_tensor = [&](Shape shape) {
    std::size_t count = 1;
    for (std::size_t dim : shape) count *= dim;
    std::vector<double> values(count);
    for (double& v : values) v = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(values), true);
  };

  FactorModelParams params;
  params.lstm.input_dim = d;
  params.lstm.hidden_dim = h;
  params.lstm.w_input = uniform_tensor({4 * h, d});
  params.lstm.w_recur = uniform_tensor({4 * h, h});

  std::vector<double> bias(4 * h, 0.0);
  for (std::size_t i = h; i < 2 * h; ++i) bias[i] = 1.0;  // forget gate
  params.lstm.bias = Tensor({4 * h}, std::move(bias), true);

  params.projection.weight = uniform_tensor({k, h});
  params.projection.bias = Tensor::zeros({k}, true);

  const double embed_std = 1.0 / std::sqrt(static_cast<double>(k));
  std::vector<double> table(n * k);
  for (double& v : table) v = rng.normal(0.0, embed_std);
  params.embeddings.table = Tensor({n, k}, std::move(table), true);
  return params;
}

}  // namespace dfgp
