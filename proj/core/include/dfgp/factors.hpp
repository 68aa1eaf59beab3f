#pragma once

#include <cstddef>

#include "dfgp/linalg.hpp"
#include "dfgp/rng.hpp"
#include "dfgp/tensor.hpp"

namespace dfgp {

/// Single-layer LSTM parameters with the four gates fused along axis 0 in
/// the order (input, forget, cell, output):
///   w_input (4H x d), w_recur (4H x H), bias (4H).
struct LSTMParams {
  Tensor w_input;
  Tensor w_recur;
  Tensor bias;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
};

/// Maps the LSTM hidden state to the K global factors: g_t = weight h_t + bias
/// with weight stored as (K x H).
struct FactorProjection {
  Tensor weight;
  Tensor bias;
};

/// One loading row per training series; row i weights the K factors for
/// series i.
struct EmbeddingTable {
  Tensor table;  // N x K

  std::size_t series_count() const { return table.dim(0); }
  std::size_t factor_count() const { return table.dim(1); }
};

struct LSTMState {
  Tensor hidden;
  Tensor cell;

  static LSTMState zero(std::size_t hidden_dim);
};

struct FactorInitConfig {
  std::size_t input_dim = 5;
  std::size_t hidden_dim = 50;
  std::size_t factor_count = 10;
  std::size_t series_count = 1;
};

/// Standard LSTM cell update, fully on the tape.
LSTMState lstm_step(const LSTMState& state, const Tensor& covariates, const LSTMParams& params);

/// Unrolls the LSTM from a zero state over the covariate rows and projects
/// every hidden state, producing the (T x K) factor matrix whose row t is
/// g_t. Depends only on the covariates, never on a series index.
Tensor global_factors(const Matrix& covariates, const LSTMParams& params,
                      const FactorProjection& projection);

/// f_t = w . g_t for every row of the factor matrix.
Tensor fixed_effect(const Tensor& loadings, const Tensor& factors);

struct FactorModelParams {
  LSTMParams lstm;
  FactorProjection projection;
  EmbeddingTable embeddings;
};

/// Deterministic initialization: weights ~ U(-s, s) with s = 1/sqrt(H),
/// forget-gate bias 1, other biases 0, embeddings ~ N(0, 1/sqrt(K)).
FactorModelParams init_params(std::uint64_t seed, const FactorInitConfig& config);

}  // namespace dfgp
